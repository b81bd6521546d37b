#pragma once

#include "fedmvt/tensor.hpp"

namespace fedmvt {

enum class Party : uint8_t { A, B };
enum class ReprOrigin : uint8_t { Learned, Estimated };

/// Per-party unique + shared representation of one sample batch.
struct RepresentationPair {
    Tensor unique;
    Tensor shared;
    Party party = Party::A;
    ReprOrigin origin = ReprOrigin::Learned;

    int rows() const { return unique.rows(); }
    int dim() const { return unique.cols(); }
};

/// Full representation [r_u ; r_c] along the feature axis.
Tensor full_representation(Tape& tape, const RepresentationPair& r);

struct EstimationOptions {
    // Query row i is the same sample as key/value row self_rows[i]; mask that
    // entry out of the softmax. Empty disables masking.
    std::vector<int> self_rows;
};

/// softmax(queries keys^T / sqrt(d)) applied to the keys themselves.
Tensor estimate_shared(Tape& tape, const Tensor& queries, const Tensor& keys_values,
                       const EstimationOptions& opt = {});

/// Similarities in the query party's space, applied to the other party's
/// index-aligned overlap rows.
Tensor estimate_unique(Tape& tape, const Tensor& queries, const Tensor& keys, const Tensor& values,
                       const EstimationOptions& opt = {});

/// Index-aligned overlap representations of both parties; the anchors for the
/// unique-path estimator.
struct OverlapAnchors {
    Tensor a_unique;
    Tensor b_unique;
};

/// Estimate the missing `for_party` representations of the other party's
/// samples: shared part against `shared_pool`, unique part against the
/// overlap anchors.
RepresentationPair estimate_missing(Tape& tape, Party for_party, const RepresentationPair& source,
                                    const OverlapAnchors& anchors, const Tensor& shared_pool,
                                    const EstimationOptions& opt = {});

/// Mean squared row distance between estimated and learned overlap rows.
Tensor overlap_distance_loss(Tape& tape, const Tensor& estimated, const Tensor& learned);

}  // namespace fedmvt
