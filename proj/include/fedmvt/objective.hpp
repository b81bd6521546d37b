#pragma once

#include <optional>

#include "fedmvt/nn.hpp"
#include "fedmvt/tensor.hpp"

namespace fedmvt {

enum class OrthVariant : uint8_t {
    InnerProduct,  // mean squared per-row inner product (default)
    OuterProduct,  // literal outer-product Frobenius reading
};

/// Weights of the five-term extended objective; the three classifier losses
/// always carry unit weight.
struct LossWeights {
    double lambda1 = 0.1;  // A-side overlap estimation distance
    double lambda2 = 0.1;  // B-side overlap estimation distance
    double lambda3 = 0.1;  // shared-representation alignment
    double lambda4 = 0.1;  // A orthogonality
    double lambda5 = 0.1;  // B orthogonality
    void validate() const;
};

/// Scalar component values of one step. Components that were skipped (empty
/// batch part or zero weight) read 0 and are flagged.
struct LossReport {
    double total = 0.0;
    double fed = 0.0;
    double local_a = 0.0;
    double local_b = 0.0;
    double dist_ab = 0.0;
    double orth_a = 0.0;
    double orth_b = 0.0;
    double dist_a = 0.0;
    double dist_b = 0.0;
    bool fed_present = false;
    bool local_a_present = false;
    bool local_b_present = false;
    bool dist_ab_present = false;
    bool orth_a_present = false;
    bool orth_b_present = false;
    bool dist_a_present = false;
    bool dist_b_present = false;
    int pseudo_selected = 0;
    int pseudo_candidates = 0;
    double weighted_sum(const LossWeights& w) const;
};

/// Scalar tensors of the components present this step.
struct LossComponents {
    std::optional<Tensor> fed;
    std::optional<Tensor> local_a;
    std::optional<Tensor> local_b;
    std::optional<Tensor> dist_a;
    std::optional<Tensor> dist_b;
    std::optional<Tensor> dist_ab;
    std::optional<Tensor> orth_a;
    std::optional<Tensor> orth_b;
};

Tensor loss_shared_alignment(Tape& tape, const Tensor& rc_a_ol, const Tensor& rc_b_ol);
Tensor loss_orthogonality(Tape& tape, const Tensor& ru, const Tensor& rc, OrthVariant variant);
Tensor loss_classifier(Tape& tape, SoftmaxClassifier& f, const Tensor& reps, const Tensor& labels);

/// total = fed + local_a + local_b + l1*dist_a + l2*dist_b + l3*dist_ab
///       + l4*orth_a + l5*orth_b, skipping absent components.
std::pair<Tensor, LossReport> total_objective(Tape& tape, const LossComponents& parts,
                                              const LossWeights& w);

}  // namespace fedmvt
