#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedmvt/tensor.hpp"

namespace fedmvt {

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Two-party vertical split: party A holds features_a + labels_a, party B
/// holds features_b. overlap_pairs aligns rows across the parties; the
/// non-overlap index lists are disjoint from the overlap indices on each side.
struct VerticalDataset {
    Mat features_a;               // N_A x a
    Mat labels_a;                 // N_A x C, one-hot
    Mat features_b;               // N_B x b
    std::vector<std::pair<int, int>> overlap_pairs;
    std::vector<int> nonoverlap_a;
    std::vector<int> nonoverlap_b;
    std::vector<long long> ids_a;  // external sample ids (CSV round-trips)
    std::vector<long long> ids_b;

    int num_classes() const { return labels_a.cols; }
    int n_overlap() const { return static_cast<int>(overlap_pairs.size()); }
    void validate() const;  // throws on any structural invariant violation
};

/// One step's worth of rows from the three pools. Overlap rows stay
/// index-aligned between the parties. Empty pools yield 0-row parts.
struct TriBatch {
    Mat ol_xa, ol_ya, ol_xb;
    Mat a_xa, a_ya;
    Mat b_xb;
    std::vector<int> ol_rows_a, ol_rows_b, a_rows, b_rows;  // source row indices
};

VerticalDataset vertical_partition(const Mat& features, const Mat& labels, int split_col,
                                   double overlap_fraction, double nl_fraction_a,
                                   double nl_fraction_b, uint64_t seed);

/// Gaussian two-view class clusters; cross_view_corr in [0,1] sets how much
/// class signal is shared between the A and B column blocks.
struct SyntheticSpec {
    int n = 1000;
    int features_a = 16;
    int features_b = 16;
    int classes = 4;
    double class_sep = 2.0;
    double cross_view_corr = 0.7;
    uint64_t seed = 42;
};
std::pair<Mat, Mat> make_synthetic(const SyntheticSpec& spec);

/// Epoch iterator: each pool shuffled independently per epoch; the epoch has
/// ceil(max pool / its batch) steps and shorter pools cycle with reshuffles.
class TriBatchIterator {
public:
    /// ol_only drops the non-overlap pools entirely (vanilla-VFL batching).
    TriBatchIterator(const VerticalDataset& ds, int batch_ol, int batch_a, int batch_b,
                     uint64_t seed, int epoch, bool ol_only = false);
    int steps_per_epoch() const { return steps_; }
    TriBatch next();
    bool done() const { return step_ >= steps_; }

private:
    const VerticalDataset& ds_;
    int batch_ol_, batch_a_, batch_b_;
    uint64_t seed_;
    int epoch_;
    int steps_ = 0;
    int step_ = 0;
    std::vector<int> order_ol_, order_a_, order_b_;
    size_t pos_ol_ = 0, pos_a_ = 0, pos_b_ = 0;
    int wraps_ol_ = 0, wraps_a_ = 0, wraps_b_ = 0;

    std::vector<int> take(std::vector<int>& order, size_t& pos, int& wraps, int batch,
                          const char* pool);
};

VerticalDataset load_csv(const std::string& path_a, const std::string& path_b,
                         const std::string& path_overlap_map);
void write_csv(const VerticalDataset& ds, const std::string& path_a, const std::string& path_b,
               const std::string& path_overlap_map);

// Row helpers shared by trainers and evaluation.
Mat gather_mat_rows(const Mat& m, const std::vector<int>& idx);

}  // namespace fedmvt
