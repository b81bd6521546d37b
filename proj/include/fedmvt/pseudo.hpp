#pragma once

#include <vector>

#include "fedmvt/nn.hpp"
#include "fedmvt/tensor.hpp"

namespace fedmvt {

/// Three candidate class distributions per unlabeled sample. Plain values:
/// candidate generation never participates in the gradient graph.
struct PseudoCandidates {
    Mat dist_fA;
    Mat dist_fB;
    Mat dist_fAB;
    int rows() const { return dist_fA.rows; }
};

enum class SelectionRule : uint8_t {
    AllAgreeingExceedT,  // every agreeing candidate's max prob must exceed t
    AnyAgreeingExceedsT,
};

struct Selection {
    std::vector<int> indices;  // selected rows, ascending
    Mat labels;                // |indices| x C one-hot
    int considered = 0;
};

/// Forward the three classifiers on detached inputs. r_tilde_a is the
/// estimated A representation, r_b the learned B representation of the same
/// unlabeled rows.
PseudoCandidates candidate_labels(SoftmaxClassifier& fA, SoftmaxClassifier& fB,
                                  SoftmaxClassifier& fAB, const Mat& r_tilde_a, const Mat& r_b);

/// Split-mode variant: f^B ran at party B, its output rows arrive as values.
PseudoCandidates candidate_labels_with_fb(SoftmaxClassifier& fA, SoftmaxClassifier& fAB,
                                          const Mat& r_tilde_a, const Mat& r_b,
                                          const Mat& fb_probs);

/// Argmax ties break toward the lowest class index. A row is selected when at
/// least two argmaxes agree and the agreeing candidates clear threshold t per
/// the rule.
Selection select(const PseudoCandidates& c, double t, SelectionRule rule = SelectionRule::AllAgreeingExceedT);

enum class Provenance : uint8_t { GroundTruth, Pseudo };

/// The enlarged training set: rows of [B-side ; A-side] representations with
/// labels. Views for the three classifiers are column slices.
struct EnlargedTrainingSet {
    Tensor b_side;                       // m x 2d_B (live graph tensors)
    Tensor a_side;                       // m x 2d_A
    Mat labels;                          // m x C
    std::vector<Provenance> provenance;  // per row
    int n_ol = 0;
    int n_a_nl = 0;
    int n_pseudo = 0;

    int rows() const { return b_side.rows(); }
};

Tensor chi_full_input(Tape& tape, const EnlargedTrainingSet& chi);

struct TrainingSetParts {
    // Overlap block (ground-truth labels).
    Tensor ol_b, ol_a;
    Mat ol_labels;
    // A-non-overlap block with estimated B side (ground-truth labels).
    Tensor anl_b_est, anl_a;
    Mat anl_labels;
    // B-non-overlap block with estimated A side (labels come from selection).
    Tensor bnl_b, bnl_a_est;
};

EnlargedTrainingSet build_training_sets(Tape& tape, const TrainingSetParts& parts,
                                        const Selection& sel);

}  // namespace fedmvt
