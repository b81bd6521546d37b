#include "fedmvt/pseudo.hpp"

namespace fedmvt {

namespace {

int argmax_row(const Mat& m, int r) {
    int best = 0;
    for (int c = 1; c < m.cols; ++c)
        if (m.at(r, c) > m.at(r, best)) best = c;  // ties -> lowest index
    return best;
}

// Forward on a scratch tape without disturbing the classifier's binding to
// the training tape.
Mat classifier_values(SoftmaxClassifier& f, const Mat& input) {
    Tensor& w = f.head.weight;
    Tensor& b = f.head.bias;
    const NodeId wn = w.node;
    const uint64_t wt = w.tape;
    const NodeId bn = b.node;
    const uint64_t bt = b.tape;
    Tape scratch;
    Tensor out = forward_classifier(scratch, f, scratch.constant(input));
    w.node = wn;
    w.tape = wt;
    b.node = bn;
    b.tape = bt;
    return out.m;
}

}  // namespace

PseudoCandidates candidate_labels(SoftmaxClassifier& fA, SoftmaxClassifier& fB,
                                  SoftmaxClassifier& fAB, const Mat& r_tilde_a, const Mat& r_b) {
    Mat fb = classifier_values(fB, r_b);
    return candidate_labels_with_fb(fA, fAB, r_tilde_a, r_b, fb);
}

PseudoCandidates candidate_labels_with_fb(SoftmaxClassifier& fA, SoftmaxClassifier& fAB,
                                          const Mat& r_tilde_a, const Mat& r_b,
                                          const Mat& fb_probs) {
    if (r_tilde_a.rows != r_b.rows || fb_probs.rows != r_b.rows)
        throw ShapeError("candidate_labels: row mismatch across views " + r_tilde_a.shape_str() +
                         " " + r_b.shape_str() + " " + fb_probs.shape_str());
    PseudoCandidates c;
    c.dist_fA = classifier_values(fA, r_tilde_a);
    c.dist_fB = fb_probs;
    // Classifier input order is [B-side ; A-side].
    Mat joint(r_b.rows, r_b.cols + r_tilde_a.cols);
    for (int r = 0; r < joint.rows; ++r) {
        std::copy_n(r_b.row_ptr(r), r_b.cols, joint.row_ptr(r));
        std::copy_n(r_tilde_a.row_ptr(r), r_tilde_a.cols, joint.row_ptr(r) + r_b.cols);
    }
    c.dist_fAB = classifier_values(fAB, joint);
    return c;
}

Selection select(const PseudoCandidates& c, double t, SelectionRule rule) {
    if (!(t > 0.0 && t < 1.0) && t != 1.0)
        throw std::invalid_argument("select: threshold must be in (0,1]");
    if (!c.dist_fA.same_shape(c.dist_fB) || !c.dist_fA.same_shape(c.dist_fAB))
        throw ShapeError("select: candidate shape mismatch");
    Selection out;
    out.considered = c.rows();
    const int num_classes = c.dist_fA.cols;
    std::vector<int> agreed;
    for (int r = 0; r < c.rows(); ++r) {
        const int a1 = argmax_row(c.dist_fA, r);
        const int a2 = argmax_row(c.dist_fB, r);
        const int a3 = argmax_row(c.dist_fAB, r);
        int label = -1;
        if (a1 == a2 || a1 == a3)
            label = a1;
        else if (a2 == a3)
            label = a2;
        if (label < 0) continue;
        const double p1 = c.dist_fA.at(r, a1);
        const double p2 = c.dist_fB.at(r, a2);
        const double p3 = c.dist_fAB.at(r, a3);
        bool all_pass = true, any_pass = false;
        auto consider = [&](int am, double p) {
            if (am != label) return;
            all_pass = all_pass && p > t;
            any_pass = any_pass || p > t;
        };
        consider(a1, p1);
        consider(a2, p2);
        consider(a3, p3);
        const bool pass = (rule == SelectionRule::AllAgreeingExceedT) ? all_pass : any_pass;
        if (pass) {
            out.indices.push_back(r);
            agreed.push_back(label);
        }
    }
    out.labels = Mat(static_cast<int>(out.indices.size()), num_classes);
    for (size_t i = 0; i < agreed.size(); ++i) out.labels.at(static_cast<int>(i), agreed[i]) = 1.0;
    return out;
}

EnlargedTrainingSet build_training_sets(Tape& tape, const TrainingSetParts& parts,
                                        const Selection& sel) {
    EnlargedTrainingSet chi;
    chi.n_ol = parts.ol_b.rows();
    chi.n_a_nl = parts.anl_a.on_tape() ? parts.anl_a.rows() : 0;
    chi.n_pseudo = static_cast<int>(sel.indices.size());

    std::vector<Tensor> b_parts{parts.ol_b}, a_parts{parts.ol_a};
    std::vector<const Mat*> label_parts{&parts.ol_labels};
    if (chi.n_a_nl > 0) {
        b_parts.push_back(parts.anl_b_est);
        a_parts.push_back(parts.anl_a);
        label_parts.push_back(&parts.anl_labels);
    }
    if (chi.n_pseudo > 0) {
        for (int i : sel.indices)
            if (i < 0 || i >= parts.bnl_b.rows())
                throw std::out_of_range("build_training_sets: selection index out of range");
        b_parts.push_back(tape.gather_rows(parts.bnl_b, sel.indices));
        a_parts.push_back(tape.gather_rows(parts.bnl_a_est, sel.indices));
        label_parts.push_back(&sel.labels);
    }
    chi.b_side = b_parts.size() == 1 ? b_parts[0] : tape.concat_samples(b_parts);
    chi.a_side = a_parts.size() == 1 ? a_parts[0] : tape.concat_samples(a_parts);

    int rows = 0;
    for (const Mat* l : label_parts) rows += l->rows;
    chi.labels = Mat(rows, parts.ol_labels.cols);
    int r = 0;
    for (const Mat* l : label_parts) {
        if (!l->v.empty()) std::copy_n(l->v.data(), l->v.size(), chi.labels.row_ptr(r));
        r += l->rows;
    }
    chi.provenance.assign(static_cast<size_t>(chi.n_ol + chi.n_a_nl), Provenance::GroundTruth);
    chi.provenance.insert(chi.provenance.end(), static_cast<size_t>(chi.n_pseudo), Provenance::Pseudo);
    return chi;
}

Tensor chi_full_input(Tape& tape, const EnlargedTrainingSet& chi) {
    return tape.concat_features(chi.b_side, chi.a_side);
}

}  // namespace fedmvt
