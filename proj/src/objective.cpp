#include "fedmvt/objective.hpp"

#include <cmath>

namespace fedmvt {

void LossWeights::validate() const {
    for (double l : {lambda1, lambda2, lambda3, lambda4, lambda5})
        if (!(l >= 0.0) || !std::isfinite(l))
            throw std::invalid_argument("LossWeights: lambdas must be finite and >= 0");
}

double LossReport::weighted_sum(const LossWeights& w) const {
    return fed + local_a + local_b + w.lambda1 * dist_a + w.lambda2 * dist_b + w.lambda3 * dist_ab +
           w.lambda4 * orth_a + w.lambda5 * orth_b;
}

Tensor loss_shared_alignment(Tape& tape, const Tensor& rc_a_ol, const Tensor& rc_b_ol) {
    return tape.mean_sq_row_distance(rc_a_ol, rc_b_ol);
}

Tensor loss_orthogonality(Tape& tape, const Tensor& ru, const Tensor& rc, OrthVariant variant) {
    return variant == OrthVariant::InnerProduct ? tape.mean_sq_row_dot(ru, rc)
                                                : tape.mean_sq_outer_fro(ru, rc);
}

Tensor loss_classifier(Tape& tape, SoftmaxClassifier& f, const Tensor& reps, const Tensor& labels) {
    return tape.cross_entropy_mean(forward_classifier(tape, f, reps), labels);
}

std::pair<Tensor, LossReport> total_objective(Tape& tape, const LossComponents& parts,
                                              const LossWeights& w) {
    w.validate();
    LossReport report;
    std::optional<Tensor> total;
    auto fold = [&](const std::optional<Tensor>& part, double weight, double& slot, bool& flag) {
        if (!part) return;
        slot = part->scalar();
        flag = true;
        Tensor term = (weight == 1.0) ? *part : tape.scale(*part, weight);
        total = total ? tape.add(*total, term) : term;
    };
    fold(parts.fed, 1.0, report.fed, report.fed_present);
    fold(parts.local_a, 1.0, report.local_a, report.local_a_present);
    fold(parts.local_b, 1.0, report.local_b, report.local_b_present);
    fold(parts.dist_a, w.lambda1, report.dist_a, report.dist_a_present);
    fold(parts.dist_b, w.lambda2, report.dist_b, report.dist_b_present);
    fold(parts.dist_ab, w.lambda3, report.dist_ab, report.dist_ab_present);
    fold(parts.orth_a, w.lambda4, report.orth_a, report.orth_a_present);
    fold(parts.orth_b, w.lambda5, report.orth_b, report.orth_b_present);
    if (!total) throw std::invalid_argument("total_objective: no loss components present");
    report.total = total->scalar();
    return {*total, report};
}

}  // namespace fedmvt
