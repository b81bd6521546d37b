#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "fedmvt/rng.hpp"
#include "fedmvt/tensor.hpp"

namespace fedmvt::testutil {

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1e-4, std::abs(a), std::abs(b)});
}

inline Mat random_mat(int rows, int cols, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    Mat m(rows, cols);
    for (double& x : m.v) x = uniform(rng, lo, hi);
    return m;
}

/// Central-difference gradient oracle for graphs built from leaf matrices.
/// `forward` rebuilds the scalar loss on a fresh tape each evaluation, so the
/// oracle stays independent of the tape's backward path.
using LeafForward = std::function<Tensor(Tape&, std::vector<Tensor>&)>;

inline double max_grad_rel_err(const std::vector<Mat>& inputs, const LeafForward& forward,
                               double h = 1e-5) {
    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(inputs.size());
    for (const Mat& m : inputs) leaves.push_back(tape.leaf(m, true));
    Tensor loss = forward(tape, leaves);
    tape.backward(loss);
    std::vector<Mat> grads;
    for (const Tensor& l : leaves) grads.push_back(tape.grad(l.node));

    auto eval = [&](const std::vector<Mat>& vals) {
        Tape t;
        std::vector<Tensor> ls;
        ls.reserve(vals.size());
        for (const Mat& m : vals) ls.push_back(t.leaf(m, true));
        return forward(t, ls).scalar();
    };
    double worst = 0.0;
    for (size_t i = 0; i < inputs.size(); ++i) {
        for (size_t k = 0; k < inputs[i].v.size(); ++k) {
            std::vector<Mat> plus = inputs;
            std::vector<Mat> minus = inputs;
            plus[i].v[k] += h;
            minus[i].v[k] -= h;
            double fd = (eval(plus) - eval(minus)) / (2.0 * h);
            worst = std::max(worst, rel_err(grads[i].v[k], fd));
        }
    }
    return worst;
}

/// Same oracle over persistent parameters: the loss closure rebinds them to
/// whatever tape it is given.
using ParamForward = std::function<Tensor(Tape&)>;

inline double max_param_grad_rel_err(const std::vector<Tensor*>& params, const ParamForward& loss_fn,
                                     double h = 1e-5) {
    Tape tape;
    Tensor loss = loss_fn(tape);
    tape.backward(loss);
    std::vector<Mat> grads;
    for (Tensor* p : params) grads.push_back(tape.grad(p->node));

    auto eval = [&] {
        Tape t;
        return loss_fn(t).scalar();
    };
    double worst = 0.0;
    for (size_t i = 0; i < params.size(); ++i) {
        for (size_t k = 0; k < params[i]->m.v.size(); ++k) {
            const double orig = params[i]->m.v[k];
            params[i]->m.v[k] = orig + h;
            const double fp = eval();
            params[i]->m.v[k] = orig - h;
            const double fm = eval();
            params[i]->m.v[k] = orig;
            worst = std::max(worst, rel_err(grads[i].v[k], (fp - fm) / (2.0 * h)));
        }
    }
    return worst;
}

}  // namespace fedmvt::testutil
