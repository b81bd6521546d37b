#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "fedmvt/tensor.hpp"

namespace fedmvt {

enum class Activation : uint8_t { None, Relu };

/// One fully connected layer. weight and bias are requires_grad leaves that
/// persist across steps; forward() re-binds them to the step's tape.
struct DenseLayer {
    Tensor weight;  // in x out
    Tensor bias;    // 1 x out
    Activation activation = Activation::None;

    DenseLayer() = default;
    DenseLayer(int in, int out, Activation act);
    int in_width() const { return weight.rows(); }
    int out_width() const { return weight.cols(); }
};

Tensor forward_layer(Tape& tape, DenseLayer& layer, const Tensor& x);

/// Stack of dense layers producing a d-wide representation.
struct RepresentationNet {
    std::vector<DenseLayer> layers;

    RepresentationNet() = default;
    /// input -> hidden relu -> d linear.
    RepresentationNet(int input_width, int hidden_units, int output_dim);
    int input_width() const { return layers.front().in_width(); }
    int output_dim() const { return layers.back().out_width(); }
    std::vector<Tensor*> params();
};

Tensor forward_net(Tape& tape, RepresentationNet& net, const Tensor& x);

/// Single linear layer followed by row softmax.
struct SoftmaxClassifier {
    DenseLayer head;
    SoftmaxClassifier() = default;
    SoftmaxClassifier(int input_width, int num_classes) : head(input_width, num_classes, Activation::None) {}
    int input_width() const { return head.in_width(); }
    int num_classes() const { return head.out_width(); }
    std::vector<Tensor*> params();
};

Tensor forward_classifier(Tape& tape, SoftmaxClassifier& f, const Tensor& r);

/// Glorot-uniform weights, zero biases; bit-reproducible per seed.
void init_params(DenseLayer& layer, std::mt19937_64& rng);
void init_params(RepresentationNet& net, uint64_t seed);
void init_params(SoftmaxClassifier& f, uint64_t seed);

/// p <- p - lr * grads[p.node], in place. Throws if a param has no entry.
void sgd_step(const std::vector<Tensor*>& params, const GradMap& grads, double lr);

}  // namespace fedmvt
