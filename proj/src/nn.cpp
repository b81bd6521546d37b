#include "fedmvt/nn.hpp"

#include <cmath>

#include "fedmvt/rng.hpp"

namespace fedmvt {

DenseLayer::DenseLayer(int in, int out, Activation act) : activation(act) {
    if (in < 1 || out < 1) throw std::invalid_argument("DenseLayer: widths must be >= 1");
    weight = Tensor(Mat(in, out), true);
    bias = Tensor(Mat(1, out), true);
}

Tensor forward_layer(Tape& tape, DenseLayer& layer, const Tensor& x) {
    if (x.cols() != layer.in_width())
        throw ShapeError("forward_layer: input " + x.m.shape_str() + " does not match weight " +
                         layer.weight.m.shape_str());
    if (layer.weight.tape != tape.id()) tape.watch(layer.weight);
    if (layer.bias.tape != tape.id()) tape.watch(layer.bias);
    Tensor z = tape.add_row_vector(tape.matmul(x, layer.weight), layer.bias);
    return layer.activation == Activation::Relu ? tape.relu(z) : z;
}

RepresentationNet::RepresentationNet(int input_width, int hidden_units, int output_dim) {
    layers.emplace_back(input_width, hidden_units, Activation::Relu);
    layers.emplace_back(hidden_units, output_dim, Activation::None);
}

std::vector<Tensor*> RepresentationNet::params() {
    std::vector<Tensor*> out;
    for (DenseLayer& l : layers) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

Tensor forward_net(Tape& tape, RepresentationNet& net, const Tensor& x) {
    Tensor h = x;
    for (DenseLayer& l : net.layers) h = forward_layer(tape, l, h);
    return h;
}

std::vector<Tensor*> SoftmaxClassifier::params() { return {&head.weight, &head.bias}; }

Tensor forward_classifier(Tape& tape, SoftmaxClassifier& f, const Tensor& r) {
    return tape.softmax_rows(forward_layer(tape, f.head, r));
}

void init_params(DenseLayer& layer, std::mt19937_64& rng) {
    const int in = layer.in_width();
    const int out = layer.out_width();
    const double limit = std::sqrt(6.0 / (in + out));
    for (double& w : layer.weight.m.v) w = uniform(rng, -limit, limit);
    for (double& b : layer.bias.m.v) b = 0.0;
    layer.weight.node = kNoNode;
    layer.weight.tape = 0;
    layer.bias.node = kNoNode;
    layer.bias.tape = 0;
}

void init_params(RepresentationNet& net, uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (DenseLayer& l : net.layers) init_params(l, rng);
}

void init_params(SoftmaxClassifier& f, uint64_t seed) {
    std::mt19937_64 rng(seed);
    init_params(f.head, rng);
}

void sgd_step(const std::vector<Tensor*>& params, const GradMap& grads, double lr) {
    for (Tensor* p : params) {
        if (p->node == kNoNode)
            throw std::logic_error("sgd_step: parameter not bound to the step's tape");
        auto it = grads.find(p->node);
        if (it == grads.end()) throw std::logic_error("sgd_step: missing gradient entry");
        const Mat& g = it->second;
        if (!g.same_shape(p->m)) throw ShapeError("sgd_step: gradient " + g.shape_str() + " vs param " + p->m.shape_str());
        for (size_t i = 0; i < p->m.v.size(); ++i) p->m.v[i] -= lr * g.v[i];
    }
}

}  // namespace fedmvt
