#include <doctest.h>

#include <cmath>
#include <set>

#include "fedmvt/nn.hpp"
#include "fedmvt/rng.hpp"
#include "test_util.hpp"

using namespace fedmvt;
using namespace fedmvt::testutil;

TEST_CASE("forward_net with zero parameters yields zeros") {
    RepresentationNet net(3, 4, 2);
    Tape t;
    Tensor out = forward_net(t, net, t.constant(Mat::from_rows({{1, -2, 3}, {0.5, 0.5, 0.5}})));
    CHECK(out.m == Mat(2, 2));
}

TEST_CASE("identity linear layer is a passthrough") {
    DenseLayer layer(3, 3, Activation::None);
    layer.weight.m = Mat::identity(3);
    Tape t;
    Mat x = Mat::from_rows({{1, -2, 3}});
    CHECK(forward_layer(t, layer, t.constant(x)).m == x);
}

TEST_CASE("forward_net width mismatch") {
    RepresentationNet net(3, 4, 2);
    Tape t;
    CHECK_THROWS_AS(forward_net(t, net, t.constant(Mat(1, 5))), ShapeError);
}

TEST_CASE("net parameter gradients match finite differences") {
    RepresentationNet net(3, 4, 2);
    init_params(net, 99);
    std::mt19937_64 rng(5);
    Mat x = random_mat(4, 3, rng);
    double err = max_param_grad_rel_err(net.params(), [&](Tape& t) {
        return t.sum_all(forward_net(t, net, t.constant(x)));
    });
    CHECK(err < 1e-6);
}

TEST_CASE("init_params is seed-deterministic") {
    RepresentationNet a(5, 8, 4), b(5, 8, 4), c(5, 8, 4);
    init_params(a, 123);
    init_params(b, 123);
    init_params(c, 124);
    CHECK(a.layers[0].weight.m == b.layers[0].weight.m);
    CHECK(a.layers[1].weight.m == b.layers[1].weight.m);
    CHECK_FALSE(a.layers[0].weight.m == c.layers[0].weight.m);
    CHECK(a.layers[0].bias.m == Mat(1, 8));
}

TEST_CASE("init_params draws stay inside the Glorot bound with near-zero mean") {
    DenseLayer layer(100, 100, Activation::None);
    std::mt19937_64 rng(2024);
    init_params(layer, rng);
    const double limit = std::sqrt(6.0 / 200.0);
    double sum = 0.0;
    for (double w : layer.weight.m.v) {
        CHECK(std::abs(w) <= limit);
        sum += w;
    }
    CHECK(std::abs(sum / layer.weight.m.v.size()) < 0.01);
}

TEST_CASE("classifier rows are distributions; zero weights are uniform") {
    SoftmaxClassifier f(6, 4);
    Tape t;
    std::mt19937_64 rng(8);
    Mat out = forward_classifier(t, f, t.constant(random_mat(3, 6, rng))).m;
    for (int r = 0; r < out.rows; ++r) {
        double sum = 0.0;
        for (int c = 0; c < out.cols; ++c) {
            CHECK(out.at(r, c) == doctest::Approx(0.25).epsilon(1e-12));
            sum += out.at(r, c);
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("classifier output rows sum to one for random weights") {
    SoftmaxClassifier f(5, 3);
    init_params(f, 31);
    std::mt19937_64 rng(9);
    Tape t;
    Mat out = forward_classifier(t, f, t.constant(random_mat(8, 5, rng, -10.0, 10.0))).m;
    for (int r = 0; r < out.rows; ++r) {
        double sum = 0.0;
        for (int c = 0; c < out.cols; ++c) sum += out.at(r, c);
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("classifier output stable under duplicating an input row") {
    SoftmaxClassifier f(4, 3);
    init_params(f, 77);
    std::mt19937_64 rng(10);
    Mat row = random_mat(1, 4, rng);
    Mat doubled(2, 4);
    std::copy(row.v.begin(), row.v.end(), doubled.v.begin());
    std::copy(row.v.begin(), row.v.end(), doubled.v.begin() + 4);
    Tape t;
    Mat out = forward_classifier(t, f, t.constant(doubled)).m;
    for (int c = 0; c < 3; ++c) CHECK(out.at(0, c) == out.at(1, c));
}

TEST_CASE("sgd_step basics") {
    SUBCASE("lr = 0 leaves parameters unchanged") {
        Tensor p(Mat::from_rows({{1, 2}}), true);
        Tape t;
        t.watch(p);
        t.backward(t.sum_all(p));
        sgd_step({&p}, t.leaf_gradients(), 0.0);
        CHECK(p.m == Mat::from_rows({{1, 2}}));
    }
    SUBCASE("w^2 from w=1 with lr=0.1 lands on 0.8") {
        Tensor w(Mat::from_rows({{1.0}}), true);
        Tape t;
        t.watch(w);
        t.backward(t.matmul(w, w));
        sgd_step({&w}, t.leaf_gradients(), 0.1);
        CHECK(w.m.v[0] == doctest::Approx(0.8).epsilon(1e-12));
    }
    SUBCASE("missing gradient entry is an error") {
        Tensor p(Mat(1, 1), true);
        GradMap empty;
        Tape t;
        t.watch(p);
        CHECK_THROWS_AS(sgd_step({&p}, empty, 0.1), std::logic_error);
    }
}

TEST_CASE("sgd decreases a convex quadratic over 100 steps") {
    Tensor w(Mat::from_rows({{3.0, -2.0, 1.0}}), true);
    Mat target = Mat::from_rows({{0.5, 0.25, -1.0}});
    auto loss_value = [&] {
        Tape t;
        t.watch(w);
        Tensor loss = t.mean_sq_row_distance(w, t.constant(target));
        double v = loss.scalar();
        t.backward(loss);
        sgd_step({&w}, t.leaf_gradients(), 0.05);
        return v;
    };
    double first = loss_value();
    double last = first;
    for (int i = 0; i < 99; ++i) {
        double v = loss_value();
        CHECK(v <= last + 1e-12);
        last = v;
    }
    CHECK(last < first);
}

TEST_CASE("linearly separable toy set reaches 99% within 500 steps") {
    // Two well-separated Gaussian blobs in 2D through a hidden-layer net.
    std::mt19937_64 rng(4242);
    const int n = 40;
    Mat x(n, 2), y(n, 2);
    for (int i = 0; i < n; ++i) {
        int cls = i % 2;
        x.at(i, 0) = (cls ? 2.0 : -2.0) + gaussian(rng) * 0.3;
        x.at(i, 1) = (cls ? -1.0 : 1.0) + gaussian(rng) * 0.3;
        y.at(i, cls) = 1.0;
    }
    RepresentationNet net(2, 8, 4);
    SoftmaxClassifier f(4, 2);
    init_params(net, 1);
    init_params(f, 2);
    std::vector<Tensor*> params = net.params();
    params.push_back(&f.head.weight);
    params.push_back(&f.head.bias);

    Mat probs;
    for (int step = 0; step < 500; ++step) {
        Tape t;
        Tensor p = forward_classifier(t, f, forward_net(t, net, t.constant(x)));
        Tensor loss = t.cross_entropy_mean(p, t.constant(y));
        t.backward(loss);
        sgd_step(params, t.leaf_gradients(), 0.5);
        probs = p.m;
    }
    int hits = 0;
    for (int i = 0; i < n; ++i) {
        int pred = probs.at(i, 1) > probs.at(i, 0) ? 1 : 0;
        if (y.at(i, pred) == 1.0) ++hits;
    }
    CHECK(100.0 * hits / n >= 99.0);
}

TEST_CASE("distinct parameters, each updated exactly once per step") {
    RepresentationNet net(3, 4, 2);
    SoftmaxClassifier f(2, 2);
    init_params(net, 5);
    init_params(f, 6);
    std::vector<Tensor*> params = net.params();
    params.push_back(&f.head.weight);
    params.push_back(&f.head.bias);
    CHECK(params.size() == 6);  // 2 layers x (W,b) + head (W,b)

    std::set<const Tensor*> unique(params.begin(), params.end());
    CHECK(unique.size() == params.size());

    std::mt19937_64 rng(3);
    Mat x = random_mat(5, 3, rng);
    Mat y(5, 2);
    for (int i = 0; i < 5; ++i) y.at(i, i % 2) = 1.0;
    Tape t;
    Tensor loss = t.cross_entropy_mean(forward_classifier(t, f, forward_net(t, net, t.constant(x))),
                                       t.constant(y));
    t.backward(loss);
    std::set<NodeId> nodes;
    for (Tensor* p : params) nodes.insert(p->node);
    CHECK(nodes.size() == params.size());  // one leaf per parameter
    std::vector<Mat> before;
    for (Tensor* p : params) before.push_back(p->m);
    sgd_step(params, t.leaf_gradients(), 0.1);
    for (size_t i = 0; i < params.size(); ++i) CHECK_FALSE(params[i]->m == before[i]);
}
