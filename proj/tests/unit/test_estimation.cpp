#include <doctest.h>

#include <cmath>

#include "fedmvt/data.hpp"
#include "fedmvt/estimation.hpp"
#include "fedmvt/nn.hpp"
#include "test_util.hpp"

using namespace fedmvt;
using namespace fedmvt::testutil;

TEST_CASE("single key: output equals the key row regardless of query") {
    Tape t;
    Tensor q = t.constant(Mat::from_rows({{5, -3}, {0.1, 0.2}, {100, 100}}));
    Tensor kv = t.constant(Mat::from_rows({{1.5, 2.5}}));
    Mat out = estimate_shared(t, q, kv).m;
    for (int r = 0; r < 3; ++r) {
        CHECK(out.at(r, 0) == doctest::Approx(1.5).epsilon(1e-12));
        CHECK(out.at(r, 1) == doctest::Approx(2.5).epsilon(1e-12));
    }
}

TEST_CASE("single anchor: estimate_unique returns the value row for every query") {
    Tape t;
    Tensor q = t.constant(Mat::from_rows({{5, -3}, {0, 0}}));
    Tensor k = t.constant(Mat::from_rows({{1, 1}}));
    Tensor v = t.constant(Mat::from_rows({{9, 8, 7}}));
    Mat out = estimate_unique(t, q, k, v).m;
    CHECK(out.rows == 2);
    CHECK(out.cols == 3);
    for (int r = 0; r < 2; ++r) {
        CHECK(out.at(r, 0) == doctest::Approx(9.0));
        CHECK(out.at(r, 1) == doctest::Approx(8.0));
        CHECK(out.at(r, 2) == doctest::Approx(7.0));
    }
}

// Scalar route evaluated by hand: two keys, query equal to key 1.
TEST_CASE("two-key hand oracle at 1e-9") {
    const double d = 2.0;
    Mat query = Mat::from_rows({{2.0, 0.0}});
    Mat keys = Mat::from_rows({{2.0, 0.0}, {0.0, 1.0}});
    // logits: q.k1/sqrt(2) = 4/sqrt(2), q.k2/sqrt(2) = 0
    const double l1 = 4.0 / std::sqrt(d);
    const double l2 = 0.0;
    const double w1 = std::exp(l1) / (std::exp(l1) + std::exp(l2));
    const double w2 = std::exp(l2) / (std::exp(l1) + std::exp(l2));

    SUBCASE("estimate_shared") {
        Tape t;
        Mat out = estimate_shared(t, t.constant(query), t.constant(keys)).m;
        CHECK(std::abs(out.at(0, 0) - (w1 * 2.0 + w2 * 0.0)) < 1e-9);
        CHECK(std::abs(out.at(0, 1) - (w1 * 0.0 + w2 * 1.0)) < 1e-9);
        // dominant key wins decisively
        CHECK(w1 > 0.9);
    }
    SUBCASE("estimate_unique transfers similarities onto the other party's rows") {
        Mat values = Mat::from_rows({{10.0, -1.0, 0.5}, {-2.0, 3.0, 4.0}});
        Tape t;
        Mat out = estimate_unique(t, t.constant(query), t.constant(keys), t.constant(values)).m;
        for (int c = 0; c < 3; ++c)
            CHECK(std::abs(out.at(0, c) - (w1 * values.at(0, c) + w2 * values.at(1, c))) < 1e-9);
    }
}

TEST_CASE("attention weights are row-stochastic (read off via identity values)") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 10; ++rep) {
        Mat q = random_mat(4, 3, rng, -5.0, 5.0);
        Mat k = random_mat(6, 3, rng, -5.0, 5.0);
        Tape t;
        Mat weights = estimate_unique(t, t.constant(q), t.constant(k), t.constant(Mat::identity(6))).m;
        for (int r = 0; r < weights.rows; ++r) {
            double sum = 0.0;
            for (int c = 0; c < weights.cols; ++c) {
                CHECK(weights.at(r, c) >= 0.0);
                sum += weights.at(r, c);
            }
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("outputs stay inside the value convex hull componentwise") {
    std::mt19937_64 rng(6);
    for (int rep = 0; rep < 10; ++rep) {
        Mat q = random_mat(5, 4, rng, -3.0, 3.0);
        Mat kv = random_mat(7, 4, rng, -3.0, 3.0);
        Tape t;
        Mat out = estimate_shared(t, t.constant(q), t.constant(kv)).m;
        for (int c = 0; c < kv.cols; ++c) {
            double lo = kv.at(0, c), hi = kv.at(0, c);
            for (int r = 1; r < kv.rows; ++r) {
                lo = std::min(lo, kv.at(r, c));
                hi = std::max(hi, kv.at(r, c));
            }
            for (int r = 0; r < out.rows; ++r) {
                CHECK(out.at(r, c) >= lo - 1e-9);
                CHECK(out.at(r, c) <= hi + 1e-9);
            }
        }
    }
}

TEST_CASE("joint permutation of key/value pairs leaves estimate_unique unchanged") {
    std::mt19937_64 rng(7);
    Mat q = random_mat(3, 4, rng);
    Mat k = random_mat(5, 4, rng);
    Mat v = random_mat(5, 2, rng);
    std::vector<int> perm{3, 0, 4, 1, 2};
    Mat kp = gather_mat_rows(k, perm), vp = gather_mat_rows(v, perm);
    Tape t1, t2;
    Mat out1 = estimate_unique(t1, t1.constant(q), t1.constant(k), t1.constant(v)).m;
    Mat out2 = estimate_unique(t2, t2.constant(q), t2.constant(kp), t2.constant(vp)).m;
    CHECK(mat_max_abs_diff(out1, out2) < 1e-12);
}

TEST_CASE("scale 1e-6 drives weights uniform within 1e-4") {
    std::mt19937_64 rng(8);
    Mat q = random_mat(4, 3, rng, -2.0, 2.0);
    Mat k = random_mat(5, 3, rng, -2.0, 2.0);
    const double c = 1e-6;
    Tape t;
    Mat weights = estimate_unique(t, t.constant(mat_scale(q, c)), t.constant(mat_scale(k, c)),
                                  t.constant(Mat::identity(5)))
                      .m;
    for (int r = 0; r < weights.rows; ++r)
        for (int col = 0; col < weights.cols; ++col)
            CHECK(std::abs(weights.at(r, col) - 0.2) < 1e-4);
}

TEST_CASE("empty anchor set raises an unavailable-estimate error") {
    Tape t;
    Tensor q = t.constant(Mat::from_rows({{1, 2}}));
    Tensor k = t.constant(Mat(0, 2));
    Tensor v = t.constant(Mat(0, 3));
    CHECK_THROWS_AS(estimate_unique(t, q, k, v), std::invalid_argument);
}

TEST_CASE("width mismatch raises shape errors") {
    Tape t;
    Tensor q = t.constant(Mat(2, 3));
    Tensor kv = t.constant(Mat(4, 5));
    CHECK_THROWS_AS(estimate_shared(t, q, kv), ShapeError);
    Tensor k = t.constant(Mat(4, 3));
    Tensor v = t.constant(Mat(3, 3));
    CHECK_THROWS_AS(estimate_unique(t, q, k, v), ShapeError);
}

TEST_CASE("estimate_missing composes both paths with the right widths") {
    std::mt19937_64 rng(9);
    const int d = 3, n_src = 4, n_ol = 5;
    RepresentationPair source;
    Tape t;
    source.party = Party::B;
    source.unique = t.constant(random_mat(n_src, d, rng));
    source.shared = t.constant(random_mat(n_src, d, rng));
    OverlapAnchors anchors{t.constant(random_mat(n_ol, d, rng)), t.constant(random_mat(n_ol, d, rng))};
    Tensor pool = t.constant(random_mat(6, d, rng));
    RepresentationPair est = estimate_missing(t, Party::A, source, anchors, pool);
    CHECK(est.origin == ReprOrigin::Estimated);
    CHECK(est.party == Party::A);
    CHECK(est.unique.rows() == n_src);
    CHECK(est.unique.cols() == d);
    CHECK(est.shared.rows() == n_src);
    Tensor full = full_representation(t, est);
    CHECK(full.cols() == 2 * d);

    // Deterministic given inputs.
    Tape t2;
    RepresentationPair source2;
    source2.party = Party::B;
    std::mt19937_64 rng2(9);
    source2.unique = t2.constant(random_mat(n_src, d, rng2));
    source2.shared = t2.constant(random_mat(n_src, d, rng2));
    OverlapAnchors anchors2{t2.constant(random_mat(n_ol, d, rng2)),
                            t2.constant(random_mat(n_ol, d, rng2))};
    Tensor pool2 = t2.constant(random_mat(6, d, rng2));
    RepresentationPair est2 = estimate_missing(t2, Party::A, source2, anchors2, pool2);
    CHECK(est.unique.m == est2.unique.m);
    CHECK(est.shared.m == est2.shared.m);
}

TEST_CASE("overlap estimation reproduces the tensors used by the distance loss") {
    std::mt19937_64 rng(10);
    const int d = 3, n_ol = 4;
    Tape t;
    Tensor ra_u_ol = t.constant(random_mat(n_ol, d, rng));
    Tensor ra_c_ol = t.constant(random_mat(n_ol, d, rng));
    Tensor rb_u_ol = t.constant(random_mat(n_ol, d, rng));
    Tensor rb_c_ol = t.constant(random_mat(n_ol, d, rng));

    // Estimating A's missing reps for B's overlap rows, pool = A's ol shared.
    RepresentationPair source{rb_u_ol, rb_c_ol, Party::B, ReprOrigin::Learned};
    RepresentationPair est =
        estimate_missing(t, Party::A, source, OverlapAnchors{ra_u_ol, rb_u_ol}, ra_c_ol);
    Tensor direct_u = estimate_unique(t, rb_u_ol, rb_u_ol, ra_u_ol);
    Tensor direct_c = estimate_shared(t, rb_c_ol, ra_c_ol);
    CHECK(est.unique.m == direct_u.m);
    CHECK(est.shared.m == direct_c.m);

    Tensor learned = t.concat_features(ra_u_ol, ra_c_ol);
    Tensor estimated = full_representation(t, est);
    Tensor loss = overlap_distance_loss(t, estimated, learned);
    CHECK(loss.scalar() >= 0.0);
}

TEST_CASE("overlap_distance_loss values and gradient") {
    Tape t;
    Tensor x = t.constant(Mat::from_rows({{1, 2, 3, 4}}));
    CHECK(overlap_distance_loss(t, x, x).scalar() == 0.0);

    Tensor e = t.constant(Mat::from_rows({{1, 1, 0, 0}}));
    Tensor l = t.constant(Mat::from_rows({{1, 0, 0, 0}}));
    CHECK(overlap_distance_loss(t, e, l).scalar() == doctest::Approx(1.0));

    std::mt19937_64 rng(11);
    double err = max_grad_rel_err({random_mat(3, 4, rng), random_mat(3, 4, rng)},
                                  [](Tape& tp, std::vector<Tensor>& lv) {
                                      return overlap_distance_loss(tp, lv[0], lv[1]);
                                  });
    CHECK(err < 1e-5);
}

TEST_CASE("gradients flow through both attention estimators to all leaves") {
    std::mt19937_64 rng(12);
    std::vector<Mat> inputs{random_mat(3, 3, rng), random_mat(4, 3, rng), random_mat(4, 2, rng),
                            random_mat(3, 3, rng), random_mat(5, 3, rng)};
    double err = max_grad_rel_err(inputs, [](Tape& t, std::vector<Tensor>& l) {
        Tensor u = estimate_unique(t, l[0], l[1], l[2]);
        Tensor c = estimate_shared(t, l[3], l[4]);
        return t.add(t.sum_all(u), t.mean_sq_row_dot(c, c));
    });
    CHECK(err < 1e-4);
}

TEST_CASE("end-to-end gradient reaches both parties' representation nets") {
    RepresentationNet h_a_c(3, 4, 3), h_b_c(2, 4, 3), h_a_u(3, 4, 3), h_b_u(2, 4, 3);
    init_params(h_a_c, 1);
    init_params(h_b_c, 2);
    init_params(h_a_u, 3);
    init_params(h_b_u, 4);
    std::mt19937_64 rng(13);
    Mat xa = random_mat(4, 3, rng);
    Mat xb = random_mat(3, 2, rng);

    Tape t;
    Tensor ra_c = forward_net(t, h_a_c, t.constant(xa));
    Tensor ra_u = forward_net(t, h_a_u, t.constant(xa));
    Tensor rb_c = forward_net(t, h_b_c, t.constant(xb));
    Tensor rb_u = forward_net(t, h_b_u, t.constant(xb));
    RepresentationPair source{rb_u, rb_c, Party::B, ReprOrigin::Learned};
    // anchors: first 3 rows of A's reps vs all of B's rows
    Tensor anchor_a = t.gather_rows(ra_u, {0, 1, 2});
    RepresentationPair est =
        estimate_missing(t, Party::A, source, OverlapAnchors{anchor_a, rb_u}, ra_c);
    t.backward(t.sum_all(full_representation(t, est)));

    auto nonzero = [&](RepresentationNet& net) {
        double mx = 0.0;
        for (Tensor* p : net.params()) {
            Mat g = t.grad(p->node);
            for (double x : g.v) mx = std::max(mx, std::abs(x));
        }
        return mx;
    };
    CHECK(nonzero(h_a_c) > 0.0);
    CHECK(nonzero(h_b_c) > 0.0);
    CHECK(nonzero(h_a_u) > 0.0);
    CHECK(nonzero(h_b_u) > 0.0);
}

TEST_CASE("self-exclusion masks the diagonal") {
    std::mt19937_64 rng(14);
    Mat q = random_mat(3, 3, rng);
    EstimationOptions opt;
    opt.self_rows = {0, 1, 2};
    Tape t;
    // keys == queries: without masking the self weight dominates its row.
    Mat w_plain = estimate_unique(t, t.constant(mat_scale(q, 10.0)), t.constant(mat_scale(q, 10.0)),
                                  t.constant(Mat::identity(3)))
                      .m;
    Mat w_masked = estimate_unique(t, t.constant(mat_scale(q, 10.0)), t.constant(mat_scale(q, 10.0)),
                                   t.constant(Mat::identity(3)), opt)
                       .m;
    for (int r = 0; r < 3; ++r) {
        CHECK(w_plain.at(r, r) > 0.5);
        CHECK(w_masked.at(r, r) < 1e-6);
    }
}
