#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "fedmvt/data.hpp"
#include "fedmvt/nn.hpp"
#include "fedmvt/rng.hpp"
#include "test_util.hpp"

using namespace fedmvt;
using namespace fedmvt::testutil;

namespace {

std::pair<Mat, Mat> tiny_dataset(int n, int fa, int fb, int classes, uint64_t seed) {
    SyntheticSpec spec;
    spec.n = n;
    spec.features_a = fa;
    spec.features_b = fb;
    spec.classes = classes;
    spec.class_sep = 2.0;
    spec.cross_view_corr = 0.7;
    spec.seed = seed;
    return make_synthetic(spec);
}

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("fedmvt_test_" + name);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("vertical_partition overlap_fraction=1 makes everything overlap") {
    auto [f, y] = tiny_dataset(12, 3, 2, 2, 1);
    VerticalDataset ds = vertical_partition(f, y, 3, 1.0, 0.5, 0.5, 9);
    CHECK(ds.n_overlap() == 12);
    CHECK(ds.nonoverlap_a.empty());
    CHECK(ds.nonoverlap_b.empty());
}

TEST_CASE("vertical_partition N=10 fraction=0.2 gives exact partition") {
    auto [f, y] = tiny_dataset(10, 3, 2, 2, 2);
    VerticalDataset ds = vertical_partition(f, y, 3, 0.2, 0.5, 0.5, 9);
    CHECK(ds.n_overlap() == 2);
    CHECK(ds.features_a.rows == 2 + static_cast<int>(ds.nonoverlap_a.size()));
    CHECK(ds.features_b.rows == 2 + static_cast<int>(ds.nonoverlap_b.size()));
    CHECK(ds.nonoverlap_a.size() + ds.nonoverlap_b.size() == 8);
    ds.validate();  // partition exactness, one-hot labels, disjointness
}

TEST_CASE("vertical_partition is reproducible and seed-sensitive") {
    auto [f, y] = tiny_dataset(20, 3, 3, 2, 3);
    VerticalDataset a = vertical_partition(f, y, 3, 0.3, 0.5, 0.5, 42);
    VerticalDataset b = vertical_partition(f, y, 3, 0.3, 0.5, 0.5, 42);
    VerticalDataset c = vertical_partition(f, y, 3, 0.3, 0.5, 0.5, 43);
    CHECK(a.features_a == b.features_a);
    CHECK(a.features_b == b.features_b);
    CHECK(a.overlap_pairs == b.overlap_pairs);
    CHECK_FALSE(a.features_a == c.features_a);
}

TEST_CASE("vertical_partition argument validation") {
    auto [f, y] = tiny_dataset(10, 3, 2, 2, 4);
    CHECK_THROWS_AS(vertical_partition(f, y, 0, 0.5, 0.5, 0.5, 1), std::invalid_argument);
    CHECK_THROWS_AS(vertical_partition(f, y, 5, 0.5, 0.5, 0.5, 1), std::invalid_argument);
    CHECK_THROWS_AS(vertical_partition(f, y, 3, 0.0, 0.5, 0.5, 1), std::invalid_argument);
    CHECK_THROWS_AS(vertical_partition(f, y, 3, 0.5, 0.7, 0.5, 1), std::invalid_argument);
}

TEST_CASE("party B labels are discarded") {
    auto [f, y] = tiny_dataset(10, 3, 2, 2, 5);
    VerticalDataset ds = vertical_partition(f, y, 3, 0.2, 0.5, 0.5, 7);
    CHECK(ds.labels_a.rows == ds.features_a.rows);  // labels exist only on A's side
}

TEST_CASE("make_synthetic determinism and shapes") {
    auto [f1, y1] = tiny_dataset(30, 4, 5, 3, 77);
    auto [f2, y2] = tiny_dataset(30, 4, 5, 3, 77);
    auto [f3, y3] = tiny_dataset(30, 4, 5, 3, 78);
    CHECK(f1 == f2);
    CHECK(y1 == y2);
    CHECK_FALSE(f1 == f3);
    CHECK(f1.rows == 30);
    CHECK(f1.cols == 9);
    CHECK(y1.cols == 3);
    int per_class[3] = {0, 0, 0};
    for (int r = 0; r < 30; ++r)
        for (int c = 0; c < 3; ++c)
            if (y1.at(r, c) == 1.0) per_class[c]++;
    CHECK(per_class[0] == 10);
    CHECK(per_class[1] == 10);
    CHECK(per_class[2] == 10);
}

namespace {

// Plain softmax probe trained on raw features; the oracle for class-signal
// strength in the synthetic generator.
double linear_probe_accuracy(const Mat& x_train, const Mat& y_train, const Mat& x_test,
                             const Mat& y_test, int steps, uint64_t seed) {
    SoftmaxClassifier f(x_train.cols, y_train.cols);
    init_params(f, seed);
    for (int s = 0; s < steps; ++s) {
        Tape t;
        Tensor p = forward_classifier(t, f, t.constant(x_train));
        Tensor loss = t.cross_entropy_mean(p, t.constant(y_train));
        t.backward(loss);
        sgd_step(f.params(), t.leaf_gradients(), 0.5);
    }
    Tape t;
    Mat probs = forward_classifier(t, f, t.constant(x_test)).m;
    int hits = 0;
    for (int r = 0; r < probs.rows; ++r) {
        int pred = 0, truth = 0;
        for (int c = 1; c < probs.cols; ++c) {
            if (probs.at(r, c) > probs.at(r, pred)) pred = c;
            if (y_test.at(r, c) > y_test.at(r, truth)) truth = c;
        }
        if (pred == truth) ++hits;
    }
    return 100.0 * hits / probs.rows;
}

}  // namespace

TEST_CASE("class_sep=0 keeps any model near chance over 5 seeds") {
    double acc_sum = 0.0;
    const int n = 400, fa = 6, fb = 6, C = 4;
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        SyntheticSpec spec;
        spec.n = n;
        spec.features_a = fa;
        spec.features_b = fb;
        spec.classes = C;
        spec.class_sep = 0.0;
        spec.cross_view_corr = 0.5;
        spec.seed = seed;
        auto [f, y] = make_synthetic(spec);
        Mat x_train = Mat(n / 2, f.cols), y_train = Mat(n / 2, C);
        Mat x_test = Mat(n / 2, f.cols), y_test = Mat(n / 2, C);
        for (int r = 0; r < n / 2; ++r) {
            std::copy_n(f.row_ptr(r), f.cols, x_train.row_ptr(r));
            std::copy_n(y.row_ptr(r), C, y_train.row_ptr(r));
            std::copy_n(f.row_ptr(n / 2 + r), f.cols, x_test.row_ptr(r));
            std::copy_n(y.row_ptr(n / 2 + r), C, y_test.row_ptr(r));
        }
        acc_sum += linear_probe_accuracy(x_train, y_train, x_test, y_test, 150, seed);
    }
    double mean = acc_sum / 5.0;
    CHECK(mean > 100.0 / 4 - 5.0);
    CHECK(mean < 100.0 / 4 + 5.0);
}

TEST_CASE("class_sep=5 makes each single view linearly separable above 95%") {
    SyntheticSpec spec;
    spec.n = 400;
    spec.features_a = 8;
    spec.features_b = 8;
    spec.classes = 3;
    spec.class_sep = 5.0;
    spec.cross_view_corr = 0.5;
    spec.seed = 11;
    auto generated = make_synthetic(spec);
    const Mat& f = generated.first;
    const Mat& y = generated.second;
    const int half = spec.n / 2;
    auto view = [&](int col0, int cols) {
        Mat train(half, cols), test(half, cols);
        for (int r = 0; r < half; ++r) {
            std::copy_n(f.row_ptr(r) + col0, cols, train.row_ptr(r));
            std::copy_n(f.row_ptr(half + r) + col0, cols, test.row_ptr(r));
        }
        return std::make_pair(train, test);
    };
    Mat y_train(half, 3), y_test(half, 3);
    for (int r = 0; r < half; ++r) {
        std::copy_n(y.row_ptr(r), 3, y_train.row_ptr(r));
        std::copy_n(y.row_ptr(half + r), 3, y_test.row_ptr(r));
    }
    auto [a_train, a_test] = view(0, 8);
    auto [b_train, b_test] = view(8, 8);
    CHECK(linear_probe_accuracy(a_train, y_train, a_test, y_test, 300, 1) > 95.0);
    CHECK(linear_probe_accuracy(b_train, y_train, b_test, y_test, 300, 2) > 95.0);
}

TEST_CASE("tri_batches equal pools: 2 steps per epoch") {
    auto [f, y] = tiny_dataset(12, 3, 2, 2, 21);
    // 4 overlap, 4 A-only, 4 B-only
    VerticalDataset ds = vertical_partition(f, y, 3, 4.0 / 12, 0.5, 0.5, 3);
    REQUIRE(ds.n_overlap() == 4);
    REQUIRE(ds.nonoverlap_a.size() == 4);
    REQUIRE(ds.nonoverlap_b.size() == 4);
    TriBatchIterator it(ds, 2, 2, 2, 5, 0);
    CHECK(it.steps_per_epoch() == 2);
    int steps = 0;
    while (!it.done()) {
        TriBatch b = it.next();
        CHECK(b.ol_xa.rows == 2);
        CHECK(b.a_xa.rows == 2);
        CHECK(b.b_xb.rows == 2);
        ++steps;
    }
    CHECK(steps == 2);
}

TEST_CASE("tri_batches pools 4/8/2 with batches 2/2/2: 4 steps, shorter pools cycle") {
    auto [f, y] = tiny_dataset(14, 3, 2, 2, 22);
    VerticalDataset ds = vertical_partition(f, y, 3, 4.0 / 14, 0.8, 0.2, 3);
    REQUIRE(ds.n_overlap() == 4);
    REQUIRE(ds.nonoverlap_a.size() == 8);
    REQUIRE(ds.nonoverlap_b.size() == 2);
    TriBatchIterator it(ds, 2, 2, 2, 5, 0);
    CHECK(it.steps_per_epoch() == 4);
    std::multiset<int> ol_seen, b_seen;
    int steps = 0;
    while (!it.done()) {
        TriBatch b = it.next();
        for (int r : b.ol_rows_a) ol_seen.insert(r);
        for (int r : b.b_rows) b_seen.insert(r);
        ++steps;
    }
    CHECK(steps == 4);
    // ol pool (4 rows, batch 2) is fully visited twice in 4 steps.
    CHECK(ol_seen.size() == 8);
    for (auto [ia, ib] : ds.overlap_pairs) CHECK(ol_seen.count(ia) == 2);
    // b pool (2 rows, batch 2) cycles every step.
    CHECK(b_seen.size() == 8);
}

TEST_CASE("tri_batches epoch covers the overlap pool exactly") {
    auto [f, y] = tiny_dataset(20, 3, 2, 2, 23);
    VerticalDataset ds = vertical_partition(f, y, 3, 6.0 / 20, 0.5, 0.5, 3);
    TriBatchIterator it(ds, 2, 2, 2, 5, 0);
    std::set<int> ol_rows;
    while (!it.done()) {
        TriBatch b = it.next();
        CHECK(b.ol_rows_a.size() == b.ol_rows_b.size());  // index-aligned pairs
        for (size_t i = 0; i < b.ol_rows_a.size(); ++i) {
            bool found = false;
            for (auto [ia, ib] : ds.overlap_pairs)
                if (ia == b.ol_rows_a[i] && ib == b.ol_rows_b[i]) found = true;
            CHECK(found);  // batching never breaks pair alignment
            ol_rows.insert(b.ol_rows_a[i]);
        }
        // Pools never leak into each other.
        for (int r : b.a_rows) {
            bool in_a = false;
            for (int x : ds.nonoverlap_a) in_a = in_a || x == r;
            CHECK(in_a);
        }
    }
    CHECK(ol_rows.size() == 6);
}

TEST_CASE("tri_batches with empty pools yields empty parts") {
    auto [f, y] = tiny_dataset(8, 3, 2, 2, 24);
    VerticalDataset ds = vertical_partition(f, y, 3, 1.0, 0.5, 0.5, 3);
    TriBatchIterator it(ds, 4, 2, 2, 5, 0);
    TriBatch b = it.next();
    CHECK(b.ol_xa.rows == 4);
    CHECK(b.a_xa.rows == 0);
    CHECK(b.b_xb.rows == 0);
    CHECK(b.a_xa.cols == 3);
    CHECK(b.b_xb.cols == 2);
}

TEST_CASE("tri_batches batch size validation") {
    auto [f, y] = tiny_dataset(8, 3, 2, 2, 25);
    VerticalDataset ds = vertical_partition(f, y, 3, 0.5, 0.5, 0.5, 3);
    CHECK_THROWS_AS(TriBatchIterator(ds, 0, 2, 2, 5, 0), std::invalid_argument);
}

TEST_CASE("csv round trip is value-identical") {
    auto [f, y] = tiny_dataset(9, 3, 2, 3, 31);
    VerticalDataset ds = vertical_partition(f, y, 3, 3.0 / 9, 0.5, 0.5, 13);
    auto dir = temp_dir("roundtrip");
    const std::string pa = (dir / "a.csv").string();
    const std::string pb = (dir / "b.csv").string();
    const std::string pm = (dir / "map.csv").string();
    write_csv(ds, pa, pb, pm);
    VerticalDataset back = load_csv(pa, pb, pm);
    CHECK(back.features_a == ds.features_a);
    CHECK(back.features_b == ds.features_b);
    CHECK(back.labels_a == ds.labels_a);
    CHECK(back.overlap_pairs == ds.overlap_pairs);
    CHECK(back.nonoverlap_a == ds.nonoverlap_a);
    CHECK(back.nonoverlap_b == ds.nonoverlap_b);

    // Second round trip is exact as well.
    write_csv(back, pa, pb, pm);
    VerticalDataset again = load_csv(pa, pb, pm);
    CHECK(again.features_a == back.features_a);
}

TEST_CASE("csv loader basics and errors") {
    auto dir = temp_dir("csv_errors");
    auto write = [&](const std::string& name, const std::string& content) {
        std::ofstream out(dir / name);
        out << content;
        return (dir / name).string();
    };
    std::string a = write("a.csv", "id,label,f0\n1,0,0.5\n2,1,1.5\n3,0,2.5\n");
    std::string b = write("b.csv", "id,g0\n10,0.1\n20,0.2\n30,0.3\n");

    SUBCASE("3-row files with 2 overlap pairs give N_ol = 2") {
        std::string m = write("m.csv", "id_a,id_b\n1,10\n3,30\n");
        VerticalDataset ds = load_csv(a, b, m);
        CHECK(ds.n_overlap() == 2);
        CHECK(ds.nonoverlap_a.size() == 1);
        CHECK(ds.nonoverlap_b.size() == 1);
        CHECK(ds.num_classes() == 2);
    }
    SUBCASE("duplicate id in overlap map") {
        std::string m = write("m.csv", "id_a,id_b\n1,10\n1,20\n");
        CHECK_THROWS_WITH_AS(load_csv(a, b, m), doctest::Contains("duplicate id_a"), ParseError);
    }
    SUBCASE("unknown id in overlap map names the line") {
        std::string m = write("m.csv", "id_a,id_b\n1,10\n7,20\n");
        CHECK_THROWS_WITH_AS(load_csv(a, b, m), doctest::Contains(":3"), ParseError);
    }
    SUBCASE("ragged row") {
        std::string bad = write("bad.csv", "id,label,f0\n1,0\n");
        std::string m = write("m.csv", "id_a,id_b\n");
        CHECK_THROWS_WITH_AS(load_csv(bad, b, m), doctest::Contains("expected 3 columns"), ParseError);
    }
    SUBCASE("non-numeric feature") {
        std::string bad = write("bad2.csv", "id,label,f0\n1,0,abc\n");
        std::string m = write("m.csv", "id_a,id_b\n");
        CHECK_THROWS_WITH_AS(load_csv(bad, b, m), doctest::Contains("non-numeric"), ParseError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_WITH_AS(load_csv((dir / "nope.csv").string(), b, (dir / "m.csv").string()),
                             doctest::Contains("cannot open"), ParseError);
    }
    SUBCASE("missing label column") {
        std::string bad = write("bad3.csv", "id,f0\n1,0.5\n");
        std::string m = write("m.csv", "id_a,id_b\n");
        CHECK_THROWS_WITH_AS(load_csv(bad, b, m), doctest::Contains("label"), ParseError);
    }
}

TEST_CASE("one-hot labels inferred from distinct values sorted ascending") {
    auto dir = temp_dir("csv_labels");
    std::ofstream(dir / "a.csv") << "id,label,f0\n1,5,0.1\n2,-1,0.2\n3,5,0.3\n4,2,0.4\n";
    std::ofstream(dir / "b.csv") << "id,g0\n1,0.0\n";
    std::ofstream(dir / "m.csv") << "id_a,id_b\n1,1\n";
    VerticalDataset ds = load_csv((dir / "a.csv").string(), (dir / "b.csv").string(),
                                  (dir / "m.csv").string());
    CHECK(ds.num_classes() == 3);
    // classes ascending: -1 -> 0, 2 -> 1, 5 -> 2
    CHECK(ds.labels_a.at(0, 2) == 1.0);
    CHECK(ds.labels_a.at(1, 0) == 1.0);
    CHECK(ds.labels_a.at(3, 1) == 1.0);
}
