#include "fedmvt/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fedmvt/rng.hpp"

namespace fedmvt {

namespace {

bool is_one_hot_row(const Mat& m, int r) {
    int ones = 0;
    for (int c = 0; c < m.cols; ++c) {
        double x = m.at(r, c);
        if (x == 1.0)
            ++ones;
        else if (x != 0.0)
            return false;
    }
    return ones == 1;
}

std::string fmt_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_number(const std::string& tok, const std::string& file, int line_no, const char* what) {
    size_t pos = 0;
    double val = 0.0;
    try {
        val = std::stod(tok, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != tok.size() || tok.empty())
        throw ParseError(file + ":" + std::to_string(line_no) + ": non-numeric " + what + " '" + tok + "'");
    return val;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;  // numeric cells, header order
};

CsvTable read_csv_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");
    CsvTable t;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() && in.eof()) break;
        std::vector<std::string> toks = split_line(line);
        if (line_no == 1) {
            t.header = toks;
            continue;
        }
        if (toks.size() != t.header.size())
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(t.header.size()) + " columns, found " + std::to_string(toks.size()));
        std::vector<double> row;
        row.reserve(toks.size());
        for (size_t c = 0; c < toks.size(); ++c)
            row.push_back(parse_number(toks[c], path, line_no, ("value in column '" + t.header[c] + "'").c_str()));
        t.rows.push_back(std::move(row));
    }
    if (t.header.empty()) throw ParseError(path + ": empty file");
    return t;
}

int find_column(const CsvTable& t, const std::string& name, const std::string& path) {
    for (size_t i = 0; i < t.header.size(); ++i)
        if (t.header[i] == name) return static_cast<int>(i);
    throw ParseError(path + ": missing required column '" + name + "'");
}

}  // namespace

void VerticalDataset::validate() const {
    const int na = features_a.rows;
    const int nb = features_b.rows;
    if (labels_a.rows != na) throw std::invalid_argument("VerticalDataset: label/feature row mismatch");
    std::set<int> ol_a, ol_b;
    for (auto [ia, ib] : overlap_pairs) {
        if (ia < 0 || ia >= na || ib < 0 || ib >= nb)
            throw std::invalid_argument("VerticalDataset: overlap index out of range");
        if (!ol_a.insert(ia).second || !ol_b.insert(ib).second)
            throw std::invalid_argument("VerticalDataset: duplicate overlap index");
    }
    std::set<int> nl_a(nonoverlap_a.begin(), nonoverlap_a.end());
    std::set<int> nl_b(nonoverlap_b.begin(), nonoverlap_b.end());
    if (nl_a.size() != nonoverlap_a.size() || nl_b.size() != nonoverlap_b.size())
        throw std::invalid_argument("VerticalDataset: duplicate non-overlap index");
    for (int i : nonoverlap_a)
        if (ol_a.count(i)) throw std::invalid_argument("VerticalDataset: index in both overlap and non-overlap (A)");
    for (int i : nonoverlap_b)
        if (ol_b.count(i)) throw std::invalid_argument("VerticalDataset: index in both overlap and non-overlap (B)");
    if (static_cast<int>(ol_a.size() + nl_a.size()) != na || static_cast<int>(ol_b.size() + nl_b.size()) != nb)
        throw std::invalid_argument("VerticalDataset: overlap/non-overlap sets do not partition the samples");
    for (int r = 0; r < labels_a.rows; ++r)
        if (!is_one_hot_row(labels_a, r)) throw std::invalid_argument("VerticalDataset: labels_a row " + std::to_string(r) + " is not one-hot");
}

Mat gather_mat_rows(const Mat& m, const std::vector<int>& idx) {
    Mat out(static_cast<int>(idx.size()), m.cols);
    for (size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] < 0 || idx[r] >= m.rows) throw std::out_of_range("gather_mat_rows: bad index");
        std::copy_n(m.row_ptr(idx[r]), m.cols, out.row_ptr(static_cast<int>(r)));
    }
    return out;
}

VerticalDataset vertical_partition(const Mat& features, const Mat& labels, int split_col,
                                   double overlap_fraction, double nl_fraction_a,
                                   double nl_fraction_b, uint64_t seed) {
    const int n = features.rows;
    if (labels.rows != n) throw std::invalid_argument("vertical_partition: feature/label row mismatch");
    if (split_col <= 0 || split_col >= features.cols)
        throw std::invalid_argument("vertical_partition: split_col must lie strictly inside the feature range");
    if (overlap_fraction <= 0.0 || overlap_fraction > 1.0)
        throw std::invalid_argument("vertical_partition: overlap_fraction must be in (0,1]");
    if (nl_fraction_a < 0.0 || nl_fraction_b < 0.0 || std::abs(nl_fraction_a + nl_fraction_b - 1.0) > 1e-9)
        throw std::invalid_argument("vertical_partition: nl fractions must be nonnegative and sum to 1");

    // Small nudge so a fraction formed as k/N yields exactly k.
    int n_ol = static_cast<int>(std::ceil(overlap_fraction * n - 1e-9));
    n_ol = std::min(std::max(n_ol, 1), n);

    std::mt19937_64 rng(mix_seed(seed, 0x7061727469746eULL));
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    shuffle_in_place(order, rng);

    const int remaining = n - n_ol;
    const int n_a = static_cast<int>(std::llround(nl_fraction_a * remaining));

    std::vector<int> ol(order.begin(), order.begin() + n_ol);
    std::vector<int> a_only(order.begin() + n_ol, order.begin() + n_ol + n_a);
    std::vector<int> b_only(order.begin() + n_ol + n_a, order.end());

    VerticalDataset ds;
    const int a_cols = split_col;
    const int b_cols = features.cols - split_col;

    // Party A rows: overlap first, then A-only. Same convention on B's side.
    std::vector<int> rows_a = ol;
    rows_a.insert(rows_a.end(), a_only.begin(), a_only.end());
    std::vector<int> rows_b = ol;
    rows_b.insert(rows_b.end(), b_only.begin(), b_only.end());

    ds.features_a = Mat(static_cast<int>(rows_a.size()), a_cols);
    ds.labels_a = Mat(static_cast<int>(rows_a.size()), labels.cols);
    for (size_t r = 0; r < rows_a.size(); ++r) {
        std::copy_n(features.row_ptr(rows_a[r]), a_cols, ds.features_a.row_ptr(static_cast<int>(r)));
        std::copy_n(labels.row_ptr(rows_a[r]), labels.cols, ds.labels_a.row_ptr(static_cast<int>(r)));
        ds.ids_a.push_back(rows_a[r]);
    }
    ds.features_b = Mat(static_cast<int>(rows_b.size()), b_cols);
    for (size_t r = 0; r < rows_b.size(); ++r) {
        std::copy_n(features.row_ptr(rows_b[r]) + split_col, b_cols, ds.features_b.row_ptr(static_cast<int>(r)));
        ds.ids_b.push_back(rows_b[r]);
    }
    for (int i = 0; i < n_ol; ++i) ds.overlap_pairs.emplace_back(i, i);
    for (int i = n_ol; i < static_cast<int>(rows_a.size()); ++i) ds.nonoverlap_a.push_back(i);
    for (int i = n_ol; i < static_cast<int>(rows_b.size()); ++i) ds.nonoverlap_b.push_back(i);
    ds.validate();
    return ds;
}

std::pair<Mat, Mat> make_synthetic(const SyntheticSpec& spec) {
    if (spec.n < spec.classes) throw std::invalid_argument("make_synthetic: need n >= classes");
    if (spec.classes < 2) throw std::invalid_argument("make_synthetic: need >= 2 classes");
    if (spec.cross_view_corr < 0.0 || spec.cross_view_corr > 1.0)
        throw std::invalid_argument("make_synthetic: cross_view_corr must be in [0,1]");
    if (spec.features_a < 1 || spec.features_b < 1)
        throw std::invalid_argument("make_synthetic: feature widths must be >= 1");

    const int dz = 8, du = 8, dv = 8;  // shared / A-unique / B-unique latent widths
    std::mt19937_64 rng(mix_seed(spec.seed, 0x73796e7468ULL));

    auto draw_centers = [&](int dim) {
        std::vector<Mat> centers;
        for (int c = 0; c < spec.classes; ++c) {
            Mat g(1, dim);
            double norm = 0.0;
            for (double& x : g.v) {
                x = gaussian(rng);
                norm += x * x;
            }
            norm = std::sqrt(std::max(norm, 1e-12));
            for (double& x : g.v) x *= spec.class_sep / norm;
            centers.push_back(std::move(g));
        }
        return centers;
    };
    std::vector<Mat> cz = draw_centers(dz), cu = draw_centers(du), cv = draw_centers(dv);

    auto projection = [&](int out_dim, int in_dim) {
        Mat g(in_dim, out_dim);
        const double s = 1.0 / std::sqrt(static_cast<double>(in_dim));
        for (double& x : g.v) x = gaussian(rng) * s;
        return g;
    };
    Mat proj_a = projection(spec.features_a, dz + du);
    Mat proj_b = projection(spec.features_b, dz + dv);

    // Balanced labels, then shuffled.
    std::vector<int> y(spec.n);
    for (int i = 0; i < spec.n; ++i) y[i] = i % spec.classes;
    shuffle_in_place(y, rng);

    const double wz = std::sqrt(spec.cross_view_corr);
    const double wu = std::sqrt(1.0 - spec.cross_view_corr);

    Mat features(spec.n, spec.features_a + spec.features_b);
    Mat labels(spec.n, spec.classes);
    Mat lat_a(1, dz + du), lat_b(1, dz + dv);
    for (int i = 0; i < spec.n; ++i) {
        labels.at(i, y[i]) = 1.0;
        for (int k = 0; k < dz; ++k) {
            double z = cz[y[i]].v[k] + gaussian(rng);
            lat_a.v[k] = wz * z;
            lat_b.v[k] = wz * z;
        }
        for (int k = 0; k < du; ++k) lat_a.v[dz + k] = wu * (cu[y[i]].v[k] + gaussian(rng));
        for (int k = 0; k < dv; ++k) lat_b.v[dz + k] = wu * (cv[y[i]].v[k] + gaussian(rng));
        Mat fa = mat_mul(lat_a, proj_a);
        Mat fb = mat_mul(lat_b, proj_b);
        std::copy_n(fa.v.data(), spec.features_a, features.row_ptr(i));
        std::copy_n(fb.v.data(), spec.features_b, features.row_ptr(i) + spec.features_a);
    }
    return {std::move(features), std::move(labels)};
}

TriBatchIterator::TriBatchIterator(const VerticalDataset& ds, int batch_ol, int batch_a, int batch_b,
                                   uint64_t seed, int epoch, bool ol_only)
    : ds_(ds), batch_ol_(batch_ol), batch_a_(batch_a), batch_b_(batch_b), seed_(seed), epoch_(epoch) {
    if (batch_ol < 1 || batch_a < 1 || batch_b < 1)
        throw std::invalid_argument("tri_batches: batch sizes must be >= 1");
    auto shuffled = [&](size_t n, uint64_t pool_tag) {
        std::vector<int> order(n);
        for (size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
        std::mt19937_64 rng(mix_seed(seed_, mix_seed(static_cast<uint64_t>(epoch_), pool_tag)));
        shuffle_in_place(order, rng);
        return order;
    };
    order_ol_ = shuffled(ds.overlap_pairs.size(), 1);
    order_a_ = ol_only ? std::vector<int>{} : shuffled(ds.nonoverlap_a.size(), 2);
    order_b_ = ol_only ? std::vector<int>{} : shuffled(ds.nonoverlap_b.size(), 3);
    auto steps_for = [](size_t n, int b) { return n == 0 ? 0 : static_cast<int>((n + b - 1) / b); };
    steps_ = std::max({steps_for(order_ol_.size(), batch_ol_), steps_for(order_a_.size(), batch_a_),
                       steps_for(order_b_.size(), batch_b_), 1});
}

std::vector<int> TriBatchIterator::take(std::vector<int>& order, size_t& pos, int& wraps, int batch,
                                        const char* pool) {
    std::vector<int> out;
    if (order.empty()) return out;
    for (int k = 0; k < batch; ++k) {
        if (pos == order.size()) {
            // Last partial batch of a pass stays partial; wrap on the next step.
            if (k > 0) break;
            ++wraps;
            pos = 0;
            std::mt19937_64 rng(mix_seed(
                seed_, splitmix64((static_cast<uint64_t>(epoch_) << 20) +
                                  (static_cast<uint64_t>(wraps) << 8) + (pool[0] & 0xffu))));
            shuffle_in_place(order, rng);
        }
        out.push_back(order[pos++]);
    }
    return out;
}

TriBatch TriBatchIterator::next() {
    if (done()) throw std::logic_error("TriBatchIterator: exhausted");
    ++step_;
    TriBatch b;
    std::vector<int> ol_sel = take(order_ol_, pos_ol_, wraps_ol_, batch_ol_, "ol");
    std::vector<int> a_sel = take(order_a_, pos_a_, wraps_a_, batch_a_, "a");
    std::vector<int> b_sel = take(order_b_, pos_b_, wraps_b_, batch_b_, "b");

    for (int k : ol_sel) {
        b.ol_rows_a.push_back(ds_.overlap_pairs[k].first);
        b.ol_rows_b.push_back(ds_.overlap_pairs[k].second);
    }
    for (int k : a_sel) b.a_rows.push_back(ds_.nonoverlap_a[k]);
    for (int k : b_sel) b.b_rows.push_back(ds_.nonoverlap_b[k]);

    b.ol_xa = gather_mat_rows(ds_.features_a, b.ol_rows_a);
    b.ol_ya = gather_mat_rows(ds_.labels_a, b.ol_rows_a);
    b.ol_xb = gather_mat_rows(ds_.features_b, b.ol_rows_b);
    b.a_xa = gather_mat_rows(ds_.features_a, b.a_rows);
    b.a_ya = gather_mat_rows(ds_.labels_a, b.a_rows);
    b.b_xb = gather_mat_rows(ds_.features_b, b.b_rows);
    if (b.a_xa.rows == 0) b.a_xa.cols = ds_.features_a.cols;
    if (b.b_xb.rows == 0) b.b_xb.cols = ds_.features_b.cols;
    return b;
}

VerticalDataset load_csv(const std::string& path_a, const std::string& path_b,
                         const std::string& path_overlap_map) {
    CsvTable ta = read_csv_table(path_a);
    CsvTable tb = read_csv_table(path_b);
    CsvTable tmap = read_csv_table(path_overlap_map);

    const int id_a_col = find_column(ta, "id", path_a);
    const int label_col = find_column(ta, "label", path_a);
    const int id_b_col = find_column(tb, "id", path_b);
    const int map_a_col = find_column(tmap, "id_a", path_overlap_map);
    const int map_b_col = find_column(tmap, "id_b", path_overlap_map);

    VerticalDataset ds;
    const int a_feats = static_cast<int>(ta.header.size()) - 2;
    const int b_feats = static_cast<int>(tb.header.size()) - 1;
    if (a_feats < 1) throw ParseError(path_a + ": no feature columns");
    if (b_feats < 1) throw ParseError(path_b + ": no feature columns");

    std::vector<double> raw_labels;
    std::map<long long, int> row_of_a, row_of_b;
    ds.features_a = Mat(static_cast<int>(ta.rows.size()), a_feats);
    for (size_t r = 0; r < ta.rows.size(); ++r) {
        long long id = static_cast<long long>(ta.rows[r][id_a_col]);
        if (!row_of_a.emplace(id, static_cast<int>(r)).second)
            throw ParseError(path_a + ":" + std::to_string(r + 2) + ": duplicate id " + std::to_string(id));
        ds.ids_a.push_back(id);
        raw_labels.push_back(ta.rows[r][label_col]);
        int c = 0;
        for (size_t col = 0; col < ta.rows[r].size(); ++col)
            if (static_cast<int>(col) != id_a_col && static_cast<int>(col) != label_col)
                ds.features_a.at(static_cast<int>(r), c++) = ta.rows[r][col];
    }
    ds.features_b = Mat(static_cast<int>(tb.rows.size()), b_feats);
    for (size_t r = 0; r < tb.rows.size(); ++r) {
        long long id = static_cast<long long>(tb.rows[r][id_b_col]);
        if (!row_of_b.emplace(id, static_cast<int>(r)).second)
            throw ParseError(path_b + ":" + std::to_string(r + 2) + ": duplicate id " + std::to_string(id));
        ds.ids_b.push_back(id);
        int c = 0;
        for (size_t col = 0; col < tb.rows[r].size(); ++col)
            if (static_cast<int>(col) != id_b_col) ds.features_b.at(static_cast<int>(r), c++) = tb.rows[r][col];
    }

    // One-hot classes from distinct label values, ascending.
    std::vector<double> classes = raw_labels;
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    ds.labels_a = Mat(static_cast<int>(raw_labels.size()), static_cast<int>(classes.size()));
    for (size_t r = 0; r < raw_labels.size(); ++r) {
        auto it = std::lower_bound(classes.begin(), classes.end(), raw_labels[r]);
        ds.labels_a.at(static_cast<int>(r), static_cast<int>(it - classes.begin())) = 1.0;
    }

    std::set<long long> seen_a, seen_b;
    for (size_t r = 0; r < tmap.rows.size(); ++r) {
        long long ida = static_cast<long long>(tmap.rows[r][map_a_col]);
        long long idb = static_cast<long long>(tmap.rows[r][map_b_col]);
        const std::string where = path_overlap_map + ":" + std::to_string(r + 2);
        if (!row_of_a.count(ida)) throw ParseError(where + ": unknown id_a " + std::to_string(ida));
        if (!row_of_b.count(idb)) throw ParseError(where + ": unknown id_b " + std::to_string(idb));
        if (!seen_a.insert(ida).second) throw ParseError(where + ": duplicate id_a " + std::to_string(ida));
        if (!seen_b.insert(idb).second) throw ParseError(where + ": duplicate id_b " + std::to_string(idb));
        ds.overlap_pairs.emplace_back(row_of_a[ida], row_of_b[idb]);
    }
    for (int r = 0; r < ds.features_a.rows; ++r)
        if (!seen_a.count(ds.ids_a[r])) ds.nonoverlap_a.push_back(r);
    for (int r = 0; r < ds.features_b.rows; ++r)
        if (!seen_b.count(ds.ids_b[r])) ds.nonoverlap_b.push_back(r);
    ds.validate();
    return ds;
}

void write_csv(const VerticalDataset& ds, const std::string& path_a, const std::string& path_b,
               const std::string& path_overlap_map) {
    auto label_value = [&](int r) {
        for (int c = 0; c < ds.labels_a.cols; ++c)
            if (ds.labels_a.at(r, c) == 1.0) return static_cast<double>(c);
        throw std::logic_error("write_csv: row without one-hot label");
    };
    {
        std::ofstream out(path_a);
        if (!out) throw ParseError(path_a + ": cannot open for writing");
        out << "id,label";
        for (int c = 0; c < ds.features_a.cols; ++c) out << ",fa" << c;
        out << "\n";
        for (int r = 0; r < ds.features_a.rows; ++r) {
            out << (r < static_cast<int>(ds.ids_a.size()) ? ds.ids_a[r] : r) << "," << label_value(r);
            for (int c = 0; c < ds.features_a.cols; ++c) out << "," << fmt_double(ds.features_a.at(r, c));
            out << "\n";
        }
    }
    {
        std::ofstream out(path_b);
        if (!out) throw ParseError(path_b + ": cannot open for writing");
        out << "id";
        for (int c = 0; c < ds.features_b.cols; ++c) out << ",fb" << c;
        out << "\n";
        for (int r = 0; r < ds.features_b.rows; ++r) {
            out << (r < static_cast<int>(ds.ids_b.size()) ? ds.ids_b[r] : r);
            for (int c = 0; c < ds.features_b.cols; ++c) out << "," << fmt_double(ds.features_b.at(r, c));
            out << "\n";
        }
    }
    {
        std::ofstream out(path_overlap_map);
        if (!out) throw ParseError(path_overlap_map + ": cannot open for writing");
        out << "id_a,id_b\n";
        for (auto [ia, ib] : ds.overlap_pairs)
            out << (ia < static_cast<int>(ds.ids_a.size()) ? ds.ids_a[ia] : ia) << ","
                << (ib < static_cast<int>(ds.ids_b.size()) ? ds.ids_b[ib] : ib) << "\n";
    }
}

}  // namespace fedmvt
