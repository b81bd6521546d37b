#include "fedmvt/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <utility>

namespace fedmvt {

namespace {

constexpr double kCrossEntropyEps = 1e-12;

std::atomic<uint64_t> g_tape_counter{1};

[[noreturn]] void shape_fail(const char* op, const Mat& a, const Mat& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " + b.shape_str());
}

[[noreturn]] void shape_fail(const char* op, const Mat& a) {
    throw ShapeError(std::string(op) + ": bad shape " + a.shape_str());
}

}  // namespace

Mat Mat::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Mat m(static_cast<int>(rows.size()), rows.size() ? static_cast<int>(rows.begin()->size()) : 0);
    int r = 0;
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != m.cols)
            throw std::invalid_argument("Mat::from_rows: ragged rows");
        int c = 0;
        for (double x : row) m.at(r, c++) = x;
        ++r;
    }
    return m;
}

Mat Mat::filled(int r, int c, double value) {
    Mat m(r, c);
    for (double& x : m.v) x = value;
    return m;
}

Mat Mat::identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

std::string Mat::shape_str() const {
    return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

bool Mat::all_finite() const {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

bool operator==(const Mat& a, const Mat& b) {
    return a.rows == b.rows && a.cols == b.cols && a.v == b.v;
}

Mat mat_mul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows) shape_fail("matmul", a, b);
    Mat out(a.rows, b.cols);
    // ikj order keeps the inner loop contiguous.
    for (int i = 0; i < a.rows; ++i) {
        double* orow = out.row_ptr(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.row_ptr(k);
            for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Mat mat_add(const Mat& a, const Mat& b) {
    if (!a.same_shape(b)) shape_fail("add", a, b);
    Mat out = a;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.v[i];
    return out;
}

Mat mat_sub(const Mat& a, const Mat& b) {
    if (!a.same_shape(b)) shape_fail("sub", a, b);
    Mat out = a;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b.v[i];
    return out;
}

Mat mat_scale(const Mat& a, double c) {
    Mat out = a;
    for (double& x : out.v) x *= c;
    return out;
}

Mat mat_transpose(const Mat& a) {
    Mat out(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

double mat_max_abs_diff(const Mat& a, const Mat& b) {
    if (!a.same_shape(b)) shape_fail("max_abs_diff", a, b);
    double m = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
    return m;
}

double Tensor::scalar() const {
    if (m.rows != 1 || m.cols != 1) throw ShapeError("scalar(): tensor is " + m.shape_str() + ", expected [1x1]");
    return m.v[0];
}

Tensor detach(const Tensor& t) {
    Tensor out(t.m, false);
    return out;
}

Tape::Tape() : id_(g_tape_counter.fetch_add(1)) {}

NodeId Tape::check_id(NodeId n) const {
    if (n < 0 || static_cast<size_t>(n) >= nodes_.size())
        throw std::logic_error("Tape: node id " + std::to_string(n) + " out of range");
    return n;
}

Tensor Tape::leaf(Mat values, bool requires_grad) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(values);
    n.requires_grad = requires_grad;
    return push(std::move(n));
}

void Tape::watch(Tensor& t) {
    if (!t.requires_grad) throw std::logic_error("Tape::watch: tensor does not require gradients");
    Tensor bound = leaf(t.m, true);
    t.node = bound.node;
    t.tape = id_;
}

NodeId Tape::bind(const Tensor& t) {
    if (t.node != kNoNode) {
        if (t.tape != id_) throw std::logic_error("Tape: tensor recorded on a different tape");
        return check_id(t.node);
    }
    if (t.requires_grad)
        throw std::logic_error("Tape: requires_grad tensor used without watch()");
    Node n;
    n.op = Op::Leaf;
    n.value = t.m;
    n.requires_grad = false;
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

Tensor Tape::push(Node n) {
    if (sweeping_) throw std::logic_error("Tape: cannot record after backward started");
    nodes_.push_back(std::move(n));
    NodeId id = static_cast<NodeId>(nodes_.size() - 1);
    Tensor out(nodes_[id].value, false);
    out.node = id;
    out.tape = id_;
    out.requires_grad = nodes_[id].requires_grad;
    return out;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) shape_fail("matmul", a.m, b.m);
    NodeId ia = bind(a), ib = bind(b);
    Node n;
    n.op = Op::MatMul;
    n.a = ia;
    n.b = ib;
    n.value = mat_mul(nodes_[ia].value, nodes_[ib].value);
    n.requires_grad = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
    return push(std::move(n));
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    if (!a.m.same_shape(b.m)) shape_fail("add", a.m, b.m);
    NodeId ia = bind(a), ib = bind(b);
    Node n;
    n.op = Op::Add;
    n.a = ia;
    n.b = ib;
    n.value = mat_add(nodes_[ia].value, nodes_[ib].value);
    n.requires_grad = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
    return push(std::move(n));
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
    if (!a.m.same_shape(b.m)) shape_fail("sub", a.m, b.m);
    NodeId ia = bind(a), ib = bind(b);
    Node n;
    n.op = Op::Sub;
    n.a = ia;
    n.b = ib;
    n.value = mat_sub(nodes_[ia].value, nodes_[ib].value);
    n.requires_grad = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
    return push(std::move(n));
}

Tensor Tape::scale(const Tensor& a, double c) {
    NodeId ia = bind(a);
    Node n;
    n.op = Op::Scale;
    n.a = ia;
    n.c = c;
    n.value = mat_scale(nodes_[ia].value, c);
    n.requires_grad = nodes_[ia].requires_grad;
    return push(std::move(n));
}

Tensor Tape::add_row_vector(const Tensor& a, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) shape_fail("add_row_vector", a.m, row.m);
    NodeId ia = bind(a), ib = bind(row);
    Node n;
    n.op = Op::AddRowVec;
    n.a = ia;
    n.b = ib;
    n.value = nodes_[ia].value;
    const Mat& r = nodes_[ib].value;
    for (int i = 0; i < n.value.rows; ++i)
        for (int j = 0; j < n.value.cols; ++j) n.value.at(i, j) += r.at(0, j);
    n.requires_grad = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
    return push(std::move(n));
}

Tensor Tape::relu(const Tensor& a) {
    NodeId ia = bind(a);
    Node n;
    n.op = Op::Relu;
    n.a = ia;
    n.value = nodes_[ia].value;
    for (double& x : n.value.v) x = x > 0.0 ? x : 0.0;
    n.requires_grad = nodes_[ia].requires_grad;
    return push(std::move(n));
}

Tensor Tape::transpose(const Tensor& a) {
    NodeId ia = bind(a);
    Node n;
    n.op = Op::Transpose;
    n.a = ia;
    n.value = mat_transpose(nodes_[ia].value);
    n.requires_grad = nodes_[ia].requires_grad;
    return push(std::move(n));
}

Tensor Tape::concat_features(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) shape_fail("concat_features", a.m, b.m);
    NodeId ia = bind(a), ib = bind(b);
    const Mat& ma = nodes_[ia].value;
    const Mat& mb = nodes_[ib].value;
    Node n;
    n.op = Op::ConcatCols;
    n.a = ia;
    n.b = ib;
    n.value = Mat(ma.rows, ma.cols + mb.cols);
    for (int i = 0; i < ma.rows; ++i) {
        std::memcpy(n.value.row_ptr(i), ma.row_ptr(i), sizeof(double) * ma.cols);
        std::memcpy(n.value.row_ptr(i) + ma.cols, mb.row_ptr(i), sizeof(double) * mb.cols);
    }
    n.requires_grad = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
    return push(std::move(n));
}

Tensor Tape::concat_samples(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_samples: empty part list");
    Node n;
    n.op = Op::ConcatRows;
    int cols = parts.front().cols();
    int rows = 0;
    for (const Tensor& p : parts) {
        if (p.cols() != cols) shape_fail("concat_samples", parts.front().m, p.m);
        n.list_inputs.push_back(bind(p));
        rows += p.rows();
    }
    n.value = Mat(rows, cols);
    int r = 0;
    for (NodeId id : n.list_inputs) {
        const Mat& m = nodes_[id].value;
        if (!m.v.empty()) std::memcpy(n.value.row_ptr(r), m.v.data(), sizeof(double) * m.v.size());
        r += m.rows;
        n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
    }
    return push(std::move(n));
}

Tensor Tape::gather_rows(const Tensor& a, std::vector<int> idx) {
    NodeId ia = bind(a);
    const Mat& m = nodes_[ia].value;
    for (int i : idx)
        if (i < 0 || i >= m.rows)
            throw std::out_of_range("gather_rows: index " + std::to_string(i) + " outside " + m.shape_str());
    Node n;
    n.op = Op::GatherRows;
    n.a = ia;
    n.value = Mat(static_cast<int>(idx.size()), m.cols);
    for (size_t r = 0; r < idx.size(); ++r)
        std::memcpy(n.value.row_ptr(static_cast<int>(r)), m.row_ptr(idx[r]), sizeof(double) * m.cols);
    n.indices = std::move(idx);
    n.requires_grad = nodes_[ia].requires_grad;
    return push(std::move(n));
}

Tensor Tape::softmax_rows(const Tensor& a) {
    NodeId ia = bind(a);
    const Mat& m = nodes_[ia].value;
    if (!m.all_finite()) throw NumericError("softmax_rows: non-finite input");
    Node n;
    n.op = Op::SoftmaxRows;
    n.a = ia;
    n.value = Mat(m.rows, m.cols);
    for (int i = 0; i < m.rows; ++i) {
        double mx = m.at(i, 0);
        for (int j = 1; j < m.cols; ++j) mx = std::max(mx, m.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < m.cols; ++j) {
            double e = std::exp(m.at(i, j) - mx);
            n.value.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < m.cols; ++j) n.value.at(i, j) /= sum;
    }
    n.requires_grad = nodes_[ia].requires_grad;
    return push(std::move(n));
}

Tensor Tape::cross_entropy_mean(const Tensor& pred, const Tensor& target) {
    if (!pred.m.same_shape(target.m)) shape_fail("cross_entropy_mean", pred.m, target.m);
    if (pred.rows() == 0) shape_fail("cross_entropy_mean", pred.m);
    NodeId ip = bind(pred), it = bind(target);
    const Mat& p = nodes_[ip].value;
    const Mat& t = nodes_[it].value;
    Node n;
    n.op = Op::CrossEntropyMean;
    n.a = ip;
    n.b = it;
    double acc = 0.0;
    for (size_t i = 0; i < p.v.size(); ++i) acc -= t.v[i] * std::log(p.v[i] + kCrossEntropyEps);
    n.value = Mat(1, 1);
    n.value.v[0] = acc / p.rows;
    n.requires_grad = nodes_[ip].requires_grad || nodes_[it].requires_grad;
    return push(std::move(n));
}

Tensor Tape::mean_sq_row_distance(const Tensor& a, const Tensor& b) {
    if (!a.m.same_shape(b.m)) shape_fail("mean_sq_row_distance", a.m, b.m);
    if (a.rows() == 0) shape_fail("mean_sq_row_distance", a.m);
    NodeId ia = bind(a), ib = bind(b);
    const Mat& ma = nodes_[ia].value;
    const Mat& mb = nodes_[ib].value;
    Node n;
    n.op = Op::MeanSqRowDist;
    n.a = ia;
    n.b = ib;
    double acc = 0.0;
    for (size_t i = 0; i < ma.v.size(); ++i) {
        double d = ma.v[i] - mb.v[i];
        acc += d * d;
    }
    n.value = Mat(1, 1);
    n.value.v[0] = acc / ma.rows;
    n.requires_grad = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
    return push(std::move(n));
}

Tensor Tape::mean_sq_row_dot(const Tensor& a, const Tensor& b) {
    if (!a.m.same_shape(b.m)) shape_fail("mean_sq_row_dot", a.m, b.m);
    if (a.rows() == 0) shape_fail("mean_sq_row_dot", a.m);
    NodeId ia = bind(a), ib = bind(b);
    const Mat& ma = nodes_[ia].value;
    const Mat& mb = nodes_[ib].value;
    Node n;
    n.op = Op::MeanSqRowDot;
    n.a = ia;
    n.b = ib;
    double acc = 0.0;
    for (int i = 0; i < ma.rows; ++i) {
        double dot = 0.0;
        for (int j = 0; j < ma.cols; ++j) dot += ma.at(i, j) * mb.at(i, j);
        acc += dot * dot;
    }
    n.value = Mat(1, 1);
    n.value.v[0] = acc / ma.rows;
    n.requires_grad = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
    return push(std::move(n));
}

Tensor Tape::mean_sq_outer_fro(const Tensor& a, const Tensor& b) {
    if (!a.m.same_shape(b.m)) shape_fail("mean_sq_outer_fro", a.m, b.m);
    if (a.rows() == 0) shape_fail("mean_sq_outer_fro", a.m);
    NodeId ia = bind(a), ib = bind(b);
    const Mat& ma = nodes_[ia].value;
    const Mat& mb = nodes_[ib].value;
    Node n;
    n.op = Op::MeanSqOuterFro;
    n.a = ia;
    n.b = ib;
    // ||a_i (x) b_i||_F^2 = ||a_i||^2 ||b_i||^2 for row-vector outer products.
    double acc = 0.0;
    for (int i = 0; i < ma.rows; ++i) {
        double na = 0.0, nb = 0.0;
        for (int j = 0; j < ma.cols; ++j) {
            na += ma.at(i, j) * ma.at(i, j);
            nb += mb.at(i, j) * mb.at(i, j);
        }
        acc += na * nb;
    }
    n.value = Mat(1, 1);
    n.value.v[0] = acc / ma.rows;
    n.requires_grad = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
    return push(std::move(n));
}

Tensor Tape::sum_all(const Tensor& a) {
    if (a.rows() == 0 || a.cols() == 0) shape_fail("sum_all", a.m);
    NodeId ia = bind(a);
    Node n;
    n.op = Op::SumAll;
    n.a = ia;
    double acc = 0.0;
    for (double x : nodes_[ia].value.v) acc += x;
    n.value = Mat(1, 1);
    n.value.v[0] = acc;
    n.requires_grad = nodes_[ia].requires_grad;
    return push(std::move(n));
}

Tensor Tape::mean_all(const Tensor& a) {
    if (a.rows() == 0 || a.cols() == 0) shape_fail("mean_all", a.m);
    NodeId ia = bind(a);
    Node n;
    n.op = Op::MeanAll;
    n.a = ia;
    n.c = static_cast<double>(nodes_[ia].value.v.size());
    double acc = 0.0;
    for (double x : nodes_[ia].value.v) acc += x;
    n.value = Mat(1, 1);
    n.value.v[0] = acc / n.c;
    n.requires_grad = nodes_[ia].requires_grad;
    return push(std::move(n));
}

Tensor Tape::row_mean(const Tensor& a) {
    if (a.rows() == 0 || a.cols() == 0) shape_fail("row_mean", a.m);
    NodeId ia = bind(a);
    const Mat& m = nodes_[ia].value;
    Node n;
    n.op = Op::RowMean;
    n.a = ia;
    n.value = Mat(m.rows, 1);
    for (int r = 0; r < m.rows; ++r) {
        double acc = 0.0;
        for (int c = 0; c < m.cols; ++c) acc += m.at(r, c);
        n.value.at(r, 0) = acc / m.cols;
    }
    n.requires_grad = nodes_[ia].requires_grad;
    return push(std::move(n));
}

void Tape::accumulate(NodeId n, const Mat& g) {
    Node& node = nodes_[check_id(n)];
    if (!node.requires_grad) return;
    if (!node.has_grad) {
        node.grad = g;
        node.has_grad = true;
    } else {
        for (size_t i = 0; i < node.grad.v.size(); ++i) node.grad.v[i] += g.v[i];
    }
}

void Tape::seed_gradient(NodeId n, const Mat& g) {
    Node& node = nodes_[check_id(n)];
    if (!node.value.same_shape(g)) shape_fail("seed_gradient", node.value, g);
    if (sweep_pos_ != kNoNode && n >= sweep_pos_)
        throw std::logic_error("Tape::seed_gradient: node already processed");
    accumulate(n, g);
}

void Tape::backward(const Tensor& loss) {
    if (loss.rows() != 1 || loss.cols() != 1)
        throw ShapeError("backward: loss must be [1x1], got " + loss.m.shape_str());
    if (loss.node == kNoNode || loss.tape != id_)
        throw std::logic_error("backward: loss is not recorded on this tape");
    Mat one(1, 1);
    one.v[0] = 1.0;
    seed_gradient(loss.node, one);
    finish_backward();
}

void Tape::sweep_down_to(NodeId lo_exclusive) {
    sweeping_ = true;
    NodeId start = (sweep_pos_ == kNoNode) ? static_cast<NodeId>(nodes_.size()) : sweep_pos_;
    for (NodeId i = start - 1; i > lo_exclusive; --i) backprop_node(i);
    if (sweep_pos_ == kNoNode || lo_exclusive + 1 < sweep_pos_) sweep_pos_ = lo_exclusive + 1;
}

void Tape::backprop_node(NodeId i) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.requires_grad || n.op == Op::Leaf) return;
    const Mat& g = n.grad;
    auto value_of = [&](NodeId id) -> const Mat& { return nodes_[id].value; };
    switch (n.op) {
        case Op::Leaf:
            break;
        case Op::MatMul: {
            const Mat& a = value_of(n.a);
            const Mat& b = value_of(n.b);
            if (nodes_[n.a].requires_grad) accumulate(n.a, mat_mul(g, mat_transpose(b)));
            if (nodes_[n.b].requires_grad) accumulate(n.b, mat_mul(mat_transpose(a), g));
            break;
        }
        case Op::Add:
            accumulate(n.a, g);
            accumulate(n.b, g);
            break;
        case Op::Sub:
            accumulate(n.a, g);
            if (nodes_[n.b].requires_grad) accumulate(n.b, mat_scale(g, -1.0));
            break;
        case Op::Scale:
            accumulate(n.a, mat_scale(g, n.c));
            break;
        case Op::AddRowVec: {
            accumulate(n.a, g);
            if (nodes_[n.b].requires_grad) {
                Mat gr(1, g.cols);
                for (int r = 0; r < g.rows; ++r)
                    for (int c = 0; c < g.cols; ++c) gr.at(0, c) += g.at(r, c);
                accumulate(n.b, gr);
            }
            break;
        }
        case Op::Relu: {
            const Mat& a = value_of(n.a);
            Mat ga = g;
            for (size_t k = 0; k < ga.v.size(); ++k)
                if (a.v[k] <= 0.0) ga.v[k] = 0.0;
            accumulate(n.a, ga);
            break;
        }
        case Op::Transpose:
            accumulate(n.a, mat_transpose(g));
            break;
        case Op::ConcatCols: {
            const Mat& a = value_of(n.a);
            const Mat& b = value_of(n.b);
            if (nodes_[n.a].requires_grad) {
                Mat ga(a.rows, a.cols);
                for (int r = 0; r < a.rows; ++r)
                    std::memcpy(ga.row_ptr(r), g.row_ptr(r), sizeof(double) * a.cols);
                accumulate(n.a, ga);
            }
            if (nodes_[n.b].requires_grad) {
                Mat gb(b.rows, b.cols);
                for (int r = 0; r < b.rows; ++r)
                    std::memcpy(gb.row_ptr(r), g.row_ptr(r) + a.cols, sizeof(double) * b.cols);
                accumulate(n.b, gb);
            }
            break;
        }
        case Op::ConcatRows: {
            int r = 0;
            for (NodeId id : n.list_inputs) {
                const Mat& part = value_of(id);
                if (nodes_[id].requires_grad) {
                    Mat gp(part.rows, part.cols);
                    if (!gp.v.empty())
                        std::memcpy(gp.v.data(), g.row_ptr(r), sizeof(double) * gp.v.size());
                    accumulate(id, gp);
                }
                r += part.rows;
            }
            break;
        }
        case Op::GatherRows: {
            const Mat& a = value_of(n.a);
            Mat ga(a.rows, a.cols);
            for (size_t r = 0; r < n.indices.size(); ++r) {
                const double* src = g.row_ptr(static_cast<int>(r));
                double* dst = ga.row_ptr(n.indices[r]);
                for (int c = 0; c < a.cols; ++c) dst[c] += src[c];
            }
            accumulate(n.a, ga);
            break;
        }
        case Op::SoftmaxRows: {
            const Mat& y = n.value;
            Mat ga(y.rows, y.cols);
            for (int r = 0; r < y.rows; ++r) {
                double dot = 0.0;
                for (int c = 0; c < y.cols; ++c) dot += g.at(r, c) * y.at(r, c);
                for (int c = 0; c < y.cols; ++c) ga.at(r, c) = y.at(r, c) * (g.at(r, c) - dot);
            }
            accumulate(n.a, ga);
            break;
        }
        case Op::CrossEntropyMean: {
            const Mat& p = value_of(n.a);
            const Mat& t = value_of(n.b);
            const double s = g.v[0] / p.rows;
            if (nodes_[n.a].requires_grad) {
                Mat gp(p.rows, p.cols);
                for (size_t k = 0; k < p.v.size(); ++k) gp.v[k] = -s * t.v[k] / (p.v[k] + kCrossEntropyEps);
                accumulate(n.a, gp);
            }
            if (nodes_[n.b].requires_grad) {
                Mat gt(t.rows, t.cols);
                for (size_t k = 0; k < t.v.size(); ++k) gt.v[k] = -s * std::log(p.v[k] + kCrossEntropyEps);
                accumulate(n.b, gt);
            }
            break;
        }
        case Op::MeanSqRowDist: {
            const Mat& a = value_of(n.a);
            const Mat& b = value_of(n.b);
            const double s = 2.0 * g.v[0] / a.rows;
            if (nodes_[n.a].requires_grad) {
                Mat ga(a.rows, a.cols);
                for (size_t k = 0; k < a.v.size(); ++k) ga.v[k] = s * (a.v[k] - b.v[k]);
                accumulate(n.a, ga);
            }
            if (nodes_[n.b].requires_grad) {
                Mat gb(a.rows, a.cols);
                for (size_t k = 0; k < a.v.size(); ++k) gb.v[k] = -s * (a.v[k] - b.v[k]);
                accumulate(n.b, gb);
            }
            break;
        }
        case Op::MeanSqRowDot: {
            const Mat& a = value_of(n.a);
            const Mat& b = value_of(n.b);
            const double s = 2.0 * g.v[0] / a.rows;
            Mat ga(a.rows, a.cols), gb(a.rows, a.cols);
            for (int r = 0; r < a.rows; ++r) {
                double dot = 0.0;
                for (int c = 0; c < a.cols; ++c) dot += a.at(r, c) * b.at(r, c);
                for (int c = 0; c < a.cols; ++c) {
                    ga.at(r, c) = s * dot * b.at(r, c);
                    gb.at(r, c) = s * dot * a.at(r, c);
                }
            }
            if (nodes_[n.a].requires_grad) accumulate(n.a, ga);
            if (nodes_[n.b].requires_grad) accumulate(n.b, gb);
            break;
        }
        case Op::MeanSqOuterFro: {
            const Mat& a = value_of(n.a);
            const Mat& b = value_of(n.b);
            const double s = 2.0 * g.v[0] / a.rows;
            Mat ga(a.rows, a.cols), gb(a.rows, a.cols);
            for (int r = 0; r < a.rows; ++r) {
                double na = 0.0, nb = 0.0;
                for (int c = 0; c < a.cols; ++c) {
                    na += a.at(r, c) * a.at(r, c);
                    nb += b.at(r, c) * b.at(r, c);
                }
                for (int c = 0; c < a.cols; ++c) {
                    ga.at(r, c) = s * nb * a.at(r, c);
                    gb.at(r, c) = s * na * b.at(r, c);
                }
            }
            if (nodes_[n.a].requires_grad) accumulate(n.a, ga);
            if (nodes_[n.b].requires_grad) accumulate(n.b, gb);
            break;
        }
        case Op::SumAll: {
            const Mat& a = value_of(n.a);
            accumulate(n.a, Mat::filled(a.rows, a.cols, g.v[0]));
            break;
        }
        case Op::MeanAll: {
            const Mat& a = value_of(n.a);
            accumulate(n.a, Mat::filled(a.rows, a.cols, g.v[0] / n.c));
            break;
        }
        case Op::RowMean: {
            const Mat& a = value_of(n.a);
            Mat ga(a.rows, a.cols);
            for (int r = 0; r < a.rows; ++r) {
                const double s = g.at(r, 0) / a.cols;
                for (int c = 0; c < a.cols; ++c) ga.at(r, c) = s;
            }
            accumulate(n.a, ga);
            break;
        }
    }
}

bool Tape::has_grad(NodeId n) const { return nodes_[check_id(n)].has_grad; }

Mat Tape::grad(NodeId n) const {
    const Node& node = nodes_[check_id(n)];
    if (node.has_grad) return node.grad;
    return Mat(node.value.rows, node.value.cols);
}

GradMap Tape::leaf_gradients() const {
    GradMap out;
    for (size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        if (n.op == Op::Leaf && n.requires_grad)
            out.emplace(static_cast<NodeId>(i), n.has_grad ? n.grad : Mat(n.value.rows, n.value.cols));
    }
    return out;
}

}  // namespace fedmvt
