#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace fedmvt {

class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of 64-bit floats. Plain storage, no graph identity.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {
        if (r < 0 || c < 0) throw std::invalid_argument("Mat: negative dimension");
    }
    static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Mat filled(int r, int c, double value);
    static Mat identity(int n);

    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    const double* row_ptr(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
    double* row_ptr(int r) { return v.data() + static_cast<size_t>(r) * cols; }

    bool empty() const { return rows == 0 || cols == 0; }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const;
    bool all_finite() const;
};

bool operator==(const Mat& a, const Mat& b);

// Plain (tape-free) matrix helpers; used by oracles, data generation and the
// optimizer. Graph-recorded counterparts live on Tape.
Mat mat_mul(const Mat& a, const Mat& b);
Mat mat_add(const Mat& a, const Mat& b);
Mat mat_sub(const Mat& a, const Mat& b);
Mat mat_scale(const Mat& a, double c);
Mat mat_transpose(const Mat& a);
double mat_max_abs_diff(const Mat& a, const Mat& b);

using NodeId = int32_t;
inline constexpr NodeId kNoNode = -1;

/// Matrix value plus an optional identity on a recording tape.
/// Persistent parameters keep requires_grad = true between steps and are
/// re-bound to a fresh tape via Tape::watch at the start of each step.
struct Tensor {
    Mat m;
    NodeId node = kNoNode;
    uint64_t tape = 0;  // id of the owning tape, 0 = detached
    bool requires_grad = false;

    Tensor() = default;
    explicit Tensor(Mat values, bool rg = false) : m(std::move(values)), requires_grad(rg) {}

    int rows() const { return m.rows; }
    int cols() const { return m.cols; }
    double scalar() const;
    bool on_tape() const { return node != kNoNode; }
};

/// Same values, no tape connection, requires_grad = false.
Tensor detach(const Tensor& t);

using GradMap = std::unordered_map<NodeId, Mat>;

/// Append-only reverse-mode tape. Node ids are topological by construction.
/// backward() is the scalar-loss entry point; seed_gradient / sweep_down_to
/// expose the partial sweeps the two-sided federated backward needs.
class Tape {
public:
    Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    uint64_t id() const { return id_; }
    size_t size() const { return nodes_.size(); }

    Tensor leaf(Mat values, bool requires_grad = false);
    Tensor constant(Mat values) { return leaf(std::move(values), false); }
    /// Binds a persistent tensor (typically a parameter) as a leaf of this
    /// tape, overwriting any binding to a previous tape.
    void watch(Tensor& t);

    Tensor matmul(const Tensor& a, const Tensor& b);
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor scale(const Tensor& a, double c);
    Tensor add_row_vector(const Tensor& a, const Tensor& row);
    Tensor relu(const Tensor& a);
    Tensor transpose(const Tensor& a);
    Tensor concat_features(const Tensor& a, const Tensor& b);
    Tensor concat_samples(const std::vector<Tensor>& parts);
    Tensor gather_rows(const Tensor& a, std::vector<int> idx);
    Tensor softmax_rows(const Tensor& a);
    Tensor cross_entropy_mean(const Tensor& pred, const Tensor& target);
    Tensor mean_sq_row_distance(const Tensor& a, const Tensor& b);
    Tensor mean_sq_row_dot(const Tensor& a, const Tensor& b);
    Tensor mean_sq_outer_fro(const Tensor& a, const Tensor& b);
    Tensor sum_all(const Tensor& a);
    Tensor mean_all(const Tensor& a);
    Tensor row_mean(const Tensor& a);  // m x n -> m x 1

    void backward(const Tensor& loss);

    // Partial-sweep interface for the split two-party backward.
    void seed_gradient(NodeId n, const Mat& g);
    void sweep_down_to(NodeId lo_exclusive);
    void finish_backward() { sweep_down_to(-1); }

    bool has_grad(NodeId n) const;
    /// Accumulated gradient; zero matrix if the node was never reached.
    Mat grad(NodeId n) const;
    /// Gradients of every requires_grad leaf (zeros for unreachable ones).
    GradMap leaf_gradients() const;

    const Mat& value(NodeId n) const { return nodes_[check_id(n)].value; }

private:
    enum class Op : uint8_t {
        Leaf,
        MatMul,
        Add,
        Sub,
        Scale,
        AddRowVec,
        Relu,
        Transpose,
        ConcatCols,
        ConcatRows,
        GatherRows,
        SoftmaxRows,
        CrossEntropyMean,
        MeanSqRowDist,
        MeanSqRowDot,
        MeanSqOuterFro,
        SumAll,
        MeanAll,
        RowMean,
    };

    struct Node {
        Op op = Op::Leaf;
        NodeId a = kNoNode;
        NodeId b = kNoNode;
        std::vector<NodeId> list_inputs;  // ConcatRows
        std::vector<int> indices;         // GatherRows
        double c = 0.0;                   // Scale / MeanAll divisor
        Mat value;
        Mat grad;
        bool has_grad = false;
        bool requires_grad = false;
    };

    uint64_t id_;
    std::vector<Node> nodes_;
    NodeId sweep_pos_ = kNoNode;  // lowest id already processed; kNoNode = sweep not started
    bool sweeping_ = false;

    NodeId check_id(NodeId n) const;
    NodeId bind(const Tensor& t);
    Tensor push(Node n);
    void accumulate(NodeId n, const Mat& g);
    void backprop_node(NodeId i);
};

}  // namespace fedmvt
