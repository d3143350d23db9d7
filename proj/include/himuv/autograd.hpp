#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Var is a handle to a graph node. Every op allocates a node that keeps its
// parents alive; calling backward() on a 1x1 result walks the graph in reverse
// topological order. Leaves created with requires_grad=true (parameters)
// accumulate gradients across backward() calls until zero_grad().

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace himuv {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

namespace ag {

struct Node {
    Matrix value;
    Matrix grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    void accumulate(const Matrix& g);
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Matrix& value() const { return node_->value; }
    Matrix& mutable_value() { return node_->value; }
    // Gradient of the last backward(); a zero matrix if none reached this node.
    Matrix grad() const;
    bool requires_grad() const { return node_->requires_grad; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    double item() const;
    bool defined() const { return static_cast<bool>(node_); }

    void zero_grad() { node_->grad.resize(0, 0); }
    // Requires a 1x1 value. Seeds d(self)/d(self) = 1.
    void backward() const;

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// While alive on this thread, ops record no graph (inference mode).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

Var constant(Matrix value);
Var scalar(double v);
Var leaf(Matrix value, bool requires_grad);
// Same value, no gradient path back to x.
Var detach(const Var& x);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
// a (R x C) + bias (1 x C) broadcast over rows.
Var add_row(const Var& a, const Var& bias);
// a (R x C) * s (R x 1) broadcast over columns.
Var mul_col(const Var& a, const Var& s);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var abs(const Var& a);

Var softmax_rows(const Var& a);
Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);

// out.flat[k] = a.flat[index[k]], or 0 when index[k] < 0. Row-major flat
// indexing. Backward scatter-adds. Covers padding, im2col, repetition.
Var gather(const Var& a, std::vector<long> index, Eigen::Index rows, Eigen::Index cols);
// out row r = a row index[r].
Var gather_rows(const Var& a, std::span<const long> index);

Var sum(const Var& a);
Var mean(const Var& a);
Var mean_rows(const Var& a);  // (R x C) -> (1 x C)

// Single-direction GRU over the rows of x (T x I). Gate layout [r | z | n].
// Weights: w_ih (I x 3H), w_hh (H x 3H), b_ih, b_hh (1 x 3H). Returns T x H.
Var gru(const Var& x, const Var& w_ih, const Var& w_hh, const Var& b_ih, const Var& b_hh,
        bool reverse);
// Single-direction LSTM. Gate layout [i | f | g | o]. w_ih (I x 4H),
// w_hh (H x 4H), b (1 x 4H). Returns T x H.
Var lstm(const Var& x, const Var& w_ih, const Var& w_hh, const Var& b);

}  // namespace ag
}  // namespace himuv
