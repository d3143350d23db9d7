#include "himuv/autograd.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace himuv::ag {

void Node::accumulate(const Matrix& g)
{
    if (grad.size() == 0) {
        grad = g;
    } else {
        grad += g;
    }
}

Matrix Var::grad() const
{
    if (node_->grad.size() == 0) {
        return Matrix::Zero(node_->value.rows(), node_->value.cols());
    }
    return node_->grad;
}

double Var::item() const
{
    if (node_->value.size() != 1) {
        throw std::logic_error("item() on a non-scalar value");
    }
    return node_->value(0, 0);
}

void Var::backward() const
{
    if (node_->value.size() != 1) {
        throw std::logic_error("backward() requires a scalar root");
    }
    if (!node_->requires_grad) {
        return;
    }
    // Iterative post-order DFS for a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].get();
            if (p->requires_grad && visited.insert(p).second) {
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    node_->accumulate(Matrix::Constant(1, 1, 1.0));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && n->grad.size() != 0) {
            n->backward(*n);
        }
    }
}

namespace {
thread_local bool g_recording = true;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_recording)
{
    g_recording = false;
}

NoGradGuard::~NoGradGuard()
{
    g_recording = previous_;
}

namespace {

Var make(Matrix value, std::vector<Var> parents, std::function<void(Node&)> backward)
{
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    bool any = false;
    if (g_recording) {
        for (const auto& p : parents) {
            any = any || p.requires_grad();
        }
    }
    if (any) {
        node->requires_grad = true;
        node->parents.reserve(parents.size());
        for (const auto& p : parents) {
            node->parents.push_back(p.node());
        }
        node->backward = std::move(backward);
    }
    return Var(std::move(node));
}

void push(Node& n, std::size_t i, const Matrix& g)
{
    if (n.parents[i]->requires_grad) {
        n.parents[i]->accumulate(g);
    }
}

bool wants(const Node& n, std::size_t i)
{
    return n.parents[i]->requires_grad;
}

void check_same_shape(const Var& a, const Var& b, const char* op)
{
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
    }
}

template <typename F, typename D>
Var unary(const Var& a, F f, D dfdx_from_xy)
{
    Matrix y = a.value().unaryExpr(f);
    return make(y, {a}, [dfdx_from_xy](Node& n) {
        const Matrix& x = n.parents[0]->value;
        Matrix g = n.grad;
        for (Eigen::Index i = 0; i < g.size(); ++i) {
            g.data()[i] *= dfdx_from_xy(x.data()[i], n.value.data()[i]);
        }
        push(n, 0, g);
    });
}

}  // namespace

Var constant(Matrix value)
{
    return leaf(std::move(value), false);
}

Var scalar(double v)
{
    return constant(Matrix::Constant(1, 1, v));
}

Var leaf(Matrix value, bool requires_grad)
{
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return Var(std::move(node));
}

Var detach(const Var& x)
{
    return constant(x.value());
}

Var add(const Var& a, const Var& b)
{
    check_same_shape(a, b, "add");
    return make(a.value() + b.value(), {a, b}, [](Node& n) {
        push(n, 0, n.grad);
        push(n, 1, n.grad);
    });
}

Var sub(const Var& a, const Var& b)
{
    check_same_shape(a, b, "sub");
    return make(a.value() - b.value(), {a, b}, [](Node& n) {
        push(n, 0, n.grad);
        if (wants(n, 1)) {
            push(n, 1, -n.grad);
        }
    });
}

Var mul(const Var& a, const Var& b)
{
    check_same_shape(a, b, "mul");
    return make(a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
        if (wants(n, 0)) {
            push(n, 0, n.grad.cwiseProduct(n.parents[1]->value));
        }
        if (wants(n, 1)) {
            push(n, 1, n.grad.cwiseProduct(n.parents[0]->value));
        }
    });
}

Var add_row(const Var& a, const Var& bias)
{
    if (bias.rows() != 1 || bias.cols() != a.cols()) {
        throw std::invalid_argument("add_row: bias must be 1 x cols");
    }
    Matrix y = a.value().rowwise() + bias.value().row(0);
    return make(std::move(y), {a, bias}, [](Node& n) {
        push(n, 0, n.grad);
        if (wants(n, 1)) {
            push(n, 1, n.grad.colwise().sum());
        }
    });
}

Var mul_col(const Var& a, const Var& s)
{
    if (s.cols() != 1 || s.rows() != a.rows()) {
        throw std::invalid_argument("mul_col: scale must be rows x 1");
    }
    Matrix y = a.value().array().colwise() * s.value().col(0).array();
    return make(std::move(y), {a, s}, [](Node& n) {
        const Matrix& av = n.parents[0]->value;
        const Matrix& sv = n.parents[1]->value;
        if (wants(n, 0)) {
            Matrix g = n.grad.array().colwise() * sv.col(0).array();
            push(n, 0, g);
        }
        if (wants(n, 1)) {
            Matrix g = n.grad.cwiseProduct(av).rowwise().sum();
            push(n, 1, g);
        }
    });
}

Var scale(const Var& a, double s)
{
    return make(a.value() * s, {a}, [s](Node& n) { push(n, 0, n.grad * s); });
}

Var add_scalar(const Var& a, double s)
{
    Matrix y = a.value().array() + s;
    return make(std::move(y), {a}, [](Node& n) { push(n, 0, n.grad); });
}

Var matmul(const Var& a, const Var& b)
{
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimension mismatch");
    }
    Matrix y = a.value() * b.value();
    return make(std::move(y), {a, b}, [](Node& n) {
        if (wants(n, 0)) {
            push(n, 0, n.grad * n.parents[1]->value.transpose());
        }
        if (wants(n, 1)) {
            push(n, 1, n.parents[0]->value.transpose() * n.grad);
        }
    });
}

Var transpose(const Var& a)
{
    Matrix y = a.value().transpose();
    return make(std::move(y), {a}, [](Node& n) {
        Matrix g = n.grad.transpose();
        push(n, 0, g);
    });
}

Var relu(const Var& a)
{
    return unary(
        a, [](double x) { return x > 0 ? x : 0.0; },
        [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, double slope)
{
    return unary(
        a, [slope](double x) { return x > 0 ? x : slope * x; },
        [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Var tanh(const Var& a)
{
    return unary(
        a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

namespace {
double sigmoid_scalar(double x)
{
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus_scalar(double x)
{
    return x > 30.0 ? x : std::log1p(std::exp(x));
}
}  // namespace

Var sigmoid(const Var& a)
{
    return unary(
        a, [](double x) { return sigmoid_scalar(x); },
        [](double, double y) { return y * (1.0 - y); });
}

Var softplus(const Var& a)
{
    return unary(
        a, [](double x) { return softplus_scalar(x); },
        [](double x, double) { return sigmoid_scalar(x); });
}

Var exp(const Var& a)
{
    return unary(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a)
{
    return unary(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(const Var& a)
{
    return unary(
        a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(const Var& a)
{
    return unary(
        a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var softmax_rows(const Var& a)
{
    Matrix y = a.value();
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const double m = y.row(r).maxCoeff();
        y.row(r) = (y.row(r).array() - m).exp();
        y.row(r) /= y.row(r).sum();
    }
    return make(std::move(y), {a}, [](Node& n) {
        const Matrix& y = n.value;
        Matrix g = y.cwiseProduct(n.grad);
        Eigen::VectorXd dots = g.rowwise().sum();
        g -= (y.array().colwise() * dots.array()).matrix();
        push(n, 0, g);
    });
}

Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps)
{
    const Eigen::Index rows = x.rows();
    const Eigen::Index cols = x.cols();
    if (gain.cols() != cols || bias.cols() != cols) {
        throw std::invalid_argument("layer_norm_rows: parameter width mismatch");
    }
    Matrix xhat(rows, cols);
    Eigen::VectorXd inv_std(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double mu = x.value().row(r).mean();
        const double var = (x.value().row(r).array() - mu).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (x.value().row(r).array() - mu) * inv_std(r);
    }
    Matrix y = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() +
               bias.value().row(0).array();
    return make(std::move(y), {x, gain, bias}, [xhat, inv_std](Node& n) {
        const Matrix& dy = n.grad;
        if (wants(n, 0)) {
            const Matrix& g = n.parents[1]->value;
            Matrix dxhat = dy.array().rowwise() * g.row(0).array();
            Matrix dx(dy.rows(), dy.cols());
            for (Eigen::Index r = 0; r < dy.rows(); ++r) {
                const double m1 = dxhat.row(r).mean();
                const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
                dx.row(r) = (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std(r);
            }
            push(n, 0, dx);
        }
        if (wants(n, 1)) {
            push(n, 1, dy.cwiseProduct(xhat).colwise().sum());
        }
        if (wants(n, 2)) {
            push(n, 2, dy.colwise().sum());
        }
    });
}

Var concat_cols(std::span<const Var> parts)
{
    if (parts.empty()) {
        throw std::invalid_argument("concat_cols: no inputs");
    }
    const Eigen::Index rows = parts[0].rows();
    Eigen::Index cols = 0;
    std::vector<Eigen::Index> offsets;
    for (const auto& p : parts) {
        if (p.rows() != rows) {
            throw std::invalid_argument("concat_cols: row count mismatch");
        }
        offsets.push_back(cols);
        cols += p.cols();
    }
    Matrix y(rows, cols);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        y.middleCols(offsets[i], parts[i].cols()) = parts[i].value();
    }
    return make(std::move(y), std::vector<Var>(parts.begin(), parts.end()), [offsets](Node& n) {
        for (std::size_t i = 0; i < n.parents.size(); ++i) {
            if (wants(n, i)) {
                push(n, i, n.grad.middleCols(offsets[i], n.parents[i]->value.cols()));
            }
        }
    });
}

Var concat_rows(std::span<const Var> parts)
{
    if (parts.empty()) {
        throw std::invalid_argument("concat_rows: no inputs");
    }
    const Eigen::Index cols = parts[0].cols();
    Eigen::Index rows = 0;
    std::vector<Eigen::Index> offsets;
    for (const auto& p : parts) {
        if (p.cols() != cols) {
            throw std::invalid_argument("concat_rows: column count mismatch");
        }
        offsets.push_back(rows);
        rows += p.rows();
    }
    Matrix y(rows, cols);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        y.middleRows(offsets[i], parts[i].rows()) = parts[i].value();
    }
    return make(std::move(y), std::vector<Var>(parts.begin(), parts.end()), [offsets](Node& n) {
        for (std::size_t i = 0; i < n.parents.size(); ++i) {
            if (wants(n, i)) {
                push(n, i, n.grad.middleRows(offsets[i], n.parents[i]->value.rows()));
            }
        }
    });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count)
{
    if (start < 0 || count < 0 || start + count > a.cols()) {
        throw std::out_of_range("slice_cols: range outside input");
    }
    return make(a.value().middleCols(start, count), {a}, [start](Node& n) {
        const Matrix& x = n.parents[0]->value;
        Matrix g = Matrix::Zero(x.rows(), x.cols());
        g.middleCols(start, n.grad.cols()) = n.grad;
        push(n, 0, g);
    });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count)
{
    if (start < 0 || count < 0 || start + count > a.rows()) {
        throw std::out_of_range("slice_rows: range outside input");
    }
    return make(a.value().middleRows(start, count), {a}, [start](Node& n) {
        const Matrix& x = n.parents[0]->value;
        Matrix g = Matrix::Zero(x.rows(), x.cols());
        g.middleRows(start, n.grad.rows()) = n.grad;
        push(n, 0, g);
    });
}

Var gather(const Var& a, std::vector<long> index, Eigen::Index rows, Eigen::Index cols)
{
    if (static_cast<Eigen::Index>(index.size()) != rows * cols) {
        throw std::invalid_argument("gather: index size does not match output shape");
    }
    const long limit = static_cast<long>(a.value().size());
    Matrix y(rows, cols);
    const double* src = a.value().data();
    double* dst = y.data();
    for (std::size_t k = 0; k < index.size(); ++k) {
        const long i = index[k];
        if (i >= limit) {
            throw std::out_of_range("gather: index outside input");
        }
        dst[k] = i < 0 ? 0.0 : src[i];
    }
    return make(std::move(y), {a}, [index = std::move(index)](Node& n) {
        const Matrix& x = n.parents[0]->value;
        Matrix g = Matrix::Zero(x.rows(), x.cols());
        double* gd = g.data();
        const double* up = n.grad.data();
        for (std::size_t k = 0; k < index.size(); ++k) {
            if (index[k] >= 0) {
                gd[index[k]] += up[k];
            }
        }
        push(n, 0, g);
    });
}

Var gather_rows(const Var& a, std::span<const long> index)
{
    const Eigen::Index cols = a.cols();
    std::vector<long> flat;
    flat.reserve(index.size() * static_cast<std::size_t>(cols));
    for (long r : index) {
        if (r < 0 || r >= a.rows()) {
            throw std::out_of_range("gather_rows: row index outside input");
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            flat.push_back(r * cols + c);
        }
    }
    return gather(a, std::move(flat), static_cast<Eigen::Index>(index.size()), cols);
}

Var sum(const Var& a)
{
    return make(Matrix::Constant(1, 1, a.value().sum()), {a}, [](Node& n) {
        const Matrix& x = n.parents[0]->value;
        push(n, 0, Matrix::Constant(x.rows(), x.cols(), n.grad(0, 0)));
    });
}

Var mean(const Var& a)
{
    const double count = static_cast<double>(a.value().size());
    return scale(sum(a), 1.0 / count);
}

Var mean_rows(const Var& a)
{
    Matrix y = a.value().colwise().mean();
    return make(std::move(y), {a}, [](Node& n) {
        const Matrix& x = n.parents[0]->value;
        Matrix g = n.grad.replicate(x.rows(), 1) / static_cast<double>(x.rows());
        push(n, 0, g);
    });
}

Var gru(const Var& x, const Var& w_ih, const Var& w_hh, const Var& b_ih, const Var& b_hh,
        bool reverse)
{
    const Eigen::Index steps = x.rows();
    const Eigen::Index hidden = w_hh.rows();
    if (w_ih.rows() != x.cols() || w_ih.cols() != 3 * hidden || w_hh.cols() != 3 * hidden ||
        b_ih.cols() != 3 * hidden || b_hh.cols() != 3 * hidden) {
        throw std::invalid_argument("gru: weight shapes inconsistent with input");
    }
    Matrix gi = (x.value() * w_ih.value()).rowwise() + b_ih.value().row(0);
    Matrix out(steps, hidden);
    Matrix r_all(steps, hidden), z_all(steps, hidden), n_all(steps, hidden), ghn_all(steps, hidden);
    Matrix hprev_all(steps, hidden);
    RowVector h = RowVector::Zero(hidden);
    for (Eigen::Index s = 0; s < steps; ++s) {
        const Eigen::Index t = reverse ? steps - 1 - s : s;
        RowVector gh = h * w_hh.value() + b_hh.value().row(0);
        hprev_all.row(t) = h;
        for (Eigen::Index j = 0; j < hidden; ++j) {
            const double r = sigmoid_scalar(gi(t, j) + gh(j));
            const double z = sigmoid_scalar(gi(t, hidden + j) + gh(hidden + j));
            const double nn = std::tanh(gi(t, 2 * hidden + j) + r * gh(2 * hidden + j));
            r_all(t, j) = r;
            z_all(t, j) = z;
            n_all(t, j) = nn;
            ghn_all(t, j) = gh(2 * hidden + j);
            h(j) = (1.0 - z) * nn + z * h(j);
        }
        out.row(t) = h;
    }
    return make(std::move(out), {x, w_ih, w_hh, b_ih, b_hh},
                [=](Node& n) {
                    const Matrix& xv = n.parents[0]->value;
                    const Matrix& wih = n.parents[1]->value;
                    const Matrix& whh = n.parents[2]->value;
                    Matrix dgi(steps, 3 * hidden);
                    Matrix dwhh = Matrix::Zero(hidden, 3 * hidden);
                    RowVector dbhh = RowVector::Zero(3 * hidden);
                    RowVector carry = RowVector::Zero(hidden);
                    RowVector dgh(3 * hidden);
                    for (Eigen::Index s = steps - 1; s >= 0; --s) {
                        const Eigen::Index t = reverse ? steps - 1 - s : s;
                        RowVector dh = n.grad.row(t) + carry;
                        for (Eigen::Index j = 0; j < hidden; ++j) {
                            const double r = r_all(t, j);
                            const double z = z_all(t, j);
                            const double nn = n_all(t, j);
                            const double dn = dh(j) * (1.0 - z) * (1.0 - nn * nn);
                            const double dz = dh(j) * (hprev_all(t, j) - nn) * z * (1.0 - z);
                            const double dr = dn * ghn_all(t, j) * r * (1.0 - r);
                            dgi(t, j) = dr;
                            dgi(t, hidden + j) = dz;
                            dgi(t, 2 * hidden + j) = dn;
                            dgh(j) = dr;
                            dgh(hidden + j) = dz;
                            dgh(2 * hidden + j) = dn * r;
                            carry(j) = dh(j) * z;
                        }
                        carry += dgh * whh.transpose();
                        dwhh += hprev_all.row(t).transpose() * dgh;
                        dbhh += dgh;
                    }
                    if (wants(n, 0)) {
                        push(n, 0, dgi * wih.transpose());
                    }
                    if (wants(n, 1)) {
                        push(n, 1, xv.transpose() * dgi);
                    }
                    if (wants(n, 2)) {
                        push(n, 2, dwhh);
                    }
                    if (wants(n, 3)) {
                        push(n, 3, dgi.colwise().sum());
                    }
                    if (wants(n, 4)) {
                        push(n, 4, dbhh);
                    }
                });
}

Var lstm(const Var& x, const Var& w_ih, const Var& w_hh, const Var& b)
{
    const Eigen::Index steps = x.rows();
    const Eigen::Index hidden = w_hh.rows();
    if (w_ih.rows() != x.cols() || w_ih.cols() != 4 * hidden || w_hh.cols() != 4 * hidden ||
        b.cols() != 4 * hidden) {
        throw std::invalid_argument("lstm: weight shapes inconsistent with input");
    }
    Matrix pre = (x.value() * w_ih.value()).rowwise() + b.value().row(0);
    Matrix gates(steps, 4 * hidden);  // activated
    Matrix cells(steps, hidden);
    Matrix out(steps, hidden);
    RowVector h = RowVector::Zero(hidden);
    RowVector c = RowVector::Zero(hidden);
    for (Eigen::Index t = 0; t < steps; ++t) {
        RowVector a = pre.row(t) + h * w_hh.value();
        for (Eigen::Index j = 0; j < hidden; ++j) {
            const double ig = sigmoid_scalar(a(j));
            const double fg = sigmoid_scalar(a(hidden + j));
            const double gg = std::tanh(a(2 * hidden + j));
            const double og = sigmoid_scalar(a(3 * hidden + j));
            gates(t, j) = ig;
            gates(t, hidden + j) = fg;
            gates(t, 2 * hidden + j) = gg;
            gates(t, 3 * hidden + j) = og;
            c(j) = fg * c(j) + ig * gg;
            h(j) = og * std::tanh(c(j));
        }
        cells.row(t) = c;
        out.row(t) = h;
    }
    Matrix hs = out;
    return make(std::move(out), {x, w_ih, w_hh, b}, [=](Node& n) {
        const Matrix& xv = n.parents[0]->value;
        const Matrix& wih = n.parents[1]->value;
        const Matrix& whh = n.parents[2]->value;
        Matrix da(steps, 4 * hidden);
        Matrix dwhh = Matrix::Zero(hidden, 4 * hidden);
        RowVector dh_carry = RowVector::Zero(hidden);
        RowVector dc_carry = RowVector::Zero(hidden);
        for (Eigen::Index t = steps - 1; t >= 0; --t) {
            RowVector dh = n.grad.row(t) + dh_carry;
            for (Eigen::Index j = 0; j < hidden; ++j) {
                const double ig = gates(t, j);
                const double fg = gates(t, hidden + j);
                const double gg = gates(t, 2 * hidden + j);
                const double og = gates(t, 3 * hidden + j);
                const double tc = std::tanh(cells(t, j));
                const double c_prev = t > 0 ? cells(t - 1, j) : 0.0;
                const double dc = dc_carry(j) + dh(j) * og * (1.0 - tc * tc);
                da(t, j) = dc * gg * ig * (1.0 - ig);
                da(t, hidden + j) = dc * c_prev * fg * (1.0 - fg);
                da(t, 2 * hidden + j) = dc * ig * (1.0 - gg * gg);
                da(t, 3 * hidden + j) = dh(j) * tc * og * (1.0 - og);
                dc_carry(j) = dc * fg;
            }
            dh_carry = da.row(t) * whh.transpose();
            if (t > 0) {
                dwhh += hs.row(t - 1).transpose() * da.row(t);
            }
        }
        if (wants(n, 0)) {
            push(n, 0, da * wih.transpose());
        }
        if (wants(n, 1)) {
            push(n, 1, xv.transpose() * da);
        }
        if (wants(n, 2)) {
            push(n, 2, dwhh);
        }
        if (wants(n, 3)) {
            push(n, 3, da.colwise().sum());
        }
    });
}

}  // namespace himuv::ag
