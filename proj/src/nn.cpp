#include "himuv/nn.hpp"

#include "himuv/error.hpp"

#include <cmath>

namespace himuv {

Var ParameterStore::add(const std::string& name, Matrix init)
{
    if (contains(name)) {
        throw std::logic_error("duplicate parameter name " + name);
    }
    Var v = ag::leaf(std::move(init), true);
    params_.emplace(name, v);
    return v;
}

Var ParameterStore::get(const std::string& name) const
{
    const auto it = params_.find(name);
    if (it == params_.end()) {
        throw Error(ErrorKind::consistency, "missing parameter " + name);
    }
    return it->second;
}

std::vector<std::string> ParameterStore::names() const
{
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, _] : params_) {
        out.push_back(name);
    }
    return out;
}

std::size_t ParameterStore::scalar_count() const
{
    std::size_t n = 0;
    for (const auto& [_, v] : params_) {
        n += static_cast<std::size_t>(v.value().size());
    }
    return n;
}

void ParameterStore::zero_grad()
{
    for (auto& [_, v] : params_) {
        v.zero_grad();
    }
}

Matrix ParameterStore::uniform(Eigen::Index rows, Eigen::Index cols, double bound)
{
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = dist(rng_);
    }
    return m;
}

Matrix ParameterStore::xavier(Eigen::Index rows, Eigen::Index cols)
{
    return uniform(rows, cols, std::sqrt(6.0 / static_cast<double>(rows + cols)));
}

Matrix ParameterStore::normal(Eigen::Index rows, Eigen::Index cols, double sd)
{
    std::normal_distribution<double> dist(0.0, sd);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = dist(rng_);
    }
    return m;
}

Matrix positional_encoding(Eigen::Index steps, Eigen::Index width)
{
    Matrix pe(steps, width);
    for (Eigen::Index t = 0; t < steps; ++t) {
        for (Eigen::Index i = 0; i < width; ++i) {
            const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / width);
            pe(t, i) = (i % 2 == 0) ? std::sin(t * rate) : std::cos(t * rate);
        }
    }
    return pe;
}

Var repeat_row(const Var& row, Eigen::Index count)
{
    std::vector<long> idx(static_cast<std::size_t>(count), 0);
    return ag::gather_rows(row, idx);
}

Linear::Linear(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index out)
    : w(store.add(name + ".w", store.xavier(in, out))), b(store.add(name + ".b", Matrix::Zero(1, out)))
{
}

Var Linear::operator()(const Var& x) const
{
    return ag::add_row(ag::matmul(x, w), b);
}

Conv1d::Conv1d(ParameterStore& store, const std::string& name, Eigen::Index in_, Eigen::Index out,
               Eigen::Index kernel_)
    : w(store.add(name + ".w", store.xavier(kernel_ * in_, out))),
      b(store.add(name + ".b", Matrix::Zero(1, out))),
      kernel(kernel_),
      in(in_)
{
}

Var Conv1d::operator()(const Var& x) const
{
    if (x.cols() != in) {
        throw std::invalid_argument("Conv1d: input width mismatch");
    }
    const Eigen::Index steps = x.rows();
    const Eigen::Index pad = (kernel - 1) / 2;
    std::vector<long> idx;
    idx.reserve(static_cast<std::size_t>(steps * kernel * in));
    for (Eigen::Index t = 0; t < steps; ++t) {
        for (Eigen::Index k = 0; k < kernel; ++k) {
            const Eigen::Index src = t + k - pad;
            for (Eigen::Index c = 0; c < in; ++c) {
                idx.push_back(src < 0 || src >= steps ? -1 : static_cast<long>(src * in + c));
            }
        }
    }
    Var cols = kernel == 1 ? x : ag::gather(x, std::move(idx), steps, kernel * in);
    return ag::add_row(ag::matmul(cols, w), b);
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, Eigen::Index width)
    : gain(store.add(name + ".gain", Matrix::Ones(1, width))),
      bias(store.add(name + ".bias", Matrix::Zero(1, width)))
{
}

Var LayerNorm::operator()(const Var& x) const
{
    return ag::layer_norm_rows(x, gain, bias);
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name,
                                       Eigen::Index query_in, Eigen::Index kv_in, Eigen::Index width,
                                       Eigen::Index heads_)
    : q(store, name + ".q", query_in, width),
      k(store, name + ".k", kv_in, width),
      v(store, name + ".v", kv_in, width),
      o(store, name + ".o", width, width),
      heads(heads_)
{
    if (width % heads != 0) {
        throw std::invalid_argument("attention width must divide by head count");
    }
}

Var MultiHeadAttention::operator()(const Var& query, const Var& keyvalue,
                                   std::vector<Matrix>* weights) const
{
    const Var qs = q(query);
    const Var ks = k(keyvalue);
    const Var vs = v(keyvalue);
    const Eigen::Index head_dim = qs.cols() / heads;
    const double temperature = 1.0 / std::sqrt(static_cast<double>(head_dim));
    std::vector<Var> outs;
    for (Eigen::Index h = 0; h < heads; ++h) {
        const Var qh = ag::slice_cols(qs, h * head_dim, head_dim);
        const Var kh = ag::slice_cols(ks, h * head_dim, head_dim);
        const Var vh = ag::slice_cols(vs, h * head_dim, head_dim);
        const Var a = ag::softmax_rows(ag::scale(ag::matmul(qh, ag::transpose(kh)), temperature));
        if (weights != nullptr) {
            weights->push_back(a.value());
        }
        outs.push_back(ag::matmul(a, vh));
    }
    return o(heads == 1 ? outs[0] : ag::concat_cols(outs));
}

FeedForwardTransformerBlock::FeedForwardTransformerBlock(ParameterStore& store, const std::string& name,
                                                         Eigen::Index width, Eigen::Index heads,
                                                         Eigen::Index filter, Eigen::Index kernel)
    : attn(store, name + ".attn", width, width, width, heads),
      norm1(store, name + ".norm1", width),
      conv1(store, name + ".conv1", width, filter, kernel),
      conv2(store, name + ".conv2", filter, width, kernel),
      norm2(store, name + ".norm2", width)
{
}

Var FeedForwardTransformerBlock::operator()(const Var& x) const
{
    const Var y = norm1(ag::add(x, attn(x, x)));
    return norm2(ag::add(y, conv2(ag::relu(conv1(y)))));
}

namespace {
GruWeights make_gru(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden)
{
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    return GruWeights{
        store.add(name + ".w_ih", store.uniform(in, 3 * hidden, bound)),
        store.add(name + ".w_hh", store.uniform(hidden, 3 * hidden, bound)),
        store.add(name + ".b_ih", store.uniform(1, 3 * hidden, bound)),
        store.add(name + ".b_hh", store.uniform(1, 3 * hidden, bound)),
    };
}
}  // namespace

BiGru::BiGru(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden,
             int num_layers)
{
    for (int l = 0; l < num_layers; ++l) {
        const Eigen::Index width = l == 0 ? in : 2 * hidden;
        const std::string base = name + ".layer" + std::to_string(l);
        GruWeights fwd = make_gru(store, base + ".fwd", width, hidden);
        GruWeights bwd = make_gru(store, base + ".bwd", width, hidden);
        layers.emplace_back(fwd, bwd);
    }
}

Var BiGru::operator()(const Var& x) const
{
    Var h = x;
    for (const auto& [f, b] : layers) {
        const Var fo = ag::gru(h, f.w_ih, f.w_hh, f.b_ih, f.b_hh, false);
        const Var bo = ag::gru(h, b.w_ih, b.w_hh, b.b_ih, b.b_hh, true);
        const Var parts[] = {fo, bo};
        h = ag::concat_cols(parts);
    }
    return h;
}

Lstm::Lstm(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden,
           int num_layers)
{
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (int l = 0; l < num_layers; ++l) {
        const Eigen::Index width = l == 0 ? in : hidden;
        const std::string base = name + ".layer" + std::to_string(l);
        layers.push_back(Layer{
            store.add(base + ".w_ih", store.uniform(width, 4 * hidden, bound)),
            store.add(base + ".w_hh", store.uniform(hidden, 4 * hidden, bound)),
            store.add(base + ".b", store.uniform(1, 4 * hidden, bound)),
        });
    }
}

Var Lstm::operator()(const Var& x) const
{
    Var h = x;
    for (const auto& layer : layers) {
        h = ag::lstm(h, layer.w_ih, layer.w_hh, layer.b);
    }
    return h;
}

GatedConvBlock::GatedConvBlock(ParameterStore& store, const std::string& name, Eigen::Index width,
                               Eigen::Index kernel)
    : conv(store, name + ".conv", width, 2 * width, kernel)
{
}

Var GatedConvBlock::operator()(const Var& x) const
{
    const Var y = conv(x);
    const Eigen::Index width = x.cols();
    const Var gated = ag::mul(ag::slice_cols(y, 0, width), ag::sigmoid(ag::slice_cols(y, width, width)));
    return ag::add(x, gated);
}

Conv2d::Conv2d(ParameterStore& store, const std::string& name, Eigen::Index in_, Eigen::Index out,
               Eigen::Index stride_)
    : w(store.add(name + ".w", store.xavier(9 * in_, out))),
      b(store.add(name + ".b", Matrix::Zero(1, out))),
      in(in_),
      stride(stride_)
{
}

FeatureMap Conv2d::operator()(const FeatureMap& x) const
{
    if (x.data.cols() != in || x.data.rows() != x.height * x.width) {
        throw std::invalid_argument("Conv2d: feature map shape mismatch");
    }
    const Eigen::Index oh = (x.height - 1) / stride + 1;
    const Eigen::Index ow = (x.width - 1) / stride + 1;
    std::vector<long> idx;
    idx.reserve(static_cast<std::size_t>(oh * ow * 9 * in));
    for (Eigen::Index i = 0; i < oh; ++i) {
        for (Eigen::Index j = 0; j < ow; ++j) {
            for (Eigen::Index ki = 0; ki < 3; ++ki) {
                for (Eigen::Index kj = 0; kj < 3; ++kj) {
                    const Eigen::Index si = i * stride + ki - 1;
                    const Eigen::Index sj = j * stride + kj - 1;
                    const bool inside = si >= 0 && si < x.height && sj >= 0 && sj < x.width;
                    for (Eigen::Index c = 0; c < in; ++c) {
                        idx.push_back(inside ? static_cast<long>((si * x.width + sj) * in + c) : -1);
                    }
                }
            }
        }
    }
    const Var cols = ag::gather(x.data, std::move(idx), oh * ow, 9 * in);
    return FeatureMap{ag::add_row(ag::matmul(cols, w), b), oh, ow};
}

}  // namespace himuv
