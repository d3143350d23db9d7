#pragma once

// Parameter storage and the layer building blocks shared by every model part.

#include "himuv/autograd.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace himuv {

using ag::Var;

class ParameterStore {
public:
    explicit ParameterStore(std::uint64_t seed = 0) : rng_(seed) {}

    // Registers a trainable leaf. Names are unique.
    Var add(const std::string& name, Matrix init);
    Var get(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) != 0; }
    const std::map<std::string, Var>& all() const { return params_; }
    std::vector<std::string> names() const;
    std::size_t scalar_count() const;
    void zero_grad();

    Matrix xavier(Eigen::Index rows, Eigen::Index cols);
    Matrix uniform(Eigen::Index rows, Eigen::Index cols, double bound);
    Matrix normal(Eigen::Index rows, Eigen::Index cols, double sd);

private:
    std::map<std::string, Var> params_;
    std::mt19937_64 rng_;
};

Matrix positional_encoding(Eigen::Index steps, Eigen::Index width);

// Broadcasts a 1 x C row to count x C.
Var repeat_row(const Var& row, Eigen::Index count);

struct Linear {
    Var w;
    Var b;
    Linear() = default;
    Linear(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index out);
    Var operator()(const Var& x) const;
};

// 1-D convolution along rows (time) with zero "same" padding, stride 1.
struct Conv1d {
    Var w;  // (kernel * in) x out
    Var b;
    Eigen::Index kernel = 1;
    Eigen::Index in = 0;
    Conv1d() = default;
    Conv1d(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
           Eigen::Index kernel);
    Var operator()(const Var& x) const;
};

struct LayerNorm {
    Var gain;
    Var bias;
    LayerNorm() = default;
    LayerNorm(ParameterStore& store, const std::string& name, Eigen::Index width);
    Var operator()(const Var& x) const;
};

struct MultiHeadAttention {
    Linear q, k, v, o;
    Eigen::Index heads = 1;
    MultiHeadAttention() = default;
    MultiHeadAttention(ParameterStore& store, const std::string& name, Eigen::Index query_in,
                       Eigen::Index kv_in, Eigen::Index width, Eigen::Index heads);
    // Row i of the result attends over all rows of keyvalue. When weights is
    // non-null it receives one (queries x keys) matrix per head.
    Var operator()(const Var& query, const Var& keyvalue, std::vector<Matrix>* weights = nullptr) const;
};

// Self-attention + convolutional feed-forward, each with residual and post-norm.
struct FeedForwardTransformerBlock {
    MultiHeadAttention attn;
    LayerNorm norm1;
    Conv1d conv1;
    Conv1d conv2;
    LayerNorm norm2;
    FeedForwardTransformerBlock() = default;
    FeedForwardTransformerBlock(ParameterStore& store, const std::string& name, Eigen::Index width,
                                Eigen::Index heads, Eigen::Index filter, Eigen::Index kernel);
    Var operator()(const Var& x) const;
};

struct GruWeights {
    Var w_ih, w_hh, b_ih, b_hh;
};

// Stacked bidirectional GRU; output width 2 * hidden.
struct BiGru {
    std::vector<std::pair<GruWeights, GruWeights>> layers;
    BiGru() = default;
    BiGru(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden,
          int num_layers);
    Var operator()(const Var& x) const;
};

struct Lstm {
    struct Layer {
        Var w_ih, w_hh, b;
    };
    std::vector<Layer> layers;
    Lstm() = default;
    Lstm(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden,
         int num_layers);
    Var operator()(const Var& x) const;
};

// x + a * sigmoid(g) where [a | g] = conv(x).
struct GatedConvBlock {
    Conv1d conv;
    GatedConvBlock() = default;
    GatedConvBlock(ParameterStore& store, const std::string& name, Eigen::Index width,
                   Eigen::Index kernel);
    Var operator()(const Var& x) const;
};

// A feature map of height x width positions, one row per position
// (row-major over positions), one column per channel.
struct FeatureMap {
    Var data;
    Eigen::Index height = 0;
    Eigen::Index width = 0;
};

// 3x3 convolution, padding 1.
struct Conv2d {
    Var w;  // (9 * in) x out
    Var b;
    Eigen::Index in = 0;
    Eigen::Index stride = 1;
    Conv2d() = default;
    Conv2d(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
           Eigen::Index stride);
    FeatureMap operator()(const FeatureMap& x) const;
};

}  // namespace himuv
