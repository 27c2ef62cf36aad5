#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "avp/tensor.hpp"

namespace avp {

/// y = x·W + b with W stored as [in × out].
struct Linear {
  Tensor weight;
  Tensor bias;

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
};

Tensor linear(const Tensor& x, const Linear& layer);

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
};

/// Q/K/V projections carry no bias; the output projection does.
struct AttentionParams {
  Tensor wq, wk, wv;
  Tensor wo, bo;
};

/// Per-head attention weights, one [Tq × Tk] tensor per head, for inspection.
struct AttentionTrace {
  std::vector<Tensor> weights;
};

/// Scaled dot-product attention with `heads` heads over the model width d.
/// Scores are scaled by 1/sqrt(d/heads).
Tensor multi_head_attention(const Tensor& query, const Tensor& keys, const Tensor& values, std::size_t heads,
                            const AttentionParams& params, AttentionTrace* trace = nullptr);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weight and bias.
Linear make_linear(std::size_t in, std::size_t out, std::mt19937_64& rng, bool with_bias = true);
AttentionParams make_attention(std::size_t width, std::mt19937_64& rng);
LayerNormParams make_layer_norm(std::size_t width);

}  // namespace avp
