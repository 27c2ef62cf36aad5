#include "avp/nn.hpp"

#include <cmath>

#include "avp/errors.hpp"

namespace avp {

Tensor linear(const Tensor& x, const Linear& layer) {
  Tensor y = matmul(x, layer.weight);
  return layer.bias.defined() ? add_row(y, layer.bias) : y;
}

Tensor multi_head_attention(const Tensor& query, const Tensor& keys, const Tensor& values, std::size_t heads,
                            const AttentionParams& params, AttentionTrace* trace) {
  if (query.rank() != 2 || keys.rank() != 2 || values.rank() != 2) {
    throw DimensionError("multi_head_attention: inputs must be 2-D");
  }
  const std::size_t width = query.dim(1);
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("multi_head_attention: width " + std::to_string(width) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (keys.dim(0) != values.dim(0)) {
    throw DimensionError("multi_head_attention: keys " + shape_str(keys.shape()) + " vs values " +
                         shape_str(values.shape()));
  }
  const std::size_t head_dim = width / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  const Tensor q = matmul(query, params.wq);
  const Tensor k = matmul(keys, params.wk);
  const Tensor v = matmul(values, params.wv);

  std::vector<Tensor> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = slice_cols(q, h * head_dim, head_dim);
    const Tensor kh = slice_cols(k, h * head_dim, head_dim);
    const Tensor vh = slice_cols(v, h * head_dim, head_dim);
    const Tensor weights = softmax(scale(matmul(qh, transpose(kh)), inv_scale), 1);
    if (trace) trace->weights.push_back(weights);
    outputs.push_back(matmul(weights, vh));
  }
  const Tensor merged = heads == 1 ? outputs.front() : concat_cols(outputs);
  return add_row(matmul(merged, params.wo), params.bo);
}

namespace {

Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = dist(rng);
  return Tensor(std::move(shape), std::move(values), true);
}

}  // namespace

Linear make_linear(std::size_t in, std::size_t out, std::mt19937_64& rng, bool with_bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear layer;
  layer.weight = uniform_tensor({in, out}, bound, rng);
  if (with_bias) layer.bias = uniform_tensor({out}, bound, rng);
  return layer;
}

AttentionParams make_attention(std::size_t width, std::mt19937_64& rng) {
  AttentionParams p;
  p.wq = make_linear(width, width, rng, false).weight;
  p.wk = make_linear(width, width, rng, false).weight;
  p.wv = make_linear(width, width, rng, false).weight;
  Linear out = make_linear(width, width, rng, true);
  p.wo = out.weight;
  p.bo = out.bias;
  return p;
}

LayerNormParams make_layer_norm(std::size_t width) {
  return {Tensor::full({width}, 1.0, true), Tensor::zeros({width}, true)};
}

}  // namespace avp
