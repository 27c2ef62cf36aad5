#pragma once
// Scalar-valued closures over every differentiable primitive and over the
// full model with each training objective, for finite-difference checks.
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "avp/han.hpp"
#include "avp/label_forge.hpp"
#include "avp/losses.hpp"
#include "avp/nn.hpp"
#include "avp/tensor.hpp"
#include "oracles/oracles.hpp"
#include "support.hpp"

namespace oracle {

struct GradCase {
  std::string name;
  std::function<avp::Tensor()> loss;
  std::vector<avp::Tensor> leaves;
};

/// Random weighted sum, so each op sees a non-trivial upstream gradient.
inline avp::Tensor weighted_sum(const avp::Tensor& t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return avp::sum(t * testing_support::random_tensor(t.shape(), rng, -1, 1));
}

inline std::vector<GradCase> primitive_cases(std::uint64_t seed, std::size_t rows = 3, std::size_t cols = 4) {
  using namespace avp;
  using testing_support::random_tensor;
  std::mt19937_64 rng(seed);
  Tensor a = random_tensor({rows, cols}, rng, -1, 1, true);
  Tensor b = random_tensor({cols, 2}, rng, -1, 1, true);
  Tensor c = random_tensor({rows, cols}, rng, -1, 1, true);
  Tensor bias = random_tensor({cols}, rng, -1, 1, true);
  Tensor gain = random_tensor({cols}, rng, 0.5, 1.5, true);
  Tensor probs = random_tensor({rows, cols}, rng, 0.05, 0.95, true);
  const Tensor target({rows, cols}, to_vec(random_tensor({rows, cols}, rng, 0, 1)));
  const Tensor weights = random_tensor({rows, cols}, rng);
  const Tensor teacher = softmax(random_tensor({rows, cols}, rng, -2, 2), 1);
  AttentionParams att = make_attention(cols, rng);
  Tensor kv = random_tensor({rows + 1, cols}, rng, -1, 1, true);
  const std::uint64_t w = seed * 31 + 7;
  return {
      {"matmul", [=] { return weighted_sum(matmul(a, b), w); }, {a, b}},
      {"transpose", [=] { return weighted_sum(transpose(a), w); }, {a}},
      {"add", [=] { return weighted_sum(a + c, w); }, {a, c}},
      {"sub", [=] { return weighted_sum(a - c, w); }, {a, c}},
      {"mul", [=] { return weighted_sum(a * c, w); }, {a, c}},
      {"scale", [=] { return weighted_sum(a * 2.5, w); }, {a}},
      {"add_row", [=] { return weighted_sum(add_row(a, bias), w); }, {a, bias}},
      {"reshape", [=] { return weighted_sum(reshape(a, {cols, rows}), w); }, {a}},
      {"sum", [=] { return sum(a * weights); }, {a}},
      {"mean", [=] { return mean(a * weights); }, {a}},
      {"sum_rows", [=] { return weighted_sum(sum_rows(a), w); }, {a}},
      {"mean_rows", [=] { return weighted_sum(mean_rows(a), w); }, {a}},
      {"sigmoid", [=] { return weighted_sum(sigmoid(a), w); }, {a}},
      {"relu", [=] { return weighted_sum(relu(a), w); }, {a}},
      {"softmax_rows", [=] { return weighted_sum(softmax(a, 1), w); }, {a}},
      {"softmax_cols", [=] { return weighted_sum(softmax(a, 0), w); }, {a}},
      {"layer_norm", [=] { return weighted_sum(layer_norm(a, gain, bias), w); }, {a, gain, bias}},
      {"dropout",
       [=] {
         std::mt19937_64 mask_rng(99);
         return weighted_sum(dropout(a, 0.3, mask_rng), w);
       },
       {a}},
      {"slice_cols", [=] { return weighted_sum(slice_cols(a, 1, 2), w); }, {a}},
      {"concat_cols",
       [=] {
         const Tensor parts[] = {a, c};
         return weighted_sum(concat_cols(parts), w);
       },
       {a, c}},
      {"stack_select",
       [=] {
         const Tensor parts[] = {a, c};
         const Tensor s = stack(parts);
         return weighted_sum(select(s, 0) * 2.0 + select(s, 1), w);
       },
       {a, c}},
      {"bce", [=] { return bce(probs, target); }, {probs}},
      {"kl_div", [=] { return kl_div(teacher, softmax(a, 1)); }, {a}},
      {"attention",
       [=] { return weighted_sum(multi_head_attention(a, kv, kv, 2, att), w); },
       {a, kv, att.wq, att.wk, att.wv, att.wo, att.bo}},
  };
}

/// Full forward plus one objective per case: base, kd, valor, three mixed
/// pairings, ave-weak, and ave-valor. Each case owns its own model.
inline std::vector<GradCase> model_cases(std::uint64_t seed, std::size_t T, std::size_t d, std::size_t C,
                                         std::size_t layers = 1, bool pre_norm = false) {
  using namespace avp;
  std::vector<GradCase> out;
  const std::vector<std::string> names = {"base",           "kd",           "valor",   "mixed(valor,kd)",
                                          "mixed(kd,guided)", "mixed(guided,valor)", "ave-weak", "ave-valor"};
  for (std::size_t k = 0; k < names.size(); ++k) {
    const bool ave = k >= 6;
    std::mt19937_64 rng(seed * 101 + k);
    ModelConfig cfg = testing_support::toy_config(d, C, layers, ave);
    cfg.pre_norm = pre_norm;
    const ModelParams params = init_model(cfg, seed + k);
    const VideoSample sample = testing_support::random_sample(cfg, T, rng);
    const TeacherLogits z{"v", testing_support::random_real(T, C, rng), testing_support::random_real(T, C, rng)};
    const KdTargets kd = kd_targets(z);
    const DenseLabels dense = *sample.dense_gt;
    const DenseLabels bg = extend_background(dense);
    const WeakLabel wbg = ave_weak_label(dense);
    const WeakLabel weak = sample.weak;
    auto loss = [=]() -> Tensor {
      const ForwardOutput o = forward(params, sample);
      const LossContext ctx{&weak, &dense, &kd, 0.1, TemporalReduction::Mean};
      switch (k) {
        case 0: return loss_base(o, weak, 0.1);
        case 1: return loss_kd(o, weak, kd);
        case 2: return loss_valor(o, dense, weak);
        case 3: return loss_mixed(o, ModalityLoss::Valor, ModalityLoss::Kd, ctx);
        case 4: return loss_mixed(o, ModalityLoss::Kd, ModalityLoss::Guided, ctx);
        case 5: return loss_mixed(o, ModalityLoss::Guided, ModalityLoss::Valor, ctx);
        case 6: return loss_ave(o, AveLossMode::Weak, &wbg, nullptr);
        default: return loss_ave(o, AveLossMode::Valor, nullptr, &bg);
      }
    };
    out.push_back({names[k], loss, params.tensors()});
  }
  return out;
}

}  // namespace oracle
