#include "avp/optim.hpp"

#include <cmath>
#include <numbers>

#include "avp/errors.hpp"

namespace avp {

OptimizerState make_optimizer_state(std::span<const Tensor> params, const AdamWConfig& hp) {
  OptimizerState state;
  state.hp = hp;
  for (const Tensor& p : params) {
    state.first_moment.emplace_back(p.numel(), 0.0);
    state.second_moment.emplace_back(p.numel(), 0.0);
  }
  return state;
}

void adamw_step(std::span<Tensor> params, OptimizerState& state, double lr) {
  if (lr < 0.0) throw UsageError("adamw_step: negative learning rate");
  if (params.size() != state.first_moment.size()) {
    throw DimensionError("adamw_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  const AdamWConfig& hp = state.hp;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(hp.beta1, t);
  const double correction2 = 1.0 - std::pow(hp.beta2, t);
  const double decay = 1.0 - lr * hp.weight_decay;

  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    auto values = p.values_mut();
    const auto grad = p.grad();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    if (m.size() != values.size() || grad.size() != values.size()) {
      throw DimensionError("adamw_step: parameter " + std::to_string(k) + " changed shape");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
      v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] = values[i] * decay - lr * m_hat / (std::sqrt(v_hat) + hp.eps);
    }
  }
}

void LrSchedule::validate() const {
  if (!(peak_lr > 0.0) || !(min_lr > 0.0)) throw ConfigError("lr schedule: learning rates must be positive");
  if (min_lr > peak_lr) throw ConfigError("lr schedule: min_lr exceeds peak_lr");
  if (warmup_epochs < 1 || total_epochs < 1) throw ConfigError("lr schedule: epoch counts must be positive");
  if (warmup_epochs >= total_epochs) throw ConfigError("lr schedule: warmup_epochs must be < total_epochs");
}

double lr_at(const LrSchedule& s, int epoch) {
  if (epoch < 0 || epoch >= s.total_epochs) {
    throw UsageError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(s.total_epochs) +
                     ")");
  }
  if (epoch < s.warmup_epochs) {
    return s.peak_lr * static_cast<double>(epoch) / static_cast<double>(s.warmup_epochs);
  }
  const int span = s.total_epochs - 1 - s.warmup_epochs;
  if (span <= 0) return s.peak_lr;
  const double progress = static_cast<double>(epoch - s.warmup_epochs) / static_cast<double>(span);
  return s.min_lr + 0.5 * (s.peak_lr - s.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

double global_grad_norm(std::span<const Tensor> params) {
  double sq = 0.0;
  for (const Tensor& p : params)
    for (double g : p.grad()) sq += g * g;
  return std::sqrt(sq);
}

double clip_global_norm(std::span<Tensor> params, double max_norm) {
  if (!(max_norm > 0.0)) throw UsageError("clip_global_norm: max_norm must be positive");
  const double norm = global_grad_norm(params);
  if (norm <= max_norm) return 1.0;
  const double factor = max_norm / norm;
  for (Tensor& p : params)
    for (double& g : p.grad_mut()) g *= factor;
  return factor;
}

}  // namespace avp
