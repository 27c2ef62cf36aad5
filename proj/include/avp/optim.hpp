#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "avp/tensor.hpp"

namespace avp {

struct AdamWConfig {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-3;
};

struct OptimizerState {
  AdamWConfig hp;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
};

OptimizerState make_optimizer_state(std::span<const Tensor> params, const AdamWConfig& hp);

/// Decoupled weight decay Adam with bias correction. Reads each parameter's
/// gradient buffer, updates values in place, and advances state.step by one.
void adamw_step(std::span<Tensor> params, OptimizerState& state, double lr);

/// Linear warmup from 0 to peak_lr, then cosine annealing to min_lr at the
/// final epoch. Epoch-granular.
struct LrSchedule {
  double peak_lr = 1e-4;
  double min_lr = 1e-6;
  int warmup_epochs = 10;
  int total_epochs = 60;

  void validate() const;
};

double lr_at(const LrSchedule& schedule, int epoch);

double global_grad_norm(std::span<const Tensor> params);

/// Rescales all gradients so their joint L2 norm is at most max_norm.
/// Returns the factor applied (1 when already within bounds).
double clip_global_norm(std::span<Tensor> params, double max_norm);

}  // namespace avp
