#include <gtest/gtest.h>

#include <cmath>

#include "avp/errors.hpp"
#include "avp/optim.hpp"
#include "support.hpp"

using namespace avp;

TEST(AdamW, ZeroGradientWithoutDecayLeavesParameters) {
  Tensor p({3}, {1.0, -2.0, 0.5}, true);
  std::vector<Tensor> params{p};
  AdamWConfig hp;
  hp.weight_decay = 0.0;
  OptimizerState state = make_optimizer_state(params, hp);
  adamw_step(params, state, 0.1);
  EXPECT_EQ(p.at(0), 1.0);
  EXPECT_EQ(p.at(1), -2.0);
  EXPECT_EQ(p.at(2), 0.5);
  EXPECT_EQ(state.step, 1u);
}

TEST(AdamW, FirstStepMovesBySignTimesLr) {
  Tensor p({4}, {0.3, -0.7, 1.0, 2.0}, true);
  const std::vector<double> g = {0.5, -3.0, 1e-3, -2e-2};
  std::copy(g.begin(), g.end(), p.grad_mut().begin());
  std::vector<Tensor> params{p};
  AdamWConfig hp;
  hp.weight_decay = 0.0;
  OptimizerState state = make_optimizer_state(params, hp);
  const std::vector<double> before(p.values().begin(), p.values().end());
  const double lr = 0.01;
  adamw_step(params, state, lr);
  for (std::size_t i = 0; i < 4; ++i) {
    const double delta = p.at(i) - before[i];
    EXPECT_LE(std::abs(delta), lr * (1 + 1e-6));
    EXPECT_NEAR(delta, -lr * (g[i] > 0 ? 1 : -1), lr * 1e-4);
  }
}

TEST(AdamW, ThreeStepsOnQuadraticMatchHandTrace) {
  // f(x) = (x - 3)^2, g = 2(x - 3); AdamW written out step by step.
  const double lr = 0.1, b1 = 0.5, b2 = 0.999, eps = 1e-8, wd = 1e-3;
  double x = 1.0, m = 0.0, v = 0.0;
  std::vector<double> trace;
  for (int t = 1; t <= 3; ++t) {
    const double g = 2.0 * (x - 3.0);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    x = x - lr * wd * x - lr * mh / (std::sqrt(vh) + eps);
    trace.push_back(x);
  }

  Tensor p({1}, {1.0}, true);
  std::vector<Tensor> params{p};
  OptimizerState state = make_optimizer_state(params, AdamWConfig{});
  for (int t = 0; t < 3; ++t) {
    p.grad_mut()[0] = 2.0 * (p.at(0) - 3.0);
    adamw_step(params, state, lr);
    EXPECT_NEAR(p.at(0), trace[t], 1e-10) << "step " << t + 1;
  }
}

TEST(AdamW, NegativeLrRejected) {
  Tensor p({1}, {1.0}, true);
  std::vector<Tensor> params{p};
  OptimizerState state = make_optimizer_state(params, AdamWConfig{});
  EXPECT_THROW(adamw_step(params, state, -1.0), UsageError);
}

TEST(LrSchedule, Boundaries) {
  const LrSchedule s{1e-4, 1e-6, 10, 60};
  EXPECT_EQ(lr_at(s, 0), 0.0);
  EXPECT_DOUBLE_EQ(lr_at(s, 5), 0.5e-4);
  EXPECT_DOUBLE_EQ(lr_at(s, 10), 1e-4);
  EXPECT_LE(std::abs(lr_at(s, 59) - 1e-6), 0.01 * 1e-6);
}

TEST(LrSchedule, CosineMidpointIsMeanOfPeakAndMin) {
  const LrSchedule s{3e-4, 3e-6, 10, 61};  // cosine phase spans epochs 10..60
  EXPECT_NEAR(lr_at(s, 35), (3e-4 + 3e-6) / 2, 1e-9);
}

TEST(LrSchedule, ContinuousAndPiecewiseMonotone) {
  const LrSchedule s{1e-3, 1e-5, 7, 40};
  for (int e = 1; e < s.warmup_epochs; ++e) EXPECT_GT(lr_at(s, e), lr_at(s, e - 1));
  for (int e = s.warmup_epochs + 1; e < s.total_epochs; ++e) EXPECT_LE(lr_at(s, e), lr_at(s, e - 1));
}

TEST(LrSchedule, OutOfRangeEpochIsUsageError) {
  const LrSchedule s{1e-4, 1e-6, 10, 60};
  EXPECT_THROW(lr_at(s, 60), UsageError);
  EXPECT_THROW(lr_at(s, -1), UsageError);
}

TEST(LrSchedule, InvalidSchedulesRejected) {
  EXPECT_THROW((LrSchedule{1e-6, 1e-4, 10, 60}.validate()), ConfigError);
  EXPECT_THROW((LrSchedule{1e-4, 1e-6, 60, 60}.validate()), ConfigError);
  EXPECT_NO_THROW((LrSchedule{1e-4, 1e-6, 10, 60}.validate()));
}

TEST(ClipGlobalNorm, SmallNormUntouched) {
  Tensor p({2}, {0, 0}, true);
  p.grad_mut()[0] = 0.3;
  p.grad_mut()[1] = 0.4;
  std::vector<Tensor> params{p};
  EXPECT_EQ(clip_global_norm(params, 1.0), 1.0);
  EXPECT_EQ(p.grad()[0], 0.3);
  EXPECT_EQ(p.grad()[1], 0.4);
}

TEST(ClipGlobalNorm, ThreeFourFive) {
  Tensor p({2}, {0, 0}, true);
  p.grad_mut()[0] = 3;
  p.grad_mut()[1] = 4;
  std::vector<Tensor> params{p};
  EXPECT_DOUBLE_EQ(clip_global_norm(params, 1.0), 0.2);
  EXPECT_DOUBLE_EQ(p.grad()[0], 0.6);
  EXPECT_DOUBLE_EQ(p.grad()[1], 0.8);
}

TEST(ClipGlobalNorm, NeverIncreasesNormAndBoundsIt) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> scale(0.01, 20.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Tensor> params;
    for (std::size_t k = 0; k < 4; ++k) {
      Tensor p = testing_support::random_tensor({k + 1, 3}, rng, -1, 1, true);
      const double s = scale(rng);
      for (std::size_t i = 0; i < p.numel(); ++i) p.grad_mut()[i] = s * (static_cast<double>(i % 5) - 2.0);
      params.push_back(p);
    }
    const double before = global_grad_norm(params);
    const double max_norm = scale(rng);
    clip_global_norm(params, max_norm);
    double sq = 0;
    for (const auto& p : params)
      for (double g : p.grad()) sq += g * g;
    EXPECT_LE(std::sqrt(sq), max_norm + 1e-9);
    EXPECT_LE(std::sqrt(sq), before + 1e-12);
  }
}
