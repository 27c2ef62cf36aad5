#pragma once

// Random fixtures shared by the unit tests.

#include <cstdint>
#include <random>
#include <vector>

#include "avp/han.hpp"
#include "avp/labels.hpp"
#include "avp/tensor.hpp"

namespace testing_support {

inline avp::Tensor random_tensor(avp::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                                 bool requires_grad = false) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(avp::shape_numel(shape));
  for (double& x : v) x = d(rng);
  return avp::Tensor(std::move(shape), std::move(v), requires_grad);
}

inline avp::BinaryMatrix random_binary(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double p = 0.5) {
  std::bernoulli_distribution b(p);
  avp::BinaryMatrix m(rows, cols);
  for (auto& x : m.data()) x = b(rng);
  return m;
}

inline avp::RealMatrix random_real(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -3.0,
                                   double hi = 3.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  avp::RealMatrix m(rows, cols);
  for (auto& x : m.data()) x = d(rng);
  return m;
}

inline avp::WeakLabel random_weak(std::size_t C, std::mt19937_64& rng, double p = 0.5) {
  std::bernoulli_distribution b(p);
  avp::WeakLabel w = avp::WeakLabel::none(C);
  for (auto& x : w.classes) x = b(rng);
  return w;
}

inline avp::ModelConfig toy_config(std::size_t d = 8, std::size_t C = 3, std::size_t layers = 1, bool ave = false) {
  avp::ModelConfig c;
  c.hidden_dim = d;
  c.num_layers = layers;
  c.num_classes = C;
  c.heads = 2;
  c.audio_feat_dim = 5;
  c.visual_feat_dim = 6;
  c.ffn_dim = 0;
  c.ave_mode = ave;
  return c;
}

inline avp::VideoSample random_sample(const avp::ModelConfig& c, std::size_t T, std::mt19937_64& rng) {
  avp::VideoSample s;
  s.video_id = "toy";
  s.feats_audio = random_tensor({T, c.audio_feat_dim}, rng);
  s.feats_visual = random_tensor({T, c.visual_feat_dim}, rng);
  s.dense_gt = avp::DenseLabels{random_binary(T, c.num_classes, rng), random_binary(T, c.num_classes, rng)};
  s.weak = avp::weak_from_dense(*s.dense_gt);
  return s;
}

}  // namespace testing_support
