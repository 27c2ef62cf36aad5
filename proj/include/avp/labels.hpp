#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "avp/matrix.hpp"
#include "avp/tensor.hpp"

namespace avp {

/// Video-level label: one bit per class, no modality, no timing.
struct WeakLabel {
  std::vector<std::uint8_t> classes;

  WeakLabel() = default;
  explicit WeakLabel(std::vector<std::uint8_t> bits) : classes(std::move(bits)) {}
  static WeakLabel none(std::size_t num_classes) { return WeakLabel(std::vector<std::uint8_t>(num_classes, 0)); }

  std::size_t size() const { return classes.size(); }
  bool has(std::size_t c) const { return classes[c] != 0; }
  bool operator==(const WeakLabel&) const = default;
};

/// Per-segment, per-modality binary labels, T × C each.
struct DenseLabels {
  BinaryMatrix audio;
  BinaryMatrix visual;

  std::size_t segments() const { return audio.rows(); }
  std::size_t classes() const { return audio.cols(); }
  bool operator==(const DenseLabels&) const = default;
};

/// Per-segment class logits from the external visual and audio teachers.
struct TeacherLogits {
  std::string video_id;
  RealMatrix visual;
  RealMatrix audio;

  std::size_t segments() const { return visual.rows(); }
};

struct Thresholds {
  std::vector<double> visual;
  std::vector<double> audio;
};

/// One clip: features for both streams plus its labels.
struct VideoSample {
  std::string video_id;
  Tensor feats_audio;   // [T × d_a]
  Tensor feats_visual;  // [T × d_v]
  WeakLabel weak;
  std::optional<DenseLabels> dense_gt;

  std::size_t segments() const { return feats_audio.dim(0); }
};

/// max over time of the OR of both modalities.
WeakLabel weak_from_dense(const DenseLabels& dense);

}  // namespace avp
