#pragma once

// Dense pseudo-label elaboration from per-segment teacher logits.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avp/labels.hpp"
#include "avp/matrix.hpp"

namespace avp {

struct PromptRow {
  std::string name;
  std::string visual_caption;
  std::string audio_caption;
  double theta_visual = 0.0;
  double theta_audio = 0.0;

  bool operator==(const PromptRow&) const = default;
};

/// Per-class captions and default thresholds, stored as a 5-column TSV.
struct PromptTable {
  std::vector<PromptRow> rows;

  /// The 25 LLP classes with their published captions and thresholds.
  static PromptTable llp_default();
  static PromptTable parse(const std::string& text, const std::string& origin = "<string>");
  static PromptTable load(const std::filesystem::path& path);
  std::string to_tsv() const;

  std::size_t size() const { return rows.size(); }
  std::vector<std::string> class_names() const;
  Thresholds thresholds() const;
};

/// z = frames · classesᵀ with raw inner products, [T × d] × [C × d] -> [T × C].
RealMatrix teacher_logits_from_embeddings(const RealMatrix& frame_embs, const RealMatrix& class_embs);

enum class ModalityMode { Aware, Agnostic };

struct ElaborateOptions {
  bool video_filter = true;
  ModalityMode mode = ModalityMode::Aware;
};

/// Aware: y^m[t,c] = (z^m[t,c] > theta^m[c]) AND weak[c].
/// Agnostic: both modalities get the OR of the two teachers' decisions.
/// The AND with the weak label is skipped when video_filter is off.
DenseLabels elaborate(const TeacherLogits& logits, const Thresholds& thresholds, const WeakLabel& weak,
                      const ElaborateOptions& opts = {});

std::vector<DenseLabels> elaborate_corpus(std::span<const VideoSample> samples, std::span<const TeacherLogits> logits,
                                          const Thresholds& thresholds, const ElaborateOptions& opts = {});

/// Every segment of both modalities receives the video-level label.
DenseLabels broadcast_weak(const WeakLabel& weak, std::size_t segments);

/// y(1 - eps) + (1 - y) eps, with 0 <= eps < 0.5.
std::vector<double> smooth_labels(const WeakLabel& weak, double epsilon);

/// Per-segment class distributions softmax_c(z) for each teacher.
struct KdTargets {
  RealMatrix visual;
  RealMatrix audio;
};

KdTargets kd_targets(const TeacherLogits& logits);

/// Threshold search grid. Unset bounds default to the observed min and max
/// logit of each (class, modality). With step > 0 the grid is lo, lo+step, ...
/// up to hi; otherwise `points` evenly spaced values including both ends.
struct CalibrationGrid {
  std::optional<double> lo;
  std::optional<double> hi;
  double step = 0.0;
  std::size_t points = 64;
};

std::vector<double> grid_values(double lo, double hi, const CalibrationGrid& grid);

struct CalibrationCell {
  double theta = 0.0;
  double f_score = 0.0;  // in [0, 1]
  bool absent = false;   // no positive ground-truth cell for this class and modality
  std::vector<double> grid;
};

struct CalibrationResult {
  Thresholds thresholds;
  std::vector<CalibrationCell> visual;
  std::vector<CalibrationCell> audio;
};

/// Per class and modality, picks the grid value maximising that class's
/// corpus segment F-score of elaborated labels against ground truth. Ties go
/// to the larger threshold. Labels are scored in modality-aware mode.
CalibrationResult calibrate_thresholds(std::span<const TeacherLogits> logits, std::span<const DenseLabels> dense_gt,
                                       std::span<const WeakLabel> weak, const CalibrationGrid& grid = {},
                                       bool video_filter = true);

/// Appends a background column set exactly where a row has no positive.
DenseLabels extend_background(const DenseLabels& dense);

}  // namespace avp
