#pragma once

// File formats for teacher logits, dense labels, and thresholds.
//
// Teacher logits directory:
//   manifest.tsv          one `video_id<TAB>T` line per video
//   <id>_visual.avt       T × C tensor blob
//   <id>_audio.avt        T × C tensor blob
//
// Dense labels file, per video:
//   <video_id>
//   A: 0 1 0 ...          T lines
//   V: 0 0 1 ...          T lines
//
// Thresholds file: TSV with header `class<TAB>theta_visual<TAB>theta_audio`.

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "avp/labels.hpp"

namespace avp {

void write_teacher_logits(const std::filesystem::path& dir, std::span<const TeacherLogits> logits);
std::vector<TeacherLogits> read_teacher_logits(const std::filesystem::path& dir);

/// Reorders `logits` to follow `samples`, checking ids, T, and class count.
std::vector<TeacherLogits> align_logits(std::span<const VideoSample> samples, std::span<const TeacherLogits> logits,
                                        std::size_t num_classes);

struct LabeledVideo {
  std::string video_id;
  DenseLabels labels;

  bool operator==(const LabeledVideo&) const = default;
};

void write_dense_labels(std::ostream& out, std::span<const LabeledVideo> videos);
std::vector<LabeledVideo> read_dense_labels(std::istream& in, const std::string& origin = "<stream>");
void save_dense_labels(const std::filesystem::path& path, std::span<const LabeledVideo> videos);
std::vector<LabeledVideo> load_dense_labels(const std::filesystem::path& path);

/// Reads an externally produced (e.g. denoised) labels file and checks it
/// covers `samples` with matching T and C. Result follows sample order.
std::vector<DenseLabels> import_external_labels(const std::filesystem::path& path,
                                                std::span<const VideoSample> samples, std::size_t num_classes);

void save_thresholds(const std::filesystem::path& path, const Thresholds& thresholds,
                     std::span<const std::string> class_names);
Thresholds load_thresholds(const std::filesystem::path& path, std::span<const std::string> class_names);

}  // namespace avp
