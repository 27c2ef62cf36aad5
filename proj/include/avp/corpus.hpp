#pragma once

// Corpus layout on disk:
//   manifest.csv        video_id,T,"EventA,EventB"   (optional header row)
//   classes.txt         one class name per line; order defines the index
//   features/<id>_audio.avt, features/<id>_visual.avt
//   labels_gt.txt       optional dense ground truth (label_io format)
//   teacher/            optional teacher logits (label_io format)
//   bookkeeping.json    generator tallies for synthetic corpora

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "avp/config_file.hpp"
#include "avp/labels.hpp"

namespace avp {

struct ManifestRow {
  std::string video_id;
  std::size_t segments = 0;  // 0 when the row leaves T to the feature files
  std::vector<std::string> events;

  bool operator==(const ManifestRow&) const = default;
};

struct Manifest {
  std::vector<ManifestRow> rows;

  static Manifest parse(const std::string& text, const std::string& origin = "<string>");
  static Manifest load(const std::filesystem::path& path);
  std::string to_csv() const;
};

std::vector<std::string> load_class_table(const std::filesystem::path& path);
void save_class_table(const std::filesystem::path& path, std::span<const std::string> names);

/// Weak label from event names; unknown names raise ParseError naming `where`.
WeakLabel weak_from_names(std::span<const std::string> events, std::span<const std::string> class_names,
                          const std::string& where);

struct Corpus {
  std::vector<std::string> class_names;
  std::vector<VideoSample> samples;
  std::vector<std::string> warnings;

  std::size_t num_classes() const { return class_names.size(); }
  bool has_dense_gt() const;
  std::vector<DenseLabels> dense_gt() const;
  std::vector<WeakLabel> weak_labels() const;
  Corpus subset(std::span<const std::size_t> indices) const;
};

Corpus load_corpus(const std::filesystem::path& manifest_path, const std::filesystem::path& feature_dir,
                   const std::filesystem::path& class_table, const std::optional<std::filesystem::path>& labels);
/// Standard directory layout; ground truth is read when labels_gt.txt exists.
Corpus load_corpus(const std::filesystem::path& dir);

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

/// Seeded partition stratified by each video's lowest-index event class.
SplitIndices split_corpus(const Corpus& corpus, std::array<double, 3> fractions, std::uint64_t seed);

// --- synthetic corpora ------------------------------------------------------

struct SyntheticSpec {
  std::size_t num_videos = 200;
  std::size_t segments = 10;
  std::size_t num_classes = 25;
  std::size_t min_events = 1;
  std::size_t max_events = 3;
  double mix_audio_only = 0.25;
  double mix_visual_only = 0.25;
  double mix_both = 0.5;
  std::size_t min_span = 2;
  std::size_t max_span = 10;
  std::size_t audio_feat_dim = 32;
  std::size_t visual_feat_dim = 32;
  double feature_noise = 1.0;
  double teacher_pos_mean = 2.0;
  double teacher_neg_mean = -2.0;
  /// Probability that the midpoint threshold classifies a teacher cell
  /// correctly; sets the teacher noise. Ignored when teacher_noise is given.
  double teacher_accuracy = 0.85;
  std::optional<double> teacher_noise;
  /// Audio-teacher confusions: while class a sounds, class b's audio logit
  /// is drawn from the positive distribution, and vice versa.
  std::vector<std::pair<std::size_t, std::size_t>> confusable_pairs;
  /// One event per video, present in both modalities.
  bool ave_mode = false;
  std::uint64_t seed = 0;

  void validate() const;
  double teacher_sigma() const;
  static SyntheticSpec from_config(const KeyValueConfig& cfg);
  std::string to_config_text() const;
};

struct Bookkeeping {
  std::size_t videos = 0;
  std::size_t events = 0;
  std::size_t audio_only_events = 0;
  std::size_t visual_only_events = 0;
  std::size_t both_events = 0;
  std::size_t segment_events = 0;
  std::size_t nonaligned_segment_events = 0;
  std::vector<std::size_t> class_events;

  double nonaligned_fraction() const;
  std::string to_json() const;
  static Bookkeeping from_json(const std::string& text);
};

struct SyntheticCorpus {
  Corpus corpus;
  std::vector<TeacherLogits> teacher;
  Bookkeeping bookkeeping;
};

/// Class names for a synthetic corpus: the LLP names when C = 25, else c00, c01, ...
std::vector<std::string> synthetic_class_names(std::size_t num_classes);

/// Deterministic in spec.seed. Feature and logit values are rounded to
/// single precision so the in-memory corpus equals what is written to disk.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);
void write_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus, const SyntheticSpec& spec);

}  // namespace avp
