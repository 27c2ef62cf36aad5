#pragma once

// Segment- and event-level F-scores for audio-visual video parsing, AVE
// segment accuracy, label fidelity, and the modality non-alignment analysis.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avp/labels.hpp"
#include "avp/matrix.hpp"

namespace avp {

/// Strict `prob > threshold`.
BinaryMatrix binarize(const RealMatrix& probs, double threshold = 0.5);

/// A maximal run of positive segments of one class, inclusive bounds.
struct EventSpan {
  std::size_t cls = 0;
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start + 1; }
  bool operator==(const EventSpan&) const = default;
};

/// Maximal runs per class, ordered by (class, start).
std::vector<EventSpan> extract_events(const BinaryMatrix& labels);

/// Temporal IoU; zero for different classes.
double span_iou(const EventSpan& a, const EventSpan& b);

struct MatchCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  /// 2TP / (2TP + FP + FN), and 1 when all three are zero.
  double f_score() const;
  MatchCounts& operator+=(const MatchCounts& o);
};

MatchCounts segment_counts(const BinaryMatrix& pred, const BinaryMatrix& gt);
double segment_f(const BinaryMatrix& pred, const BinaryMatrix& gt);

/// Within each class, pairs are matched greedily by descending IoU; a pair
/// counts as a true positive when its IoU is at least iou_min.
MatchCounts event_counts(std::span<const EventSpan> pred, std::span<const EventSpan> gt, double iou_min = 0.5);
double event_f(std::span<const EventSpan> pred, std::span<const EventSpan> gt, double iou_min = 0.5);

BinaryMatrix logical_and(const BinaryMatrix& a, const BinaryMatrix& b);
BinaryMatrix logical_or(const BinaryMatrix& a, const BinaryMatrix& b);

enum class Aggregation { Macro, Micro };
std::string to_string(Aggregation a);

/// The five scores of one level, in percent.
struct LevelScores {
  double audio = 0.0;
  double visual = 0.0;
  double av = 0.0;
  double type_av = 0.0;
  double event_av = 0.0;
};

/// Corpus-micro F per class, in percent.
struct ClassScores {
  std::vector<double> segment_audio, segment_visual, segment_av;
  std::vector<double> event_audio, event_visual, event_av;
};

struct NonAlignmentReport {
  std::size_t total_events = 0;       // segment-level events: (video, t, c) with gt_a OR gt_v
  std::size_t nonaligned_events = 0;  // gt_a XOR gt_v
  std::size_t success_count = 0;      // non-aligned events predicted in exactly the right modality
  std::size_t aligned_success = 0;    // aligned events predicted in both modalities

  double success_rate() const;
};

struct MetricsReport {
  Aggregation aggregation = Aggregation::Macro;
  std::size_t videos = 0;
  LevelScores segment;
  LevelScores event;
  ClassScores per_class;
  std::optional<double> ave_accuracy;
  std::optional<NonAlignmentReport> nonalignment;
};

MetricsReport evaluate_corpus(std::span<const DenseLabels> preds, std::span<const DenseLabels> gts,
                              Aggregation aggregation = Aggregation::Macro);

/// Segment-level A, V, AV scores of pseudo labels treated as predictions.
LevelScores label_fidelity(std::span<const DenseLabels> pseudo, std::span<const DenseLabels> gt,
                           Aggregation aggregation = Aggregation::Macro);

NonAlignmentReport nonalignment_report(std::span<const DenseLabels> preds, std::span<const DenseLabels> gts);

/// Per segment, the class whose audio and visual probabilities both exceed
/// 0.5, preferring the largest min(p_a, p_v); otherwise the background index.
/// Inputs have C + 1 columns, the last being background, which is never
/// selected by the rule itself.
std::vector<std::size_t> ave_predict(const RealMatrix& prob_audio, const RealMatrix& prob_visual);

/// Segment class for AVE ground truth: a class present in both modalities,
/// otherwise background (index C).
std::vector<std::size_t> ave_segment_classes(const DenseLabels& gt);

double ave_accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> gt);

std::string report_to_json(const MetricsReport& report, int indent = 2);
MetricsReport report_from_json(const std::string& text);
std::string report_to_text(const MetricsReport& report);
/// Rows `modality,class,segment_f,event_f` for A, V, and AV.
std::string per_class_csv(const MetricsReport& report, std::span<const std::string> class_names);

}  // namespace avp
