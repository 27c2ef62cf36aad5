#pragma once

// Model inference over a corpus and scoring against dense ground truth.

#include <cstddef>
#include <span>
#include <vector>

#include "avp/corpus.hpp"
#include "avp/han.hpp"
#include "avp/metrics.hpp"

namespace avp {

struct PredictOptions {
  double threshold = 0.5;
  /// Also require the video-level probability to exceed the threshold.
  bool video_gating = false;
  std::size_t jobs = 1;
};

/// Binarized segment predictions plus the probabilities they came from.
struct Prediction {
  std::string video_id;
  DenseLabels labels;  // C classes; the AVE background column is dropped
  RealMatrix prob_audio, prob_visual;
  std::vector<double> video_prob;
};

Prediction predict(const ModelParams& params, const VideoSample& sample, const PredictOptions& opts = {});
std::vector<Prediction> predict_corpus(const ModelParams& params, std::span<const VideoSample> samples,
                                       const PredictOptions& opts = {});

struct EvaluateOptions {
  PredictOptions predict;
  Aggregation aggregation = Aggregation::Macro;
  bool nonalignment = false;
};

/// Full report; AVE models also get segment accuracy.
MetricsReport evaluate_model(const ModelParams& params, const Corpus& corpus, const EvaluateOptions& opts = {});
MetricsReport evaluate_predictions(std::span<const Prediction> preds, const Corpus& corpus, bool ave_mode,
                                   const EvaluateOptions& opts = {});

}  // namespace avp
