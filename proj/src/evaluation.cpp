#include "avp/evaluation.hpp"

#include <thread>

#include "avp/errors.hpp"
#include "avp/tensor_io.hpp"

namespace avp {

Prediction predict(const ModelParams& params, const VideoSample& sample, const PredictOptions& opts) {
  NoGradGuard no_grad;
  const ForwardOutput out = forward(params, sample);
  Prediction p;
  p.video_id = sample.video_id;
  p.prob_audio = to_matrix(out.probs_audio);
  p.prob_visual = to_matrix(out.probs_visual);
  p.video_prob.assign(out.video_prob.values().begin(), out.video_prob.values().end());

  const std::size_t C = params.config.num_classes;
  const std::size_t T = sample.segments();
  p.labels = {BinaryMatrix(T, C), BinaryMatrix(T, C)};
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      const bool gate = !opts.video_gating || p.video_prob[c] > opts.threshold;
      p.labels.audio(t, c) = gate && p.prob_audio(t, c) > opts.threshold;
      p.labels.visual(t, c) = gate && p.prob_visual(t, c) > opts.threshold;
    }
  }
  return p;
}

std::vector<Prediction> predict_corpus(const ModelParams& params, std::span<const VideoSample> samples,
                                       const PredictOptions& opts) {
  std::vector<Prediction> out(samples.size());
  const std::size_t jobs = std::max<std::size_t>(1, std::min(opts.jobs, samples.size()));
  if (jobs == 1) {
    for (std::size_t i = 0; i < samples.size(); ++i) out[i] = predict(params, samples[i], opts);
    return out;
  }
  // Parameters are only read during inference, so workers share them.
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(jobs);
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < samples.size(); i += jobs) out[i] = predict(params, samples[i], opts);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

MetricsReport evaluate_predictions(std::span<const Prediction> preds, const Corpus& corpus, bool ave_mode,
                                   const EvaluateOptions& opts) {
  if (!corpus.has_dense_gt()) throw UsageError("evaluation needs dense ground truth for every video");
  if (preds.size() != corpus.samples.size()) throw ValidationError("evaluation: prediction count mismatch");
  std::vector<DenseLabels> pred_labels;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].video_id != corpus.samples[i].video_id) {
      throw ValidationError("evaluation: prediction for " + preds[i].video_id + " paired with video " +
                            corpus.samples[i].video_id);
    }
    pred_labels.push_back(preds[i].labels);
  }
  const auto gts = corpus.dense_gt();
  MetricsReport report = evaluate_corpus(pred_labels, gts, opts.aggregation);
  if (opts.nonalignment) report.nonalignment = nonalignment_report(pred_labels, gts);
  if (ave_mode) {
    std::vector<std::size_t> pred_classes, gt_classes;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const auto p = ave_predict(preds[i].prob_audio, preds[i].prob_visual);
      const auto g = ave_segment_classes(gts[i]);
      pred_classes.insert(pred_classes.end(), p.begin(), p.end());
      gt_classes.insert(gt_classes.end(), g.begin(), g.end());
    }
    report.ave_accuracy = ave_accuracy(pred_classes, gt_classes);
  }
  return report;
}

MetricsReport evaluate_model(const ModelParams& params, const Corpus& corpus, const EvaluateOptions& opts) {
  if (corpus.num_classes() != params.config.num_classes) {
    throw ValidationError("evaluation: model has " + std::to_string(params.config.num_classes) +
                          " classes, corpus has " + std::to_string(corpus.num_classes()));
  }
  const auto preds = predict_corpus(params, corpus.samples, opts.predict);
  return evaluate_predictions(preds, corpus, params.config.ave_mode, opts);
}

}  // namespace avp
