#pragma once

// Epoch-based training with AdamW, warmup-cosine schedule, and global
// gradient clipping.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "avp/config_file.hpp"
#include "avp/corpus.hpp"
#include "avp/evaluation.hpp"
#include "avp/han.hpp"
#include "avp/label_forge.hpp"
#include "avp/losses.hpp"
#include "avp/metrics.hpp"
#include "avp/optim.hpp"

namespace avp {

struct TrainConfig {
  LossMode loss = LossMode::Base;
  ModalityLoss mixed_audio = ModalityLoss::Valor;  // used by LossMode::Mixed
  ModalityLoss mixed_visual = ModalityLoss::Guided;
  int epochs = 60;
  std::size_t batch_size = 64;
  LrSchedule schedule;
  AdamWConfig optimizer;
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
  double smoothing = 0.1;
  TemporalReduction reduction = TemporalReduction::Mean;
  std::size_t jobs = 1;

  /// Batch 64, 60 epochs, warmup 10, clip 1.0, lr 1e-4 -> 1e-6.
  static TrainConfig standard();
  /// As standard with lr 3e-4 -> 3e-6.
  static TrainConfig variant();

  void validate() const;
  bool needs_dense() const;
  bool needs_kd() const;
  /// Reads `train_preset` and training keys over the matching preset.
  static TrainConfig from_config(const KeyValueConfig& cfg);
  std::string to_config_text() const;
};

/// Keys recognised by TrainConfig::from_config.
const std::vector<std::string>& train_config_keys();

/// Per-video supervision aligned with the training samples. `dense` holds
/// C-class labels; AVE modes append the background column themselves.
struct TrainData {
  const Corpus* train = nullptr;
  const Corpus* validation = nullptr;  // optional; needs dense ground truth
  std::vector<DenseLabels> dense;
  std::vector<KdTargets> kd;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;  // mean over videos
  std::map<std::string, double> components;
  double mean_grad_norm = 0.0;  // before clipping
  std::optional<double> val_type_av;
};

struct TrainReport {
  std::string loss_mode;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;  // -1 when no validation split was given
  std::string selection = "last";
  std::optional<MetricsReport> final_validation;
  double wall_seconds = 0.0;

  std::string to_json(bool include_timing = true) const;
};

struct TrainResult {
  ModelParams params;
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochRecord&, const ModelParams&)>;

/// Trains a fresh model initialised from config.seed.
TrainResult train(const ModelConfig& model, const TrainConfig& config, const TrainData& data,
                  const EpochCallback& on_epoch = {});

/// Loss value and per-term parts for one video.
struct LossParts {
  Tensor total;
  std::map<std::string, double> components;
};

LossParts compute_loss(const ForwardOutput& out, const TrainConfig& config, const VideoSample& sample,
                       const DenseLabels* dense, const KdTargets* kd);

}  // namespace avp
