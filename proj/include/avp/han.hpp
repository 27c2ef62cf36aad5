#pragma once

// Hybrid Attention Network with multi-modal multiple-instance pooling.
//
// Each layer updates both streams from the same inputs:
//   f~a = fa + Att(fa, Fa, Fa) + Att(fa, Fv, Fv)      (and symmetrically for v)
// followed by LayerNorm and a residual 2-layer FFN. A shared classifier maps
// hidden states to per-segment logits; temporal attention (softmax over t)
// and modality attention (softmax over {a, v}) pool them to modality- and
// video-level probabilities.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "avp/config_file.hpp"
#include "avp/labels.hpp"
#include "avp/nn.hpp"

namespace avp {

struct ModelConfig {
  std::size_t hidden_dim = 512;
  std::size_t num_layers = 1;
  std::size_t num_classes = 25;
  std::size_t heads = 4;
  std::size_t audio_feat_dim = 128;
  std::size_t visual_feat_dim = 2560;
  std::size_t ffn_dim = 0;  // 0 means 2 * hidden_dim
  bool ave_mode = false;    // extra background output
  bool pre_norm = false;
  double dropout = 0.0;

  /// 1 layer, width 512.
  static ModelConfig standard();
  /// 4 layers, width 256, FFN width chosen to match the standard parameter budget.
  static ModelConfig variant();

  std::size_t output_classes() const { return num_classes + (ave_mode ? 1 : 0); }
  std::size_t ffn_width() const { return ffn_dim == 0 ? 2 * hidden_dim : ffn_dim; }
  void validate() const;

  /// Overrides fields from `preset`/model keys present in cfg.
  static ModelConfig from_config(const KeyValueConfig& cfg);
  std::string to_config_text() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Model config keys recognised by from_config.
const std::vector<std::string>& model_config_keys();

struct ModalityBlock {
  AttentionParams self_attn;
  AttentionParams cross_attn;
  LayerNormParams norm1;
  LayerNormParams norm2;
  Linear ffn_in;
  Linear ffn_out;
};

struct HanLayerParams {
  ModalityBlock audio;
  ModalityBlock visual;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct ModelParams {
  ModelConfig config;
  Linear audio_in;
  Linear visual_in;
  std::vector<HanLayerParams> layers;
  Linear classifier;           // shared by both streams
  Linear temporal_att_audio;   // W^a
  Linear temporal_att_visual;  // W^v
  Linear modality_att;         // W

  /// Stable, ordered view over every trainable tensor (handles share storage).
  std::vector<NamedTensor> named() const;
  std::vector<Tensor> tensors() const;
  std::size_t parameter_count() const;
  /// Deep copy with fresh leaves.
  ModelParams clone() const;
  void zero_grad();
};

ModelParams init_model(const ModelConfig& config, std::uint64_t seed);

struct ForwardOptions {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // required for dropout when training
};

struct ForwardOutput {
  Tensor hidden_audio, hidden_visual;                // [T × d]
  Tensor logits_audio, logits_visual;                // z^m_t, [T × C']
  Tensor probs_audio, probs_visual;                  // p^m_t
  Tensor temporal_att_audio, temporal_att_visual;    // alpha^m, columns sum to 1 over t
  Tensor modality_att;                               // beta, [2 × T × C'], index 0 = audio
  Tensor modality_prob_audio, modality_prob_visual;  // p^m, [C']
  Tensor video_prob;                                 // p, [C']
};

std::pair<Tensor, Tensor> han_layer(const Tensor& audio, const Tensor& visual, const HanLayerParams& layer,
                                    const ModelConfig& config, const ForwardOptions& opts = {});

/// Input projection plus the stacked HAN layers.
std::pair<Tensor, Tensor> encode(const ModelParams& params, const Tensor& feats_audio, const Tensor& feats_visual,
                                 const ForwardOptions& opts = {});

/// Classifier and MMIL pooling from hidden states.
ForwardOutput pool_heads(const ModelParams& params, const Tensor& hidden_audio, const Tensor& hidden_visual);

ForwardOutput forward(const ModelParams& params, const Tensor& feats_audio, const Tensor& feats_visual,
                      const ForwardOptions& opts = {});
ForwardOutput forward(const ModelParams& params, const VideoSample& sample, const ForwardOptions& opts = {});

/// Per-sample forward over a batch; no state is shared between samples.
std::vector<ForwardOutput> forward_batch(const ModelParams& params, std::span<const VideoSample> samples);

/// Dense logits of a model in teacher form, for using a trained model as a labeler.
std::vector<TeacherLogits> model_teacher_logits(const ModelParams& params, std::span<const VideoSample> samples);
/// Writes model_teacher_logits in the teacher-logits directory format.
void export_model_logits(const ModelParams& params, std::span<const VideoSample> samples,
                         const std::filesystem::path& out_dir);

/// Checkpoint directory: manifest.json (config + parameter list) and one
/// tensor blob per parameter.
void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& dir);

}  // namespace avp
