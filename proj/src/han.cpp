#include "avp/han.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "avp/errors.hpp"
#include "avp/label_io.hpp"
#include "avp/tensor_io.hpp"

namespace avp {

using nlohmann::json;

// --- config -----------------------------------------------------------------

ModelConfig ModelConfig::standard() {
  ModelConfig c;
  c.hidden_dim = 512;
  c.num_layers = 1;
  c.ffn_dim = 1024;
  return c;
}

ModelConfig ModelConfig::variant() {
  ModelConfig c;
  c.hidden_dim = 256;
  c.num_layers = 4;
  // 2d would leave the variant ~9% lighter than the standard preset at LLP
  // input widths; 672 brings the two within 1%.
  c.ffn_dim = 672;
  return c;
}

void ModelConfig::validate() const {
  if (hidden_dim == 0 || num_layers == 0 || num_classes == 0 || heads == 0 || audio_feat_dim == 0 ||
      visual_feat_dim == 0) {
    throw ConfigError("model config: all dimensions must be positive");
  }
  if (hidden_dim % heads != 0) {
    throw ConfigError("model config: hidden_dim " + std::to_string(hidden_dim) + " not divisible by heads " +
                      std::to_string(heads));
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model config: dropout must be in [0, 1)");
}

const std::vector<std::string>& model_config_keys() {
  static const std::vector<std::string> keys = {"preset",         "hidden_dim",      "num_layers", "num_classes",
                                                "heads",          "audio_feat_dim",  "visual_feat_dim",
                                                "ffn_dim",        "ave_mode",        "pre_norm",   "dropout"};
  return keys;
}

ModelConfig ModelConfig::from_config(const KeyValueConfig& cfg) {
  const std::string preset = cfg.get_string("preset", "standard");
  ModelConfig c;
  if (preset == "standard") {
    c = standard();
  } else if (preset == "variant") {
    c = variant();
  } else {
    throw ConfigError("model config: unknown preset `" + preset + "`");
  }
  c.hidden_dim = cfg.get_uint("hidden_dim", c.hidden_dim);
  c.num_layers = cfg.get_uint("num_layers", c.num_layers);
  c.num_classes = cfg.get_uint("num_classes", c.num_classes);
  c.heads = cfg.get_uint("heads", c.heads);
  c.audio_feat_dim = cfg.get_uint("audio_feat_dim", c.audio_feat_dim);
  c.visual_feat_dim = cfg.get_uint("visual_feat_dim", c.visual_feat_dim);
  // A width override without an explicit FFN size falls back to 2d.
  c.ffn_dim = cfg.get_uint("ffn_dim", cfg.has("hidden_dim") ? 0 : c.ffn_dim);
  c.ave_mode = cfg.get_bool("ave_mode", c.ave_mode);
  c.pre_norm = cfg.get_bool("pre_norm", c.pre_norm);
  c.dropout = cfg.get_double("dropout", c.dropout);
  c.validate();
  return c;
}

std::string ModelConfig::to_config_text() const {
  std::ostringstream os;
  os << "hidden_dim = " << hidden_dim << "\n"
     << "num_layers = " << num_layers << "\n"
     << "num_classes = " << num_classes << "\n"
     << "heads = " << heads << "\n"
     << "audio_feat_dim = " << audio_feat_dim << "\n"
     << "visual_feat_dim = " << visual_feat_dim << "\n"
     << "ffn_dim = " << ffn_width() << "\n"
     << "ave_mode = " << (ave_mode ? "true" : "false") << "\n"
     << "pre_norm = " << (pre_norm ? "true" : "false") << "\n"
     << "dropout = " << dropout << "\n";
  return os.str();
}

// --- parameters -------------------------------------------------------------

namespace {

void push_linear(std::vector<NamedTensor>& out, const std::string& prefix, const Linear& l) {
  out.push_back({prefix + ".weight", l.weight});
  if (l.bias.defined()) out.push_back({prefix + ".bias", l.bias});
}

void push_attention(std::vector<NamedTensor>& out, const std::string& prefix, const AttentionParams& a) {
  out.push_back({prefix + ".wq", a.wq});
  out.push_back({prefix + ".wk", a.wk});
  out.push_back({prefix + ".wv", a.wv});
  out.push_back({prefix + ".wo", a.wo});
  out.push_back({prefix + ".bo", a.bo});
}

void push_norm(std::vector<NamedTensor>& out, const std::string& prefix, const LayerNormParams& n) {
  out.push_back({prefix + ".gain", n.gain});
  out.push_back({prefix + ".bias", n.bias});
}

void push_block(std::vector<NamedTensor>& out, const std::string& prefix, const ModalityBlock& b) {
  push_attention(out, prefix + ".self_attn", b.self_attn);
  push_attention(out, prefix + ".cross_attn", b.cross_attn);
  push_norm(out, prefix + ".norm1", b.norm1);
  push_linear(out, prefix + ".ffn_in", b.ffn_in);
  push_linear(out, prefix + ".ffn_out", b.ffn_out);
  push_norm(out, prefix + ".norm2", b.norm2);
}

ModalityBlock make_block(const ModelConfig& c, std::mt19937_64& rng) {
  ModalityBlock b;
  b.self_attn = make_attention(c.hidden_dim, rng);
  b.cross_attn = make_attention(c.hidden_dim, rng);
  b.norm1 = make_layer_norm(c.hidden_dim);
  b.ffn_in = make_linear(c.hidden_dim, c.ffn_width(), rng);
  b.ffn_out = make_linear(c.ffn_width(), c.hidden_dim, rng);
  b.norm2 = make_layer_norm(c.hidden_dim);
  return b;
}

}  // namespace

std::vector<NamedTensor> ModelParams::named() const {
  std::vector<NamedTensor> out;
  push_linear(out, "audio_in", audio_in);
  push_linear(out, "visual_in", visual_in);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string prefix = "layers." + std::to_string(i);
    push_block(out, prefix + ".audio", layers[i].audio);
    push_block(out, prefix + ".visual", layers[i].visual);
  }
  push_linear(out, "classifier", classifier);
  push_linear(out, "temporal_att_audio", temporal_att_audio);
  push_linear(out, "temporal_att_visual", temporal_att_visual);
  push_linear(out, "modality_att", modality_att);
  return out;
}

std::vector<Tensor> ModelParams::tensors() const {
  std::vector<Tensor> out;
  for (auto& nt : named()) out.push_back(nt.tensor);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& nt : named()) n += nt.tensor.numel();
  return n;
}

ModelParams ModelParams::clone() const {
  // Rebuild the structure, then overwrite every tensor by position.
  ModelParams copy = init_model(config, 0);
  auto dst = copy.named();
  auto src = named();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto values = dst[i].tensor.values_mut();
    std::copy(src[i].tensor.values().begin(), src[i].tensor.values().end(), values.begin());
  }
  return copy;
}

void ModelParams::zero_grad() {
  for (auto& nt : named()) nt.tensor.zero_grad();
}

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.config = config;
  p.audio_in = make_linear(config.audio_feat_dim, config.hidden_dim, rng);
  p.visual_in = make_linear(config.visual_feat_dim, config.hidden_dim, rng);
  for (std::size_t i = 0; i < config.num_layers; ++i) {
    HanLayerParams layer;
    layer.audio = make_block(config, rng);
    layer.visual = make_block(config, rng);
    p.layers.push_back(std::move(layer));
  }
  const std::size_t c = config.output_classes();
  p.classifier = make_linear(config.hidden_dim, c, rng);
  p.temporal_att_audio = make_linear(config.hidden_dim, c, rng);
  p.temporal_att_visual = make_linear(config.hidden_dim, c, rng);
  p.modality_att = make_linear(config.hidden_dim, c, rng);
  return p;
}

// --- forward ----------------------------------------------------------------

namespace {

Tensor maybe_dropout(const Tensor& x, const ModelConfig& c, const ForwardOptions& opts) {
  if (!opts.training || c.dropout == 0.0) return x;
  if (!opts.rng) throw UsageError("forward: dropout in training mode needs an rng");
  return dropout(x, c.dropout, *opts.rng);
}

Tensor feed_forward(const Tensor& x, const ModalityBlock& b, const ModelConfig& c, const ForwardOptions& opts) {
  return maybe_dropout(linear(relu(linear(x, b.ffn_in)), b.ffn_out), c, opts);
}

/// One stream's update: residual self + cross attention, norm, residual FFN, norm.
Tensor update_stream(const Tensor& self, const Tensor& self_in, const Tensor& other_in,
                     const ModalityBlock& b, const ModelConfig& c, const ForwardOptions& opts) {
  const Tensor self_att = maybe_dropout(multi_head_attention(self_in, self_in, self_in, c.heads, b.self_attn), c, opts);
  const Tensor cross_att =
      maybe_dropout(multi_head_attention(self_in, other_in, other_in, c.heads, b.cross_attn), c, opts);
  Tensor mixed = self + self_att + cross_att;
  if (c.pre_norm) {
    return mixed + feed_forward(layer_norm(mixed, b.norm2.gain, b.norm2.bias), b, c, opts);
  }
  mixed = layer_norm(mixed, b.norm1.gain, b.norm1.bias);
  return layer_norm(mixed + feed_forward(mixed, b, c, opts), b.norm2.gain, b.norm2.bias);
}

void check_features(const ModelConfig& c, const Tensor& fa, const Tensor& fv) {
  if (!fa.defined() || !fv.defined() || fa.rank() != 2 || fv.rank() != 2) {
    throw DimensionError("forward: features must be 2-D [T x d]");
  }
  if (fa.dim(1) != c.audio_feat_dim) {
    throw DimensionError("forward: audio feature width expected " + std::to_string(c.audio_feat_dim) + ", got " +
                         std::to_string(fa.dim(1)));
  }
  if (fv.dim(1) != c.visual_feat_dim) {
    throw DimensionError("forward: visual feature width expected " + std::to_string(c.visual_feat_dim) + ", got " +
                         std::to_string(fv.dim(1)));
  }
  if (fa.dim(0) != fv.dim(0)) {
    throw DimensionError("forward: audio has " + std::to_string(fa.dim(0)) + " segments, visual has " +
                         std::to_string(fv.dim(0)));
  }
}

}  // namespace

std::pair<Tensor, Tensor> han_layer(const Tensor& audio, const Tensor& visual, const HanLayerParams& layer,
                                    const ModelConfig& config, const ForwardOptions& opts) {
  if (!audio.defined() || !visual.defined() || audio.rank() != 2 || visual.rank() != 2) {
    throw DimensionError("han_layer: inputs must be 2-D");
  }
  if (audio.dim(0) == 0 || visual.dim(0) == 0) throw UsageError("han_layer: empty input");
  if (audio.shape() != visual.shape()) {
    throw DimensionError("han_layer: stream shapes differ " + shape_str(audio.shape()) + " vs " +
                         shape_str(visual.shape()));
  }
  Tensor audio_in = audio, visual_in = visual;
  if (config.pre_norm) {
    audio_in = layer_norm(audio, layer.audio.norm1.gain, layer.audio.norm1.bias);
    visual_in = layer_norm(visual, layer.visual.norm1.gain, layer.visual.norm1.bias);
  }
  Tensor new_audio = update_stream(audio, audio_in, visual_in, layer.audio, config, opts);
  Tensor new_visual = update_stream(visual, visual_in, audio_in, layer.visual, config, opts);
  return {std::move(new_audio), std::move(new_visual)};
}

std::pair<Tensor, Tensor> encode(const ModelParams& params, const Tensor& feats_audio, const Tensor& feats_visual,
                                 const ForwardOptions& opts) {
  check_features(params.config, feats_audio, feats_visual);
  Tensor a = linear(feats_audio, params.audio_in);
  Tensor v = linear(feats_visual, params.visual_in);
  for (const auto& layer : params.layers) {
    auto [na, nv] = han_layer(a, v, layer, params.config, opts);
    a = std::move(na);
    v = std::move(nv);
  }
  return {std::move(a), std::move(v)};
}

ForwardOutput pool_heads(const ModelParams& params, const Tensor& hidden_audio, const Tensor& hidden_visual) {
  ForwardOutput out;
  out.hidden_audio = hidden_audio;
  out.hidden_visual = hidden_visual;
  out.logits_audio = linear(hidden_audio, params.classifier);
  out.logits_visual = linear(hidden_visual, params.classifier);
  out.probs_audio = sigmoid(out.logits_audio);
  out.probs_visual = sigmoid(out.logits_visual);

  out.temporal_att_audio = softmax(linear(hidden_audio, params.temporal_att_audio), 0);
  out.temporal_att_visual = softmax(linear(hidden_visual, params.temporal_att_visual), 0);
  const Tensor weighted_audio = out.temporal_att_audio * out.probs_audio;
  const Tensor weighted_visual = out.temporal_att_visual * out.probs_visual;
  out.modality_prob_audio = sum_rows(weighted_audio);
  out.modality_prob_visual = sum_rows(weighted_visual);

  const Tensor scores[2] = {linear(hidden_audio, params.modality_att), linear(hidden_visual, params.modality_att)};
  out.modality_att = softmax(stack(scores), 0);
  const Tensor beta_audio = select(out.modality_att, 0);
  const Tensor beta_visual = select(out.modality_att, 1);
  out.video_prob = sum_rows(beta_audio * weighted_audio + beta_visual * weighted_visual);
  return out;
}

ForwardOutput forward(const ModelParams& params, const Tensor& feats_audio, const Tensor& feats_visual,
                      const ForwardOptions& opts) {
  auto [a, v] = encode(params, feats_audio, feats_visual, opts);
  return pool_heads(params, a, v);
}

ForwardOutput forward(const ModelParams& params, const VideoSample& sample, const ForwardOptions& opts) {
  return forward(params, sample.feats_audio, sample.feats_visual, opts);
}

std::vector<ForwardOutput> forward_batch(const ModelParams& params, std::span<const VideoSample> samples) {
  std::vector<ForwardOutput> outs;
  outs.reserve(samples.size());
  for (const auto& s : samples) outs.push_back(forward(params, s));
  return outs;
}

std::vector<TeacherLogits> model_teacher_logits(const ModelParams& params, std::span<const VideoSample> samples) {
  NoGradGuard no_grad;
  std::vector<TeacherLogits> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const ForwardOutput f = forward(params, s);
    out.push_back({s.video_id, to_matrix(f.logits_visual), to_matrix(f.logits_audio)});
  }
  return out;
}

void export_model_logits(const ModelParams& params, std::span<const VideoSample> samples,
                         const std::filesystem::path& out_dir) {
  write_teacher_logits(out_dir, model_teacher_logits(params, samples));
}

// --- checkpoints ------------------------------------------------------------

namespace {

json config_to_json(const ModelConfig& c) {
  return json{{"hidden_dim", c.hidden_dim},         {"num_layers", c.num_layers},
              {"num_classes", c.num_classes},       {"heads", c.heads},
              {"audio_feat_dim", c.audio_feat_dim}, {"visual_feat_dim", c.visual_feat_dim},
              {"ffn_dim", c.ffn_width()},           {"ave_mode", c.ave_mode},
              {"pre_norm", c.pre_norm},             {"dropout", c.dropout}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.audio_feat_dim = j.at("audio_feat_dim").get<std::size_t>();
  c.visual_feat_dim = j.at("visual_feat_dim").get<std::size_t>();
  c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  c.ave_mode = j.at("ave_mode").get<bool>();
  c.pre_norm = j.at("pre_norm").get<bool>();
  c.dropout = j.at("dropout").get<double>();
  c.validate();
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  json manifest;
  manifest["format"] = "avparse-checkpoint-1";
  manifest["config"] = config_to_json(params.config);
  json list = json::array();
  for (const auto& nt : params.named()) {
    const std::string file = nt.name + ".avt";
    save_tensor(dir / file, nt.tensor);
    list.push_back({{"name", nt.name}, {"shape", nt.tensor.shape()}, {"file", file}});
  }
  manifest["parameters"] = std::move(list);
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

ModelParams load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open checkpoint manifest " + manifest_path.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw ParseError(manifest_path.string() + ": " + e.what());
  }
  ModelConfig config;
  try {
    config = config_from_json(manifest.at("config"));
  } catch (const json::exception& e) {
    throw ParseError(manifest_path.string() + ": bad config block: " + e.what());
  }
  ModelParams params = init_model(config, 0);
  auto slots = params.named();
  const auto& entries = manifest.at("parameters");
  if (entries.size() != slots.size()) {
    throw ValidationError(manifest_path.string() + ": expected " + std::to_string(slots.size()) +
                          " parameters, manifest lists " + std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& e = entries[i];
    if (e.at("name").get<std::string>() != slots[i].name) {
      throw ValidationError(manifest_path.string() + ": parameter " + std::to_string(i) + " is `" +
                            e.at("name").get<std::string>() + "`, expected `" + slots[i].name + "`");
    }
    const Tensor loaded = load_tensor(dir / e.at("file").get<std::string>());
    if (loaded.shape() != slots[i].tensor.shape()) {
      throw DimensionError(slots[i].name + ": checkpoint shape " + shape_str(loaded.shape()) + ", model expects " +
                           shape_str(slots[i].tensor.shape()));
    }
    auto dst = slots[i].tensor.values_mut();
    std::copy(loaded.values().begin(), loaded.values().end(), dst.begin());
  }
  return params;
}

}  // namespace avp
