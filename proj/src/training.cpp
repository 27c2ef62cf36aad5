#include "avp/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "avp/errors.hpp"

namespace avp {

using nlohmann::json;

// --- config -----------------------------------------------------------------

TrainConfig TrainConfig::standard() {
  TrainConfig c;
  c.schedule = {1e-4, 1e-6, 10, 60};
  return c;
}

TrainConfig TrainConfig::variant() {
  TrainConfig c;
  c.schedule = {3e-4, 3e-6, 10, 60};
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train config: epochs must be non-negative");
  if (batch_size == 0) throw ConfigError("train config: batch_size must be positive");
  if (jobs == 0) throw ConfigError("train config: jobs must be positive");
  if (!(grad_clip > 0.0)) throw ConfigError("train config: grad_clip must be positive");
  if (!(smoothing >= 0.0 && smoothing < 0.5)) throw ConfigError("train config: smoothing must be in [0, 0.5)");
  if (epochs > 0) {
    if (schedule.total_epochs != epochs) {
      throw ConfigError("train config: schedule covers " + std::to_string(schedule.total_epochs) +
                        " epochs but training runs " + std::to_string(epochs));
    }
    schedule.validate();
  }
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) || !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
    throw ConfigError("train config: betas must be in [0, 1)");
  }
  if (!(optimizer.eps > 0.0) || !(optimizer.weight_decay >= 0.0)) {
    throw ConfigError("train config: adam_eps must be positive and weight_decay non-negative");
  }
}

bool TrainConfig::needs_dense() const {
  return loss == LossMode::Valor || loss == LossMode::AveValor ||
         (loss == LossMode::Mixed && (mixed_audio == ModalityLoss::Valor || mixed_visual == ModalityLoss::Valor));
}

bool TrainConfig::needs_kd() const {
  return loss == LossMode::Kd ||
         (loss == LossMode::Mixed && (mixed_audio == ModalityLoss::Kd || mixed_visual == ModalityLoss::Kd));
}

const std::vector<std::string>& train_config_keys() {
  static const std::vector<std::string> keys = {
      "train_preset", "loss",      "mixed_audio",  "mixed_visual", "epochs",    "batch_size",
      "peak_lr",      "min_lr",    "warmup_epochs", "beta1",       "beta2",     "adam_eps",
      "weight_decay", "grad_clip", "seed",          "smoothing",   "reduction", "jobs"};
  return keys;
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& cfg) {
  const std::string preset = cfg.get_string("train_preset", cfg.get_string("preset", "standard"));
  TrainConfig c;
  if (preset == "standard") {
    c = standard();
  } else if (preset == "variant") {
    c = variant();
  } else {
    throw ConfigError("train config: unknown preset `" + preset + "`");
  }
  c.loss = parse_loss_mode(cfg.get_string("loss", to_string(c.loss)));
  c.mixed_audio = parse_modality_loss(cfg.get_string("mixed_audio", to_string(c.mixed_audio)));
  c.mixed_visual = parse_modality_loss(cfg.get_string("mixed_visual", to_string(c.mixed_visual)));
  const auto epochs = cfg.get_int("epochs", c.epochs);
  if (epochs < 0 || epochs > 1000000) throw ConfigError("train config: epochs out of range");
  c.epochs = static_cast<int>(epochs);
  c.schedule.total_epochs = c.epochs;
  c.batch_size = cfg.get_uint("batch_size", c.batch_size);
  c.schedule.peak_lr = cfg.get_double("peak_lr", c.schedule.peak_lr);
  c.schedule.min_lr = cfg.get_double("min_lr", c.schedule.min_lr);
  c.schedule.warmup_epochs = static_cast<int>(cfg.get_int("warmup_epochs", c.schedule.warmup_epochs));
  c.optimizer.beta1 = cfg.get_double("beta1", c.optimizer.beta1);
  c.optimizer.beta2 = cfg.get_double("beta2", c.optimizer.beta2);
  c.optimizer.eps = cfg.get_double("adam_eps", c.optimizer.eps);
  c.optimizer.weight_decay = cfg.get_double("weight_decay", c.optimizer.weight_decay);
  c.grad_clip = cfg.get_double("grad_clip", c.grad_clip);
  c.seed = cfg.get_uint("seed", c.seed);
  c.smoothing = cfg.get_double("smoothing", c.smoothing);
  c.reduction = parse_reduction(cfg.get_string("reduction", to_string(c.reduction)));
  c.jobs = cfg.get_uint("jobs", c.jobs);
  c.validate();
  return c;
}

std::string TrainConfig::to_config_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "loss = " << to_string(loss) << "\n"
     << "mixed_audio = " << to_string(mixed_audio) << "\n"
     << "mixed_visual = " << to_string(mixed_visual) << "\n"
     << "epochs = " << epochs << "\n"
     << "batch_size = " << batch_size << "\n"
     << "peak_lr = " << schedule.peak_lr << "\n"
     << "min_lr = " << schedule.min_lr << "\n"
     << "warmup_epochs = " << schedule.warmup_epochs << "\n"
     << "beta1 = " << optimizer.beta1 << "\n"
     << "beta2 = " << optimizer.beta2 << "\n"
     << "adam_eps = " << optimizer.eps << "\n"
     << "weight_decay = " << optimizer.weight_decay << "\n"
     << "grad_clip = " << grad_clip << "\n"
     << "seed = " << seed << "\n"
     << "smoothing = " << smoothing << "\n"
     << "reduction = " << to_string(reduction) << "\n"
     << "jobs = " << jobs << "\n";
  return os.str();
}

// --- report -----------------------------------------------------------------

std::string TrainReport::to_json(bool include_timing) const {
  json j;
  j["loss_mode"] = loss_mode;
  j["seed"] = seed;
  j["selection"] = selection;
  j["best_epoch"] = best_epoch;
  json epochs_json = json::array();
  for (const auto& e : epochs) {
    json row{{"epoch", e.epoch}, {"lr", e.lr}, {"loss", e.loss}, {"components", e.components},
             {"mean_grad_norm", e.mean_grad_norm}};
    if (e.val_type_av) row["val_segment_type_av"] = *e.val_type_av;
    epochs_json.push_back(std::move(row));
  }
  j["epochs"] = std::move(epochs_json);
  if (final_validation) j["final_validation"] = json::parse(report_to_json(*final_validation));
  if (include_timing) j["wall_seconds"] = wall_seconds;
  return j.dump(2);
}

// --- loss dispatch ----------------------------------------------------------

LossParts compute_loss(const ForwardOutput& out, const TrainConfig& config, const VideoSample& sample,
                       const DenseLabels* dense, const KdTargets* kd) {
  LossContext ctx{&sample.weak, dense, kd, config.smoothing, config.reduction};
  LossParts parts;
  auto add = [&](const std::string& name, const Tensor& term) {
    parts.components[name] = term.item();
    parts.total = parts.total.defined() ? parts.total + term : term;
  };
  switch (config.loss) {
    case LossMode::Base:
      add("video", loss_video(out, sample.weak));
      add("audio", modality_term(out, 0, ModalityLoss::Guided, ctx));
      add("visual", modality_term(out, 1, ModalityLoss::Guided, ctx));
      break;
    case LossMode::Kd:
      add("video", loss_video(out, sample.weak));
      add("audio", modality_term(out, 0, ModalityLoss::Kd, ctx));
      add("visual", modality_term(out, 1, ModalityLoss::Kd, ctx));
      break;
    case LossMode::Valor:
      add("video", loss_video(out, sample.weak));
      add("audio", modality_term(out, 0, ModalityLoss::Valor, ctx));
      add("visual", modality_term(out, 1, ModalityLoss::Valor, ctx));
      break;
    case LossMode::Mixed:
      add("video", loss_video(out, sample.weak));
      add("audio", modality_term(out, 0, config.mixed_audio, ctx));
      add("visual", modality_term(out, 1, config.mixed_visual, ctx));
      break;
    case LossMode::AveWeak: {
      WeakLabel target;
      if (sample.dense_gt) {
        target = ave_weak_label(*sample.dense_gt);
      } else {
        target = sample.weak;
        target.classes.push_back(1);
      }
      add("video", loss_ave(out, AveLossMode::Weak, &target, nullptr));
      break;
    }
    case LossMode::AveValor: {
      if (!dense) throw UsageError("ave-valor loss needs dense labels");
      const DenseLabels extended = extend_background(*dense);
      // Summed over t for both AVE streams, independent of config.reduction.
      add("audio", valor_term(out.probs_audio, extended.audio, TemporalReduction::Sum));
      add("visual", valor_term(out.probs_visual, extended.visual, TemporalReduction::Sum));
      break;
    }
  }
  return parts;
}

// --- loop -------------------------------------------------------------------

namespace {

void check_inputs(const ModelConfig& model, const TrainConfig& config, const TrainData& data) {
  if (!data.train) throw UsageError("train: no training corpus");
  const Corpus& train = *data.train;
  if (config.epochs > 0 && train.samples.empty()) throw UsageError("train: empty training corpus");
  if (train.num_classes() != model.num_classes) {
    throw ValidationError("train: corpus has " + std::to_string(train.num_classes()) + " classes, model " +
                          std::to_string(model.num_classes));
  }
  const bool ave_loss = config.loss == LossMode::AveWeak || config.loss == LossMode::AveValor;
  if (ave_loss != model.ave_mode) {
    throw ConfigError("train: loss " + to_string(config.loss) + (model.ave_mode ? " needs" : " does not fit") +
                      " a model " + (model.ave_mode ? "without" : "with") + " the background output");
  }
  if (config.needs_dense() && data.dense.size() != train.samples.size()) {
    throw UsageError("train: loss " + to_string(config.loss) + " needs dense labels for every training video");
  }
  if (config.needs_kd() && data.kd.size() != train.samples.size()) {
    throw UsageError("train: loss " + to_string(config.loss) + " needs teacher targets for every training video");
  }
  if (data.validation && !data.validation->has_dense_gt() && !data.validation->samples.empty()) {
    throw UsageError("train: validation corpus lacks dense ground truth");
  }
}

struct Accumulated {
  double loss = 0.0;
  std::map<std::string, double> components;
};

/// Forward + backward for samples[first, last) of `order`, gradients
/// accumulating into `params`; each loss is scaled by `weight`.
void run_slice(ModelParams& params, const TrainConfig& config, const TrainData& data,
               const std::vector<std::size_t>& order, std::size_t first, std::size_t last, double weight,
               std::mt19937_64& dropout_rng, Accumulated& acc, int epoch, std::size_t step) {
  const ForwardOptions opts{true, &dropout_rng};
  for (std::size_t k = first; k < last; ++k) {
    const std::size_t i = order[k];
    const VideoSample& sample = data.train->samples[i];
    const ForwardOutput out = forward(params, sample, opts);
    const LossParts parts = compute_loss(out, config, sample, data.dense.empty() ? nullptr : &data.dense[i],
                                         data.kd.empty() ? nullptr : &data.kd[i]);
    const double value = parts.total.item();
    if (!std::isfinite(value)) {
      throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                          ", video " + sample.video_id);
    }
    backward(parts.total * weight);
    acc.loss += value;
    for (const auto& [name, v] : parts.components) acc.components[name] += v;
  }
}

}  // namespace

TrainResult train(const ModelConfig& model, const TrainConfig& config, const TrainData& data,
                  const EpochCallback& on_epoch) {
  const auto started = std::chrono::steady_clock::now();
  config.validate();
  model.validate();
  check_inputs(model, config, data);

  TrainResult result{init_model(model, config.seed), {}};
  TrainReport& report = result.report;
  report.loss_mode = to_string(config.loss);
  if (config.loss == LossMode::Mixed) {
    report.loss_mode += ":" + to_string(config.mixed_audio) + "," + to_string(config.mixed_visual);
  }
  report.seed = config.seed;

  ModelParams& params = result.params;
  std::vector<Tensor> tensors = params.tensors();
  OptimizerState state = make_optimizer_state(tensors, config.optimizer);
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  const std::size_t n = data.train->samples.size();
  const std::size_t jobs = std::max<std::size_t>(1, std::min(config.jobs, config.batch_size));
  std::vector<ModelParams> workers;
  std::vector<std::vector<Tensor>> worker_tensors;
  if (jobs > 1) {
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.push_back(params.clone());
      worker_tensors.push_back(workers.back().tensors());
    }
  }

  std::optional<ModelParams> best;
  double best_score = -1.0;
  std::vector<std::size_t> order(n);
  std::size_t global_step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    EpochRecord record;
    record.epoch = epoch;
    record.lr = lr_at(config.schedule, epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    Accumulated epoch_acc;
    double norm_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++global_step, ++steps) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const double weight = 1.0 / static_cast<double>(stop - start);
      params.zero_grad();
      if (jobs == 1) {
        std::mt19937_64 dropout_rng(config.seed + 0x5851f42d4c957f2dULL * (global_step + 1));
        run_slice(params, config, data, order, start, stop, weight, dropout_rng, epoch_acc, epoch, steps);
      } else {
        // Contiguous slices per worker; gradients reduced in worker order.
        std::vector<Accumulated> accs(jobs);
        std::vector<std::exception_ptr> errors(jobs);
        std::vector<std::thread> threads;
        const std::size_t count = stop - start;
        for (std::size_t w = 0; w < jobs; ++w) {
          const std::size_t lo = start + count * w / jobs, hi = start + count * (w + 1) / jobs;
          threads.emplace_back([&, w, lo, hi] {
            try {
              auto dst = worker_tensors[w];
              for (std::size_t k = 0; k < dst.size(); ++k) {
                auto v = dst[k].values_mut();
                std::copy(tensors[k].values().begin(), tensors[k].values().end(), v.begin());
                dst[k].zero_grad();
              }
              std::mt19937_64 dropout_rng(config.seed + 0x5851f42d4c957f2dULL * (global_step + 1) + w);
              run_slice(workers[w], config, data, order, lo, hi, weight, dropout_rng, accs[w], epoch, steps);
            } catch (...) {
              errors[w] = std::current_exception();
            }
          });
        }
        for (auto& t : threads) t.join();
        for (auto& e : errors) {
          if (e) std::rethrow_exception(e);
        }
        for (std::size_t w = 0; w < jobs; ++w) {
          for (std::size_t k = 0; k < tensors.size(); ++k) {
            auto g = tensors[k].grad_mut();
            const auto src = worker_tensors[w][k].grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
          }
          epoch_acc.loss += accs[w].loss;
          for (const auto& [name, v] : accs[w].components) epoch_acc.components[name] += v;
        }
      }
      norm_sum += global_grad_norm(tensors);
      clip_global_norm(tensors, config.grad_clip);
      adamw_step(tensors, state, record.lr);
    }

    record.loss = n ? epoch_acc.loss / static_cast<double>(n) : 0.0;
    for (const auto& [name, v] : epoch_acc.components) record.components[name] = v / static_cast<double>(n);
    record.mean_grad_norm = steps ? norm_sum / static_cast<double>(steps) : 0.0;

    if (data.validation && !data.validation->samples.empty()) {
      EvaluateOptions eval;
      eval.predict.jobs = config.jobs;
      const MetricsReport val = evaluate_model(params, *data.validation, eval);
      record.val_type_av = params.config.ave_mode && val.ave_accuracy ? 100.0 * *val.ave_accuracy
                                                                       : val.segment.type_av;
      if (*record.val_type_av > best_score) {
        best_score = *record.val_type_av;
        best = params.clone();
        report.best_epoch = epoch;
      }
    }
    report.epochs.push_back(record);
    if (on_epoch) on_epoch(record, params);
  }

  if (best) {
    result.params = std::move(*best);
    report.selection = params.config.ave_mode ? "best-validation-ave-accuracy" : "best-validation-segment-type-av";
  }
  if (data.validation && !data.validation->samples.empty()) {
    EvaluateOptions eval;
    eval.predict.jobs = config.jobs;
    eval.nonalignment = true;
    report.final_validation = evaluate_model(result.params, *data.validation, eval);
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace avp
