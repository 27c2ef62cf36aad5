#include "avp/losses.hpp"

#include "avp/errors.hpp"
#include "avp/tensor_io.hpp"

namespace avp {

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::Base: return "base";
    case LossMode::Kd: return "kd";
    case LossMode::Valor: return "valor";
    case LossMode::Mixed: return "mixed";
    case LossMode::AveWeak: return "ave-weak";
    case LossMode::AveValor: return "ave-valor";
  }
  return "?";
}

std::string to_string(ModalityLoss mode) {
  switch (mode) {
    case ModalityLoss::Guided: return "guided";
    case ModalityLoss::Valor: return "valor";
    case ModalityLoss::Kd: return "kd";
  }
  return "?";
}

std::string to_string(TemporalReduction r) { return r == TemporalReduction::Sum ? "sum" : "mean"; }

LossMode parse_loss_mode(const std::string& text) {
  if (text == "base") return LossMode::Base;
  if (text == "kd") return LossMode::Kd;
  if (text == "valor") return LossMode::Valor;
  if (text == "mixed") return LossMode::Mixed;
  if (text == "ave-weak") return LossMode::AveWeak;
  if (text == "ave-valor") return LossMode::AveValor;
  throw ConfigError("unknown loss mode `" + text + "` (base, kd, valor, mixed, ave-weak, ave-valor)");
}

ModalityLoss parse_modality_loss(const std::string& text) {
  if (text == "guided" || text == "base") return ModalityLoss::Guided;
  if (text == "valor") return ModalityLoss::Valor;
  if (text == "kd") return ModalityLoss::Kd;
  throw ConfigError("unknown modality loss `" + text + "` (guided, valor, kd)");
}

TemporalReduction parse_reduction(const std::string& text) {
  if (text == "sum") return TemporalReduction::Sum;
  if (text == "mean") return TemporalReduction::Mean;
  throw ConfigError("unknown temporal reduction `" + text + "` (sum, mean)");
}

Tensor label_tensor(const BinaryMatrix& labels) {
  std::vector<double> values(labels.data().begin(), labels.data().end());
  return Tensor({labels.rows(), labels.cols()}, std::move(values));
}

Tensor label_tensor(const WeakLabel& weak) {
  std::vector<double> values(weak.classes.begin(), weak.classes.end());
  return Tensor({weak.size()}, std::move(values));
}

namespace {

void check_classes(const Tensor& t, std::size_t classes, const char* what) {
  if (t.shape().back() != classes) {
    throw DimensionError(std::string(what) + ": model outputs " + std::to_string(t.shape().back()) +
                         " classes, labels have " + std::to_string(classes));
  }
}

Tensor reduce_time(const Tensor& per_sum, std::size_t segments, TemporalReduction reduction) {
  return reduction == TemporalReduction::Sum ? per_sum : per_sum * (1.0 / static_cast<double>(segments));
}

}  // namespace

Tensor loss_video(const ForwardOutput& out, const WeakLabel& weak) {
  check_classes(out.video_prob, weak.size(), "loss_video");
  return bce(out.video_prob, label_tensor(weak));
}

Tensor guided_term(const Tensor& modality_prob, const std::vector<double>& smoothed) {
  check_classes(modality_prob, smoothed.size(), "guided_term");
  return bce(modality_prob, Tensor({smoothed.size()}, smoothed));
}

Tensor valor_term(const Tensor& segment_probs, const BinaryMatrix& labels, TemporalReduction reduction) {
  if (segment_probs.dim(0) != labels.rows() || segment_probs.dim(1) != labels.cols()) {
    throw DimensionError("valor_term: predictions " + shape_str(segment_probs.shape()) + " vs labels " +
                         std::to_string(labels.rows()) + "x" + std::to_string(labels.cols()));
  }
  // bce is the mean over all T x C cells, i.e. the mean over t of per-segment BCE.
  const Tensor mean_over_t = bce(segment_probs, label_tensor(labels));
  return reduction == TemporalReduction::Mean ? mean_over_t : mean_over_t * static_cast<double>(labels.rows());
}

Tensor kd_term(const Tensor& segment_logits, const RealMatrix& teacher_probs, TemporalReduction reduction) {
  if (segment_logits.dim(0) != teacher_probs.rows() || segment_logits.dim(1) != teacher_probs.cols()) {
    throw DimensionError("kd_term: student " + shape_str(segment_logits.shape()) + " vs teacher " +
                         std::to_string(teacher_probs.rows()) + "x" + std::to_string(teacher_probs.cols()));
  }
  const Tensor student = softmax(segment_logits, 1);
  return reduce_time(kl_div(to_tensor(teacher_probs), student), teacher_probs.rows(), reduction);
}

Tensor loss_base(const ForwardOutput& out, const WeakLabel& weak, double epsilon) {
  const auto smoothed = smooth_labels(weak, epsilon);
  return loss_video(out, weak) + guided_term(out.modality_prob_audio, smoothed) +
         guided_term(out.modality_prob_visual, smoothed);
}

Tensor loss_kd(const ForwardOutput& out, const WeakLabel& weak, const KdTargets& targets,
               TemporalReduction reduction) {
  return loss_video(out, weak) + kd_term(out.logits_audio, targets.audio, reduction) +
         kd_term(out.logits_visual, targets.visual, reduction);
}

Tensor loss_valor(const ForwardOutput& out, const DenseLabels& dense, const WeakLabel& weak,
                  TemporalReduction reduction) {
  return loss_video(out, weak) + valor_term(out.probs_audio, dense.audio, reduction) +
         valor_term(out.probs_visual, dense.visual, reduction);
}

Tensor modality_term(const ForwardOutput& out, int modality, ModalityLoss kind, const LossContext& ctx) {
  const bool audio = modality == 0;
  switch (kind) {
    case ModalityLoss::Guided:
      if (!ctx.weak) throw UsageError("guided loss needs the weak label");
      return guided_term(audio ? out.modality_prob_audio : out.modality_prob_visual,
                         smooth_labels(*ctx.weak, ctx.epsilon));
    case ModalityLoss::Valor:
      if (!ctx.dense) throw UsageError("valor loss needs dense labels");
      return valor_term(audio ? out.probs_audio : out.probs_visual, audio ? ctx.dense->audio : ctx.dense->visual,
                        ctx.reduction);
    case ModalityLoss::Kd:
      if (!ctx.kd) throw UsageError("kd loss needs teacher targets");
      return kd_term(audio ? out.logits_audio : out.logits_visual, audio ? ctx.kd->audio : ctx.kd->visual,
                     ctx.reduction);
  }
  throw UsageError("unknown modality loss");
}

Tensor loss_mixed(const ForwardOutput& out, ModalityLoss audio, ModalityLoss visual, const LossContext& ctx) {
  if (!ctx.weak) throw UsageError("loss_mixed needs the weak label");
  return loss_video(out, *ctx.weak) + modality_term(out, 0, audio, ctx) + modality_term(out, 1, visual, ctx);
}

Tensor loss_ave(const ForwardOutput& out, AveLossMode mode, const WeakLabel* weak_bg, const DenseLabels* dense_bg) {
  if (mode == AveLossMode::Weak) {
    if (!weak_bg) throw UsageError("loss_ave weak mode needs a video-level label");
    check_classes(out.logits_audio, weak_bg->size(), "loss_ave");
    const double scale = 1.0 / (2.0 * static_cast<double>(out.logits_audio.dim(0)));
    const Tensor z = (sum_rows(out.logits_audio) + sum_rows(out.logits_visual)) * scale;
    return bce(sigmoid(z), label_tensor(*weak_bg));
  }
  if (!dense_bg) throw UsageError("loss_ave valor mode needs dense labels with a background column");
  check_classes(out.logits_audio, dense_bg->classes(), "loss_ave");
  return valor_term(out.probs_audio, dense_bg->audio, TemporalReduction::Sum) +
         valor_term(out.probs_visual, dense_bg->visual, TemporalReduction::Sum);
}

WeakLabel ave_weak_label(const DenseLabels& dense) { return weak_from_dense(extend_background(dense)); }

}  // namespace avp
