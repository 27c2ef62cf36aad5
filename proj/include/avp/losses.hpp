#pragma once

// Training objectives over a ForwardOutput. Every loss returns a scalar
// tensor wired into the autodiff graph.

#include <string>
#include <vector>

#include "avp/han.hpp"
#include "avp/label_forge.hpp"
#include "avp/labels.hpp"

namespace avp {

enum class TemporalReduction { Sum, Mean };

/// How one modality's stream is supervised.
enum class ModalityLoss { Guided, Valor, Kd };

enum class LossMode { Base, Kd, Valor, Mixed, AveWeak, AveValor };

std::string to_string(LossMode mode);
std::string to_string(ModalityLoss mode);
std::string to_string(TemporalReduction r);
LossMode parse_loss_mode(const std::string& text);
ModalityLoss parse_modality_loss(const std::string& text);
TemporalReduction parse_reduction(const std::string& text);

/// Converts labels to a constant (non-differentiable) tensor.
Tensor label_tensor(const BinaryMatrix& labels);
Tensor label_tensor(const WeakLabel& weak);

/// BCE(p, y) on the video-level prediction with the unsmoothed label.
Tensor loss_video(const ForwardOutput& out, const WeakLabel& weak);
/// BCE(p^m, smoothed y).
Tensor guided_term(const Tensor& modality_prob, const std::vector<double>& smoothed);
/// BCE(p^m_t, y^m_t) reduced over t by sum or mean.
Tensor valor_term(const Tensor& segment_probs, const BinaryMatrix& labels, TemporalReduction reduction);
/// KL(q_teacher_t || softmax_c(z^m_t)) reduced over t by sum or mean.
Tensor kd_term(const Tensor& segment_logits, const RealMatrix& teacher_probs, TemporalReduction reduction);

/// L_video + guided(p^a) + guided(p^v).
Tensor loss_base(const ForwardOutput& out, const WeakLabel& weak, double epsilon);
/// L_video + KD audio (audio teacher) + KD visual (visual teacher), each summed over t.
Tensor loss_kd(const ForwardOutput& out, const WeakLabel& weak, const KdTargets& targets,
               TemporalReduction reduction = TemporalReduction::Sum);
/// L_video + dense BCE for each modality.
Tensor loss_valor(const ForwardOutput& out, const DenseLabels& dense, const WeakLabel& weak,
                  TemporalReduction reduction = TemporalReduction::Mean);

/// Inputs a per-modality loss may need; unused pointers may be null.
struct LossContext {
  const WeakLabel* weak = nullptr;
  const DenseLabels* dense = nullptr;
  const KdTargets* kd = nullptr;
  double epsilon = 0.1;
  TemporalReduction reduction = TemporalReduction::Mean;
};

/// Loss for one modality stream (0 = audio, 1 = visual).
Tensor modality_term(const ForwardOutput& out, int modality, ModalityLoss kind, const LossContext& ctx);

/// L_video + one chosen term per modality.
Tensor loss_mixed(const ForwardOutput& out, ModalityLoss audio, ModalityLoss visual, const LossContext& ctx);

enum class AveLossMode { Weak, Valor };

/// Weak: BCE(sigmoid(mean over t and m of z^m_t), y) with y over C + 1 classes.
/// Valor: per-segment BCE(sigmoid(z^m_t), y^m_t) summed over t for both
/// modalities, labels carrying the background column.
Tensor loss_ave(const ForwardOutput& out, AveLossMode mode, const WeakLabel* weak_bg, const DenseLabels* dense_bg);

/// Video-level AVE target: the maximum over segments of the background-extended labels.
WeakLabel ave_weak_label(const DenseLabels& dense);

}  // namespace avp
