#include "avp/metrics.hpp"

#include <algorithm>
#include <array>
#include <iomanip>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "avp/errors.hpp"

namespace avp {

using nlohmann::json;

BinaryMatrix binarize(const RealMatrix& probs, double threshold) {
  BinaryMatrix out(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < probs.size(); ++i) out.data()[i] = probs.data()[i] > threshold ? 1 : 0;
  return out;
}

std::vector<EventSpan> extract_events(const BinaryMatrix& labels) {
  std::vector<EventSpan> spans;
  for (std::size_t c = 0; c < labels.cols(); ++c) {
    std::size_t t = 0;
    while (t < labels.rows()) {
      if (!labels(t, c)) {
        ++t;
        continue;
      }
      const std::size_t start = t;
      while (t < labels.rows() && labels(t, c)) ++t;
      spans.push_back({c, start, t - 1});
    }
  }
  return spans;
}

double span_iou(const EventSpan& a, const EventSpan& b) {
  if (a.cls != b.cls) return 0.0;
  const std::size_t lo = std::max(a.start, b.start);
  const std::size_t hi = std::min(a.end, b.end);
  if (lo > hi) return 0.0;
  const double inter = static_cast<double>(hi - lo + 1);
  const double uni = static_cast<double>(a.length() + b.length()) - inter;
  return inter / uni;
}

double MatchCounts::f_score() const {
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

MatchCounts& MatchCounts::operator+=(const MatchCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

namespace {

void check_same_shape(const BinaryMatrix& a, const BinaryMatrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": shapes " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " and " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + " differ");
  }
}

}  // namespace

MatchCounts segment_counts(const BinaryMatrix& pred, const BinaryMatrix& gt) {
  check_same_shape(pred, gt, "segment_f");
  MatchCounts m;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.data()[i] != 0, g = gt.data()[i] != 0;
    m.tp += p && g;
    m.fp += p && !g;
    m.fn += !p && g;
  }
  return m;
}

double segment_f(const BinaryMatrix& pred, const BinaryMatrix& gt) { return segment_counts(pred, gt).f_score(); }

MatchCounts event_counts(std::span<const EventSpan> pred, std::span<const EventSpan> gt, double iou_min) {
  struct Pair {
    double iou;
    std::size_t p, g;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = 0; j < gt.size(); ++j) {
      const double iou = span_iou(pred[i], gt[j]);
      if (iou >= iou_min && iou > 0.0) pairs.push_back({iou, i, j});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return std::tie(b.iou, a.p, a.g) < std::tie(a.iou, b.p, b.g);
  });
  std::vector<bool> pred_used(pred.size(), false), gt_used(gt.size(), false);
  MatchCounts m;
  for (const auto& pr : pairs) {
    if (pred_used[pr.p] || gt_used[pr.g]) continue;
    pred_used[pr.p] = gt_used[pr.g] = true;
    ++m.tp;
  }
  m.fp = pred.size() - m.tp;
  m.fn = gt.size() - m.tp;
  return m;
}

double event_f(std::span<const EventSpan> pred, std::span<const EventSpan> gt, double iou_min) {
  return event_counts(pred, gt, iou_min).f_score();
}

BinaryMatrix logical_and(const BinaryMatrix& a, const BinaryMatrix& b) {
  check_same_shape(a, b, "logical_and");
  BinaryMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] && b.data()[i];
  return out;
}

BinaryMatrix logical_or(const BinaryMatrix& a, const BinaryMatrix& b) {
  check_same_shape(a, b, "logical_or");
  BinaryMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] || b.data()[i];
  return out;
}

std::string to_string(Aggregation a) { return a == Aggregation::Macro ? "macro" : "micro"; }

double NonAlignmentReport::success_rate() const {
  return nonaligned_events == 0 ? 0.0 : static_cast<double>(success_count) / static_cast<double>(nonaligned_events);
}

namespace {

// Order of the four modality views used throughout evaluation.
enum View { kAudio = 0, kVisual = 1, kAv = 2, kEventAv = 3, kViews = 4 };

std::array<BinaryMatrix, kViews> views(const DenseLabels& d) {
  return {d.audio, d.visual, logical_and(d.audio, d.visual), logical_or(d.audio, d.visual)};
}

/// Per-class event counts, indexing spans by class.
std::vector<MatchCounts> event_counts_by_class(const std::vector<EventSpan>& pred, const std::vector<EventSpan>& gt,
                                               std::size_t classes) {
  std::vector<std::vector<EventSpan>> p(classes), g(classes);
  for (const auto& s : pred) p[s.cls].push_back(s);
  for (const auto& s : gt) g[s.cls].push_back(s);
  std::vector<MatchCounts> out(classes);
  for (std::size_t c = 0; c < classes; ++c) out[c] = event_counts(p[c], g[c]);
  return out;
}

LevelScores finish_level(const std::array<double, kViews>& f) {
  LevelScores s;
  s.audio = 100.0 * f[kAudio];
  s.visual = 100.0 * f[kVisual];
  s.av = 100.0 * f[kAv];
  s.event_av = 100.0 * f[kEventAv];
  s.type_av = (s.audio + s.visual + s.av) / 3.0;
  return s;
}

void check_corpus(std::span<const DenseLabels> preds, std::span<const DenseLabels> gts) {
  if (preds.size() != gts.size()) {
    throw ValidationError("evaluation: " + std::to_string(preds.size()) + " predictions for " +
                          std::to_string(gts.size()) + " ground-truth videos");
  }
  for (std::size_t i = 0; i < preds.size(); ++i) {
    check_same_shape(preds[i].audio, gts[i].audio, "evaluation (audio)");
    check_same_shape(preds[i].visual, gts[i].visual, "evaluation (visual)");
  }
}

}  // namespace

MetricsReport evaluate_corpus(std::span<const DenseLabels> preds, std::span<const DenseLabels> gts,
                              Aggregation aggregation) {
  check_corpus(preds, gts);
  MetricsReport report;
  report.aggregation = aggregation;
  report.videos = preds.size();
  const std::size_t C = gts.empty() ? 0 : gts.front().classes();

  std::array<double, kViews> seg_sum{}, evt_sum{};
  std::array<MatchCounts, kViews> seg_total{}, evt_total{};
  std::array<std::vector<MatchCounts>, kViews> seg_class, evt_class;
  for (auto& v : seg_class) v.assign(C, {});
  for (auto& v : evt_class) v.assign(C, {});

  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (gts[i].classes() != C) throw ValidationError("evaluation: class count differs between videos");
    const auto pv = views(preds[i]);
    const auto gv = views(gts[i]);
    for (int v = 0; v < kViews; ++v) {
      const MatchCounts seg = segment_counts(pv[v], gv[v]);
      const auto by_class = event_counts_by_class(extract_events(pv[v]), extract_events(gv[v]), C);
      MatchCounts evt;
      for (std::size_t c = 0; c < C; ++c) {
        evt += by_class[c];
        evt_class[v][c] += by_class[c];
        for (std::size_t t = 0; t < pv[v].rows(); ++t) {
          const bool p = pv[v](t, c), g = gv[v](t, c);
          seg_class[v][c].tp += p && g;
          seg_class[v][c].fp += p && !g;
          seg_class[v][c].fn += !p && g;
        }
      }
      seg_sum[v] += seg.f_score();
      evt_sum[v] += evt.f_score();
      seg_total[v] += seg;
      evt_total[v] += evt;
    }
  }

  std::array<double, kViews> seg_f{}, evt_f{};
  for (int v = 0; v < kViews; ++v) {
    if (aggregation == Aggregation::Macro) {
      const double n = preds.empty() ? 1.0 : static_cast<double>(preds.size());
      seg_f[v] = preds.empty() ? 1.0 : seg_sum[v] / n;
      evt_f[v] = preds.empty() ? 1.0 : evt_sum[v] / n;
    } else {
      seg_f[v] = seg_total[v].f_score();
      evt_f[v] = evt_total[v].f_score();
    }
  }
  report.segment = finish_level(seg_f);
  report.event = finish_level(evt_f);

  auto percent = [](const std::vector<MatchCounts>& counts) {
    std::vector<double> out;
    for (const auto& m : counts) out.push_back(100.0 * m.f_score());
    return out;
  };
  report.per_class.segment_audio = percent(seg_class[kAudio]);
  report.per_class.segment_visual = percent(seg_class[kVisual]);
  report.per_class.segment_av = percent(seg_class[kAv]);
  report.per_class.event_audio = percent(evt_class[kAudio]);
  report.per_class.event_visual = percent(evt_class[kVisual]);
  report.per_class.event_av = percent(evt_class[kAv]);
  return report;
}

LevelScores label_fidelity(std::span<const DenseLabels> pseudo, std::span<const DenseLabels> gt,
                           Aggregation aggregation) {
  return evaluate_corpus(pseudo, gt, aggregation).segment;
}

NonAlignmentReport nonalignment_report(std::span<const DenseLabels> preds, std::span<const DenseLabels> gts) {
  check_corpus(preds, gts);
  NonAlignmentReport r;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const DenseLabels& g = gts[i];
    const DenseLabels& p = preds[i];
    for (std::size_t t = 0; t < g.segments(); ++t) {
      for (std::size_t c = 0; c < g.classes(); ++c) {
        const bool ga = g.audio(t, c), gv = g.visual(t, c);
        if (!ga && !gv) continue;
        ++r.total_events;
        const bool pa = p.audio(t, c), pv = p.visual(t, c);
        if (ga != gv) {
          ++r.nonaligned_events;
          if (pa == ga && pv == gv) ++r.success_count;
        } else if (pa && pv) {
          ++r.aligned_success;
        }
      }
    }
  }
  return r;
}

std::vector<std::size_t> ave_predict(const RealMatrix& prob_audio, const RealMatrix& prob_visual) {
  if (prob_audio.rows() != prob_visual.rows() || prob_audio.cols() != prob_visual.cols()) {
    throw DimensionError("ave_predict: audio and visual probabilities differ in shape");
  }
  if (prob_audio.cols() < 2) throw DimensionError("ave_predict: need at least one class plus background");
  const std::size_t background = prob_audio.cols() - 1;
  std::vector<std::size_t> out(prob_audio.rows(), background);
  for (std::size_t t = 0; t < prob_audio.rows(); ++t) {
    double best = -1.0;
    for (std::size_t c = 0; c < background; ++c) {
      const double pa = prob_audio(t, c), pv = prob_visual(t, c);
      if (pa > 0.5 && pv > 0.5 && std::min(pa, pv) > best) {
        best = std::min(pa, pv);
        out[t] = c;
      }
    }
  }
  return out;
}

std::vector<std::size_t> ave_segment_classes(const DenseLabels& gt) {
  const std::size_t C = gt.classes();
  std::vector<std::size_t> out(gt.segments(), C);
  for (std::size_t t = 0; t < gt.segments(); ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      if (gt.audio(t, c) && gt.visual(t, c)) {
        out[t] = c;
        break;
      }
    }
  }
  return out;
}

double ave_accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> gt) {
  if (pred.size() != gt.size()) throw DimensionError("ave_accuracy: length mismatch");
  if (pred.empty()) throw UsageError("ave_accuracy: no segments");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == gt[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

// --- reports ----------------------------------------------------------------

namespace {

json level_json(const LevelScores& s) {
  return json{{"A", s.audio}, {"V", s.visual}, {"AV", s.av}, {"Type@AV", s.type_av}, {"Event@AV", s.event_av}};
}

LevelScores level_from_json(const json& j) {
  return {j.at("A").get<double>(), j.at("V").get<double>(), j.at("AV").get<double>(), j.at("Type@AV").get<double>(),
          j.at("Event@AV").get<double>()};
}

}  // namespace

std::string report_to_json(const MetricsReport& report, int indent) {
  json j;
  j["aggregation"] = to_string(report.aggregation);
  j["videos"] = report.videos;
  j["segment"] = level_json(report.segment);
  j["event"] = level_json(report.event);
  j["per_class"] = {{"segment_A", report.per_class.segment_audio}, {"segment_V", report.per_class.segment_visual},
                    {"segment_AV", report.per_class.segment_av},   {"event_A", report.per_class.event_audio},
                    {"event_V", report.per_class.event_visual},    {"event_AV", report.per_class.event_av}};
  if (report.ave_accuracy) j["ave_accuracy"] = *report.ave_accuracy;
  if (report.nonalignment) {
    const auto& n = *report.nonalignment;
    j["nonalignment"] = {{"total_events", n.total_events},
                         {"nonaligned_events", n.nonaligned_events},
                         {"success_count", n.success_count},
                         {"aligned_success", n.aligned_success},
                         {"success_rate", n.success_rate()}};
  }
  return j.dump(indent);
}

MetricsReport report_from_json(const std::string& text) {
  MetricsReport r;
  try {
    const json j = json::parse(text);
    const auto agg = j.at("aggregation").get<std::string>();
    if (agg != "macro" && agg != "micro") throw ParseError("report: unknown aggregation `" + agg + "`");
    r.aggregation = agg == "macro" ? Aggregation::Macro : Aggregation::Micro;
    r.videos = j.at("videos").get<std::size_t>();
    r.segment = level_from_json(j.at("segment"));
    r.event = level_from_json(j.at("event"));
    const auto& pc = j.at("per_class");
    r.per_class.segment_audio = pc.at("segment_A").get<std::vector<double>>();
    r.per_class.segment_visual = pc.at("segment_V").get<std::vector<double>>();
    r.per_class.segment_av = pc.at("segment_AV").get<std::vector<double>>();
    r.per_class.event_audio = pc.at("event_A").get<std::vector<double>>();
    r.per_class.event_visual = pc.at("event_V").get<std::vector<double>>();
    r.per_class.event_av = pc.at("event_AV").get<std::vector<double>>();
    if (j.contains("ave_accuracy")) r.ave_accuracy = j.at("ave_accuracy").get<double>();
    if (j.contains("nonalignment")) {
      const auto& n = j.at("nonalignment");
      r.nonalignment = NonAlignmentReport{n.at("total_events").get<std::size_t>(),
                                          n.at("nonaligned_events").get<std::size_t>(),
                                          n.at("success_count").get<std::size_t>(),
                                          n.at("aligned_success").get<std::size_t>()};
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
  return r;
}

std::string report_to_text(const MetricsReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "videos: " << report.videos << "  aggregation: " << to_string(report.aggregation) << "\n";
  os << std::left << std::setw(9) << "level" << std::right;
  for (const char* h : {"A", "V", "AV", "Type@AV", "Event@AV"}) os << std::setw(10) << h;
  os << "\n";
  auto row = [&](const char* name, const LevelScores& s) {
    os << std::left << std::setw(9) << name << std::right << std::setw(10) << s.audio << std::setw(10) << s.visual
       << std::setw(10) << s.av << std::setw(10) << s.type_av << std::setw(10) << s.event_av << "\n";
  };
  row("segment", report.segment);
  row("event", report.event);
  if (report.ave_accuracy) os << "AVE accuracy: " << 100.0 * *report.ave_accuracy << "\n";
  if (report.nonalignment) {
    const auto& n = *report.nonalignment;
    os << "non-aligned events: " << n.nonaligned_events << " of " << n.total_events
       << ", correctly parsed: " << n.success_count << " (" << 100.0 * n.success_rate() << "%)\n";
  }
  return os.str();
}

std::string per_class_csv(const MetricsReport& report, std::span<const std::string> class_names) {
  const auto& pc = report.per_class;
  if (pc.segment_audio.size() != class_names.size()) {
    throw ValidationError("per_class_csv: " + std::to_string(class_names.size()) + " class names for " +
                          std::to_string(pc.segment_audio.size()) + " classes");
  }
  std::ostringstream os;
  os << std::setprecision(10);
  os << "modality,class,segment_f,event_f\n";
  auto block = [&](const char* tag, const std::vector<double>& seg, const std::vector<double>& evt) {
    for (std::size_t c = 0; c < seg.size(); ++c) os << tag << ',' << class_names[c] << ',' << seg[c] << ',' << evt[c] << '\n';
  };
  block("A", pc.segment_audio, pc.event_audio);
  block("V", pc.segment_visual, pc.event_visual);
  block("AV", pc.segment_av, pc.event_av);
  return os.str();
}

}  // namespace avp
