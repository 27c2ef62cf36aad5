// Acceptance checks 1-11. Each prints one PASS/FAIL line; the exit status is
// nonzero when any check fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "avp/corpus.hpp"
#include "avp/evaluation.hpp"
#include "avp/label_forge.hpp"
#include "avp/metrics.hpp"
#include "avp/training.hpp"
#include "cli.hpp"
#include "oracles/gradcheck_cases.hpp"
#include "oracles/oracles.hpp"
#include "support.hpp"

using namespace avp;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

fs::path g_workdir;

// --- 1 ----------------------------------------------------------------------

Outcome gradients() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t cases = 0;
  auto check = [&](const std::vector<oracle::GradCase>& list, const std::string& tag) {
    for (const auto& c : list) {
      const double e = oracle::gradcheck(c.loss, c.leaves);
      ++cases;
      if (e > worst || !std::isfinite(e)) {
        worst = std::isfinite(e) ? e : 1e300;
        worst_name = c.name + tag;
      }
    }
  };
  for (std::uint64_t seed : {1u, 2u, 3u}) check(oracle::primitive_cases(seed), " (primitive)");
  for (std::size_t layers : {1u, 2u})
    for (std::size_t T : {1u, 3u})
      for (bool pre : {false, true}) {
        check(oracle::model_cases(layers, T, 8, 3, layers, pre),
              " (T=" + std::to_string(T) + " layers=" + std::to_string(layers) + (pre ? " pre-norm)" : ")"));
      }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst < 1e-3 && secs < 60.0;
  o.detail = std::to_string(cases) + " cases, max rel err " + fmt("%.2e", worst) + " (" + worst_name + "), " +
             fmt("%.1f", secs) + " s";
  return o;
}

// --- 2 ----------------------------------------------------------------------

Outcome pooling() {
  std::mt19937_64 rng(2024);
  double alpha_dev = 0.0, beta_dev = 0.0, identity_dev = 0.0, oracle_dev = 0.0;
  for (int draw = 0; draw < 1000; ++draw) {
    ModelConfig c = testing_support::toy_config(draw % 3 == 0 ? 4 : 8, 1 + draw % 4, 1 + draw % 2, draw % 5 == 0);
    c.pre_norm = draw % 7 == 0;
    const ModelParams p = init_model(c, static_cast<std::uint64_t>(draw));
    const std::size_t T = 1 + static_cast<std::size_t>(rng() % 10);
    const VideoSample s = testing_support::random_sample(c, T, rng);
    const ForwardOutput out = forward(p, s);
    const oracle::Pooled ref = oracle::forward(p, oracle::to_mat(s.feats_audio), oracle::to_mat(s.feats_visual));
    const std::size_t C = c.output_classes();
    for (std::size_t k = 0; k < C; ++k) {
      double sa = 0, sv = 0, video = 0;
      for (std::size_t t = 0; t < T; ++t) {
        sa += out.temporal_att_audio.at(t, k);
        sv += out.temporal_att_visual.at(t, k);
        const double ba = out.modality_att.at(t * C + k), bv = out.modality_att.at(T * C + t * C + k);
        beta_dev = std::max(beta_dev, std::abs(ba + bv - 1.0));
        video += ba * out.temporal_att_audio.at(t, k) * out.probs_audio.at(t, k) +
                 bv * out.temporal_att_visual.at(t, k) * out.probs_visual.at(t, k);
      }
      alpha_dev = std::max({alpha_dev, std::abs(sa - 1.0), std::abs(sv - 1.0)});
      identity_dev = std::max(identity_dev, std::abs(video - out.video_prob.at(k)));
      oracle_dev = std::max({oracle_dev, std::abs(out.video_prob.at(k) - ref.video[k]),
                             std::abs(out.modality_prob_audio.at(k) - ref.modality_a[k]),
                             std::abs(out.modality_prob_visual.at(k) - ref.modality_v[k])});
    }
  }
  Outcome o;
  o.pass = alpha_dev <= 1e-5 && beta_dev <= 1e-5 && identity_dev <= 1e-6 && oracle_dev <= 1e-6;
  o.detail = "1000 forwards, |sum alpha - 1| " + fmt("%.1e", alpha_dev) + ", |sum beta - 1| " + fmt("%.1e", beta_dev) +
             ", pooling identity " + fmt("%.1e", identity_dev) + ", scalar oracle " + fmt("%.1e", oracle_dev);
  return o;
}

// --- 3 ----------------------------------------------------------------------

BinaryMatrix matrix_from_bits(std::size_t T, std::size_t C, unsigned bits) {
  BinaryMatrix m(T, C);
  for (std::size_t i = 0; i < T * C; ++i) m.data()[i] = (bits >> i) & 1u;
  return m;
}

std::vector<oracle::Span> to_spans(const std::vector<EventSpan>& e) {
  std::vector<oracle::Span> out;
  for (const auto& s : e) out.push_back({s.cls, s.start, s.end});
  return out;
}

bool same_counts(const MatchCounts& a, const oracle::Counts& b) { return a.tp == b.tp && a.fp == b.fp && a.fn == b.fn; }

struct OracleLevels {
  oracle::Counts seg[4], evt[4];  // A, V, AV (and), Event@AV (or)
};

OracleLevels oracle_levels(const DenseLabels& p, const DenseLabels& g) {
  const BinaryMatrix pm[4] = {p.audio, p.visual, oracle::band(p.audio, p.visual, true),
                              oracle::band(p.audio, p.visual, false)};
  const BinaryMatrix gm[4] = {g.audio, g.visual, oracle::band(g.audio, g.visual, true),
                              oracle::band(g.audio, g.visual, false)};
  OracleLevels o;
  for (int i = 0; i < 4; ++i) {
    o.seg[i] = oracle::segment_counts(pm[i], gm[i]);
    o.evt[i] = oracle::event_counts(oracle::runs(pm[i]), oracle::runs(gm[i]));
  }
  return o;
}

double level_gap(const LevelScores& s, const double ref[4]) {
  const double type = (ref[0] + ref[1] + ref[2]) / 3.0;
  return std::max({std::abs(s.audio - ref[0]), std::abs(s.visual - ref[1]), std::abs(s.av - ref[2]),
                   std::abs(s.type_av - type), std::abs(s.event_av - ref[3])});
}

Outcome metric_oracles() {
  std::size_t pairs = 0, mismatches = 0;
  for (std::size_t T = 1; T <= 3; ++T)
    for (std::size_t C = 1; C <= 2; ++C) {
      const unsigned n = 1u << (T * C);
      for (unsigned pb = 0; pb < n; ++pb)
        for (unsigned gb = 0; gb < n; ++gb) {
          const BinaryMatrix p = matrix_from_bits(T, C, pb), g = matrix_from_bits(T, C, gb);
          ++pairs;
          const oracle::Counts sk = oracle::segment_counts(p, g);
          const auto pe = extract_events(p), ge = extract_events(g);
          const oracle::Counts ek = oracle::event_counts(oracle::runs(p), oracle::runs(g));
          const bool ok = same_counts(segment_counts(p, g), sk) && segment_f(p, g) == sk.f() &&
                          same_counts(event_counts(pe, ge), ek) && std::abs(event_f(pe, ge) - ek.f()) < 1e-15;
          mismatches += !ok;
        }
    }

  // Full reports: per-video F averaged (macro) and pooled counts (micro).
  std::mt19937_64 rng(33);
  double report_gap = 0.0;
  for (int draw = 0; draw < 3000; ++draw) {
    const std::size_t T = 1 + rng() % 3, C = 1 + rng() % 2, V = 1 + rng() % 3;
    std::vector<DenseLabels> preds, gts;
    double macro_seg[4] = {}, macro_evt[4] = {};
    oracle::Counts pooled_seg[4], pooled_evt[4];
    for (std::size_t v = 0; v < V; ++v) {
      preds.push_back({testing_support::random_binary(T, C, rng), testing_support::random_binary(T, C, rng)});
      gts.push_back({testing_support::random_binary(T, C, rng), testing_support::random_binary(T, C, rng)});
      const OracleLevels l = oracle_levels(preds.back(), gts.back());
      for (int i = 0; i < 4; ++i) {
        macro_seg[i] += 100.0 * l.seg[i].f() / static_cast<double>(V);
        macro_evt[i] += 100.0 * l.evt[i].f() / static_cast<double>(V);
        pooled_seg[i].tp += l.seg[i].tp, pooled_seg[i].fp += l.seg[i].fp, pooled_seg[i].fn += l.seg[i].fn;
        pooled_evt[i].tp += l.evt[i].tp, pooled_evt[i].fp += l.evt[i].fp, pooled_evt[i].fn += l.evt[i].fn;
      }
    }
    double micro_seg[4], micro_evt[4];
    for (int i = 0; i < 4; ++i) {
      micro_seg[i] = 100.0 * pooled_seg[i].f();
      micro_evt[i] = 100.0 * pooled_evt[i].f();
    }
    const MetricsReport macro = evaluate_corpus(preds, gts, Aggregation::Macro);
    const MetricsReport micro = evaluate_corpus(preds, gts, Aggregation::Micro);
    report_gap = std::max({report_gap, level_gap(macro.segment, macro_seg), level_gap(macro.event, macro_evt),
                           level_gap(micro.segment, micro_seg), level_gap(micro.event, micro_evt)});
  }

  // Matching against assignment enumeration on run-derived span lists.
  std::size_t lists = 0, gaps = 0;
  std::ofstream log(g_workdir / "greedy_gaps.log");
  for (int draw = 0; lists < 20000 && draw < 200000; ++draw) {
    const std::size_t T = 2 + rng() % 11, C = 1 + rng() % 2;
    const BinaryMatrix p = testing_support::random_binary(T, C, rng, 0.3 + 0.4 * (draw % 3) / 2.0);
    const BinaryMatrix g = testing_support::random_binary(T, C, rng, 0.3 + 0.4 * (draw % 5) / 4.0);
    const auto pe = extract_events(p), ge = extract_events(g);
    if (pe.size() > 4 || ge.size() > 4) continue;
    ++lists;
    for (double iou : {0.5, 0.6, 0.75, 0.9}) {
      const std::size_t best = oracle::best_matching(to_spans(pe), to_spans(ge), iou);
      const MatchCounts got = event_counts(pe, ge, iou);
      if (got.tp != best) {
        ++gaps;
        log << "iou " << iou << " greedy " << got.tp << " optimal " << best << " pred";
        for (const auto& s : pe) log << " " << s.cls << ":[" << s.start << "," << s.end << "]";
        log << " gt";
        for (const auto& s : ge) log << " " << s.cls << ":[" << s.start << "," << s.end << "]";
        log << "\n";
      }
    }
  }

  Outcome o;
  o.pass = mismatches == 0 && report_gap < 1e-9 && gaps == 0 && lists >= 20000;
  o.detail = std::to_string(pairs) + " exhaustive pairs (" + std::to_string(mismatches) + " mismatches), report gap " +
             fmt("%.1e", report_gap) + ", " + std::to_string(lists) + " span lists x 4 IoU levels, " +
             std::to_string(gaps) + " greedy/optimal gaps logged";
  return o;
}

// --- 4 ----------------------------------------------------------------------

bool subset_of(const DenseLabels& a, const DenseLabels& b) {
  for (std::size_t i = 0; i < a.audio.data().size(); ++i) {
    if (a.audio.data()[i] && !b.audio.data()[i]) return false;
    if (a.visual.data()[i] && !b.visual.data()[i]) return false;
  }
  return true;
}

bool same_labels(const DenseLabels& a, const DenseLabels& b) {
  return a.audio.data() == b.audio.data() && a.visual.data() == b.visual.data();
}

Outcome elaboration() {
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> theta(-2.5, 2.5), bump(0.0, 1.5);
  std::size_t oracle_checks = 0, oracle_fail = 0, invariant_fail = 0;
  for (int draw = 0; draw < 10000; ++draw) {
    const std::size_t T = 1 + rng() % 10, C = 1 + rng() % 6;
    const TeacherLogits z{"v", testing_support::random_real(T, C, rng), testing_support::random_real(T, C, rng)};
    const WeakLabel y = testing_support::random_weak(C, rng);
    Thresholds th{std::vector<double>(C), std::vector<double>(C)}, higher = th;
    for (std::size_t c = 0; c < C; ++c) {
      th.visual[c] = theta(rng);
      th.audio[c] = theta(rng);
      higher.visual[c] = th.visual[c] + bump(rng);
      higher.audio[c] = th.audio[c] + bump(rng);
    }
    DenseLabels got[2][2];
    for (int f = 0; f < 2; ++f)
      for (int m = 0; m < 2; ++m) {
        const ElaborateOptions opts{f == 1, m == 1 ? ModalityMode::Agnostic : ModalityMode::Aware};
        got[f][m] = elaborate(z, th, y, opts);
        ++oracle_checks;
        oracle_fail += !same_labels(got[f][m], oracle::elaborate(z, th, y, f == 1, m == 1));
        invariant_fail += !subset_of(elaborate(z, higher, y, opts), got[f][m]);
      }
    for (int m = 0; m < 2; ++m) invariant_fail += !subset_of(got[1][m], got[0][m]);
    for (int f = 0; f < 2; ++f) invariant_fail += !subset_of(got[f][0], got[f][1]);
    // Filtered labels never fire outside the video label.
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < C; ++c)
        for (int m = 0; m < 2; ++m)
          invariant_fail += !y.classes[c] && (got[1][m].audio(t, c) || got[1][m].visual(t, c));
  }
  Outcome o;
  o.pass = oracle_fail == 0 && invariant_fail == 0;
  o.detail = std::to_string(oracle_checks) + " oracle comparisons over 4 settings (" + std::to_string(oracle_fail) +
             " mismatches), 10000 draws for monotonicity and dominance (" + std::to_string(invariant_fail) +
             " violations)";
  return o;
}

// --- 5 and 7 ----------------------------------------------------------------

Thresholds uniform(std::size_t C, double v) { return {std::vector<double>(C, v), std::vector<double>(C, v)}; }

double teacher_accuracy(const SyntheticCorpus& syn) {
  std::size_t right = 0, total = 0;
  for (std::size_t i = 0; i < syn.corpus.samples.size(); ++i) {
    const DenseLabels& g = *syn.corpus.samples[i].dense_gt;
    const TeacherLogits& z = syn.teacher[i];
    for (std::size_t k = 0; k < g.audio.data().size(); ++k) {
      right += (z.audio.data()[k] > 0.0) == (g.audio.data()[k] != 0);
      right += (z.visual.data()[k] > 0.0) == (g.visual.data()[k] != 0);
      total += 2;
    }
  }
  return static_cast<double>(right) / static_cast<double>(total);
}

Outcome fidelity_direction() {
  const auto t0 = Clock::now();
  const SyntheticCorpus syn = generate_synthetic(SyntheticSpec{});
  const std::size_t C = syn.corpus.num_classes();
  const auto gt = syn.corpus.dense_gt();
  const auto elaborated = elaborate_corpus(syn.corpus.samples, syn.teacher, uniform(C, 0.0));
  std::vector<DenseLabels> broadcast;
  for (const auto& s : syn.corpus.samples) broadcast.push_back(broadcast_weak(s.weak, s.segments()));
  const LevelScores e = label_fidelity(elaborated, gt), b = label_fidelity(broadcast, gt);
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = e.visual - b.visual >= 5.0 && e.av - b.av >= 5.0 && secs < 60.0;
  o.detail = "teacher accuracy " + fmt("%.3f", teacher_accuracy(syn)) + "; V " + fmt("%.2f", e.visual) + " vs " +
             fmt("%.2f", b.visual) + ", AV " + fmt("%.2f", e.av) + " vs " + fmt("%.2f", b.av) + " (elaborated vs broadcast), " +
             fmt("%.1f", secs) + " s";
  return o;
}

Outcome filter_ablation() {
  SyntheticSpec spec;
  spec.confusable_pairs = {{0, 1}};
  spec.seed = 5;
  const SyntheticCorpus syn = generate_synthetic(spec);
  const std::size_t C = syn.corpus.num_classes();
  const auto gt = syn.corpus.dense_gt();
  const Thresholds th = uniform(C, 0.0);
  const auto filtered = elaborate_corpus(syn.corpus.samples, syn.teacher, th, {true, ModalityMode::Aware});
  const auto unfiltered = elaborate_corpus(syn.corpus.samples, syn.teacher, th, {false, ModalityMode::Aware});
  const double on = label_fidelity(filtered, gt).audio, off = label_fidelity(unfiltered, gt).audio;

  // Audio F restricted to the confusable pair, pooled over cells.
  auto pair_f = [&](const std::vector<DenseLabels>& labels) {
    oracle::Counts k;
    for (std::size_t i = 0; i < labels.size(); ++i)
      for (std::size_t t = 0; t < gt[i].audio.rows(); ++t)
        for (std::size_t c : {0u, 1u}) {
          const bool p = labels[i].audio(t, c), g = gt[i].audio(t, c);
          k.tp += p && g;
          k.fp += p && !g;
          k.fn += !p && g;
        }
    return 100.0 * k.f();
  };
  Outcome o;
  o.pass = on - off >= 10.0;
  o.detail = "audio fidelity " + fmt("%.2f", on) + " filtered vs " + fmt("%.2f", off) + " unfiltered (drop " +
             fmt("%.2f", on - off) + "); confusable pair F " + fmt("%.2f", pair_f(filtered)) + " vs " +
             fmt("%.2f", pair_f(unfiltered));
  return o;
}

// --- 6 and 8 ----------------------------------------------------------------

struct LlpRun {
  MetricsReport test;
  double seconds = 0.0;
};

struct LlpStudy {
  SyntheticCorpus syn;
  std::map<LossMode, LlpRun> runs;
};

ModelConfig desk_model(std::size_t C, bool ave) {
  ModelConfig mc = ModelConfig::variant();
  mc.hidden_dim = 64;
  mc.ffn_dim = 0;
  mc.audio_feat_dim = 32;
  mc.visual_feat_dim = 32;
  mc.num_classes = C;
  mc.ave_mode = ave;
  return mc;
}

TrainConfig desk_train(LossMode loss) {
  TrainConfig tc = TrainConfig::variant();
  tc.loss = loss;
  tc.epochs = 20;
  tc.schedule.total_epochs = 20;
  tc.schedule.warmup_epochs = 3;
  tc.schedule.peak_lr = 3e-3;
  tc.schedule.min_lr = 3e-5;
  tc.jobs = 1;
  return tc;
}

const LlpStudy& llp_study() {
  static std::optional<LlpStudy> study;
  if (study) return *study;
  study.emplace();
  SyntheticSpec spec;
  spec.num_videos = 1400;
  spec.seed = 7;
  study->syn = generate_synthetic(spec);
  const Corpus& all = study->syn.corpus;
  const SplitIndices split = split_corpus(all, {1000.0 / 1400, 200.0 / 1400, 200.0 / 1400}, 1);
  const Corpus tr = all.subset(split.train), va = all.subset(split.val), te = all.subset(split.test);
  std::vector<TeacherLogits> teacher;
  for (std::size_t i : split.train) teacher.push_back(study->syn.teacher[i]);
  const auto dense = elaborate_corpus(tr.samples, teacher, uniform(all.num_classes(), 0.0));
  std::vector<KdTargets> kd;
  for (const auto& z : teacher) kd.push_back(kd_targets(z));
  for (LossMode mode : {LossMode::Base, LossMode::Kd, LossMode::Valor}) {
    const auto t0 = Clock::now();
    const TrainResult r = train(desk_model(all.num_classes(), false), desk_train(mode), TrainData{&tr, &va, dense, kd});
    LlpRun run;
    run.seconds = seconds_since(t0);
    EvaluateOptions eo;
    eo.nonalignment = true;
    run.test = evaluate_model(r.params, te, eo);
    std::cerr << "  trained " << to_string(mode) << " in " << fmt("%.1f", run.seconds) << " s, test Type@AV "
              << fmt("%.2f", run.test.segment.type_av) << "\n";
    study->runs[mode] = run;
  }
  return *study;
}

Outcome training_direction() {
  const LlpStudy& s = llp_study();
  const LlpRun &base = s.runs.at(LossMode::Base), &kd = s.runs.at(LossMode::Kd), &valor = s.runs.at(LossMode::Valor);
  const double slowest = std::max({base.seconds, kd.seconds, valor.seconds});
  Outcome o;
  o.pass = valor.test.segment.type_av - base.test.segment.type_av >= 5.0 &&
           valor.test.segment.type_av > kd.test.segment.type_av && slowest <= 600.0;
  o.detail = "segment Type@AV valor " + fmt("%.2f", valor.test.segment.type_av) + ", base " +
             fmt("%.2f", base.test.segment.type_av) + ", kd " + fmt("%.2f", kd.test.segment.type_av) +
             "; slowest run " + fmt("%.1f", slowest) + " s";
  return o;
}

Outcome nonalignment() {
  const LlpStudy& s = llp_study();
  const auto gt = s.syn.corpus.dense_gt();
  const NonAlignmentReport r = nonalignment_report(gt, gt);
  const Bookkeeping& b = s.syn.bookkeeping;
  const bool counts = r.total_events == b.segment_events && r.nonaligned_events == b.nonaligned_segment_events;
  const double valor = s.runs.at(LossMode::Valor).test.nonalignment->success_rate();
  const double base = s.runs.at(LossMode::Base).test.nonalignment->success_rate();
  Outcome o;
  o.pass = counts && valor > base;
  o.detail = "events " + std::to_string(r.total_events) + "/" + std::to_string(b.segment_events) + ", non-aligned " +
             std::to_string(r.nonaligned_events) + "/" + std::to_string(b.nonaligned_segment_events) +
             " (report/bookkeeping); non-aligned success valor " + fmt("%.3f", valor) + " vs base " + fmt("%.3f", base);
  return o;
}

// --- 9 ----------------------------------------------------------------------

double rescan_f(std::span<const TeacherLogits> logits, std::span<const DenseLabels> gt, std::span<const WeakLabel> weak,
                std::size_t c, bool audio, double theta, bool filter) {
  oracle::Counts k;
  const std::size_t C = logits[0].audio.cols();
  const Thresholds th = uniform(C, theta);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const DenseLabels e = oracle::elaborate(logits[i], th, weak[i], filter, false);
    for (std::size_t t = 0; t < e.audio.rows(); ++t) {
      const bool p = audio ? e.audio(t, c) : e.visual(t, c), g = audio ? gt[i].audio(t, c) : gt[i].visual(t, c);
      k.tp += p && g;
      k.fp += p && !g;
      k.fn += !p && g;
    }
  }
  return k.f();
}

Outcome calibration() {
  // Grid optimality on noisy random corpora.
  std::size_t cells = 0, worse = 0;
  for (std::uint64_t seed : {91u, 92u, 93u}) {
    SyntheticSpec spec;
    spec.num_videos = 60;
    spec.num_classes = 6;
    spec.audio_feat_dim = spec.visual_feat_dim = 4;
    spec.teacher_accuracy = 0.8;
    spec.seed = seed;
    const SyntheticCorpus syn = generate_synthetic(spec);
    const auto gt = syn.corpus.dense_gt();
    const auto weak = syn.corpus.weak_labels();
    for (bool filter : {true, false}) {
      CalibrationGrid grid;
      grid.points = 40;
      const CalibrationResult r = calibrate_thresholds(syn.teacher, gt, weak, grid, filter);
      for (std::size_t c = 0; c < 6; ++c)
        for (bool audio : {true, false}) {
          const CalibrationCell& cell = audio ? r.audio[c] : r.visual[c];
          if (cell.absent) continue;
          ++cells;
          const double chosen = rescan_f(syn.teacher, gt, weak, c, audio, cell.theta, filter);
          double best = 0.0;
          for (double theta : cell.grid) best = std::max(best, rescan_f(syn.teacher, gt, weak, c, audio, theta, filter));
          worse += chosen + 1e-12 < best || std::abs(chosen - cell.f_score) > 1e-12;
        }
    }
  }

  // Separable corpus: every present class reaches F = 1.
  SyntheticSpec sep;
  sep.teacher_noise = 0.3;
  sep.seed = 17;
  const SyntheticCorpus syn = generate_synthetic(sep);
  const auto gt = syn.corpus.dense_gt();
  bool separable = true;
  for (std::size_t i = 0; i < gt.size(); ++i)
    for (std::size_t k = 0; k < gt[i].audio.data().size(); ++k) {
      separable &= (syn.teacher[i].audio.data()[k] > 0.0) == (gt[i].audio.data()[k] != 0);
      separable &= (syn.teacher[i].visual.data()[k] > 0.0) == (gt[i].visual.data()[k] != 0);
    }
  const CalibrationResult r = calibrate_thresholds(syn.teacher, gt, syn.corpus.weak_labels(), CalibrationGrid{});
  std::size_t present = 0, perfect = 0;
  for (const auto* side : {&r.audio, &r.visual})
    for (const CalibrationCell& cell : *side) {
      if (cell.absent) continue;
      ++present;
      perfect += cell.f_score == 1.0;
    }
  Outcome o;
  o.pass = worse == 0 && separable && present > 0 && perfect == present;
  o.detail = std::to_string(cells) + " class/modality cells re-scanned (" + std::to_string(worse) +
             " not grid-optimal); separable corpus " + std::to_string(perfect) + "/" + std::to_string(present) +
             " cells at F = 1" + (separable ? "" : " (corpus not separable)");
  return o;
}

// --- 10 ---------------------------------------------------------------------

Outcome ave_path() {
  SyntheticSpec spec;
  spec.num_videos = 1000;
  spec.seed = 11;
  spec.ave_mode = true;
  spec.num_classes = 28;
  spec.min_events = spec.max_events = 1;
  spec.mix_audio_only = spec.mix_visual_only = 0.0;
  spec.mix_both = 1.0;
  const SyntheticCorpus syn = generate_synthetic(spec);
  const SplitIndices split = split_corpus(syn.corpus, {0.6, 0.2, 0.2}, 1);
  const Corpus tr = syn.corpus.subset(split.train), va = syn.corpus.subset(split.val), te = syn.corpus.subset(split.test);
  std::vector<TeacherLogits> teacher;
  for (std::size_t i : split.train) teacher.push_back(syn.teacher[i]);
  const auto dense = elaborate_corpus(tr.samples, teacher, uniform(28, 0.0));
  std::map<LossMode, double> acc, secs;
  for (LossMode mode : {LossMode::AveWeak, LossMode::AveValor}) {
    const auto t0 = Clock::now();
    const TrainResult r = train(desk_model(28, true), desk_train(mode), TrainData{&tr, &va, dense, {}});
    secs[mode] = seconds_since(t0);
    acc[mode] = 100.0 * evaluate_model(r.params, te).ave_accuracy.value_or(0.0);
    std::cerr << "  trained " << to_string(mode) << " in " << fmt("%.1f", secs[mode]) << " s, test accuracy "
              << fmt("%.2f", acc[mode]) << "\n";
  }
  const double slowest = std::max(secs[LossMode::AveWeak], secs[LossMode::AveValor]);
  Outcome o;
  o.pass = acc[LossMode::AveValor] - acc[LossMode::AveWeak] >= 3.0 && slowest <= 300.0;
  o.detail = "segment accuracy ave-valor " + fmt("%.2f", acc[LossMode::AveValor]) + " vs ave-weak " +
             fmt("%.2f", acc[LossMode::AveWeak]) + "; slowest run " + fmt("%.1f", slowest) + " s";
  return o;
}

// --- 11 ---------------------------------------------------------------------

int quiet_cli(const std::vector<std::string>& args) {
  std::ostringstream sink;
  std::streambuf* old = std::cout.rdbuf(sink.rdbuf());
  const int code = cli::run(args);
  std::cout.rdbuf(old);
  return code;
}

std::map<std::string, std::string> hash_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "run.json") continue;
    out[fs::relative(e.path(), root).generic_string()] = cli::sha256_file(e.path().string());
  }
  return out;
}

Outcome determinism() {
  const fs::path base = g_workdir / "determinism";
  fs::remove_all(base);
  fs::create_directories(base);
  std::ofstream(base / "spec.cfg") << "num_videos = 40\nnum_classes = 5\naudio_feat_dim = 8\nvisual_feat_dim = 8\n";
  std::ofstream(base / "train.cfg") << "preset = variant\nhidden_dim = 16\nffn_dim = 32\nheads = 2\nnum_layers = 1\n"
                                       "epochs = 3\nwarmup_epochs = 1\nbatch_size = 8\ndropout = 0.1\n";
  std::vector<std::map<std::string, std::string>> trees;
  std::string failure;
  for (const char* name : {"run1", "run2"}) {
    const fs::path d = base / name;
    const std::string corpus = (d / "corpus").string(), labels = (d / "labels").string(),
                      model = (d / "train").string(), eval = (d / "eval").string();
    const std::vector<std::vector<std::string>> steps = {
        {"gen", "--spec", (base / "spec.cfg").string(), "--seed", "3", "--out", corpus},
        {"elaborate", "--corpus", corpus, "--theta", "0", "--out", labels},
        {"train", "--corpus", corpus, "--config", (base / "train.cfg").string(), "--loss", "valor", "--labels", labels,
         "--split", "0.75,0.25,0", "--split-seed", "2", "--seed", "9", "--jobs", "2", "--quiet", "--out", model},
        {"eval", "--checkpoint", (d / "train" / "checkpoint").string(), "--corpus", corpus, "--nonalignment",
         "--per-class", "--out", eval},
    };
    for (const auto& step : steps) {
      if (const int code = quiet_cli(step); code != 0) {
        failure = step[0] + " exited " + std::to_string(code);
        break;
      }
    }
    trees.push_back(hash_tree(d));
  }
  std::size_t differing = 0;
  for (const auto& [path, hash] : trees[0]) differing += !trees[1].count(path) || trees[1].at(path) != hash;
  differing += trees[1].size() > trees[0].size() ? trees[1].size() - trees[0].size() : 0;
  const bool complete = trees[0].count("labels/labels.txt") && trees[0].count("eval/report.json") &&
                        std::any_of(trees[0].begin(), trees[0].end(),
                                    [](const auto& kv) { return kv.first.rfind("train/checkpoint/", 0) == 0; });
  Outcome o;
  o.pass = failure.empty() && complete && differing == 0;
  o.detail = failure.empty() ? std::to_string(trees[0].size()) + " files compared across two runs, " +
                                   std::to_string(differing) + " differ" + (complete ? "" : " (outputs missing)")
                             : failure;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string workdir = "acceptance_work";
  std::vector<int> only;
  app.add_option("--workdir", workdir, "scratch directory");
  app.add_option("--only", only, "run only these checks");
  CLI11_PARSE(app, argc, argv);
  g_workdir = workdir;
  fs::create_directories(g_workdir);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks = {
      {"gradient correctness", gradients},
      {"pooling invariants", pooling},
      {"metric oracle equivalence", metric_oracles},
      {"elaboration correctness", elaboration},
      {"label fidelity direction", fidelity_direction},
      {"training improvement direction", training_direction},
      {"filter ablation direction", filter_ablation},
      {"non-alignment analysis", nonalignment},
      {"threshold calibration optimality", calibration},
      {"AVE path", ave_path},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = checks[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << " " << checks[i].first << ": " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
