#include "cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "avp/config_file.hpp"
#include "avp/corpus.hpp"
#include "avp/errors.hpp"
#include "avp/evaluation.hpp"
#include "avp/han.hpp"
#include "avp/label_forge.hpp"
#include "avp/label_io.hpp"
#include "avp/metrics.hpp"
#include "avp/tensor_io.hpp"
#include "avp/training.hpp"

namespace avp::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw IoError("sha256 init failed");
  }
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

namespace {

// --- shared plumbing --------------------------------------------------------

std::size_t default_jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

/// `--out` resolution: relative paths and the per-command default live under
/// $AVPARSE_OUT_ROOT when it is set.
fs::path resolve_out(const std::string& out, const std::string& command) {
  const char* env = std::getenv("AVPARSE_OUT_ROOT");
  const fs::path root = env && *env ? fs::path(env) : fs::path();
  if (out.empty()) return (root.empty() ? fs::path("runs") : root) / command;
  const fs::path p(out);
  return p.is_relative() && !root.empty() ? root / p : p;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(double v, int precision = 17) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

/// Provenance record. Everything except `wall_seconds` and `finished_at` is a
/// function of the inputs.
struct RunRecord {
  std::string command;
  std::vector<std::string> args;
  json config = json::object();
  std::vector<fs::path> inputs;
  Clock::time_point started = Clock::now();

  void write(const fs::path& out_dir) const {
    json j;
    j["command"] = command;
    j["args"] = args;
    j["config"] = config;
    json in = json::object();
    for (const auto& p : inputs) {
      if (fs::is_regular_file(p)) in[p.string()] = sha256_file(p.string());
    }
    j["inputs"] = in;
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(out_dir)) {
      if (e.is_regular_file() && e.path().filename() != "run.json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    json outs = json::object();
    for (const auto& f : files) outs[fs::relative(f, out_dir).generic_string()] = sha256_file(f.string());
    j["artifacts"] = outs;
    j["wall_seconds"] = std::chrono::duration<double>(Clock::now() - started).count();
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    j["finished_at"] = stamp;
    write_text(out_dir / "run.json", j.dump(2) + "\n");
  }
};

std::vector<TeacherLogits> load_aligned_logits(const fs::path& dir, const Corpus& corpus) {
  const auto logits = read_teacher_logits(dir);
  return align_logits(corpus.samples, logits, corpus.num_classes());
}

/// Resolves thresholds from a thresholds TSV, a prompt table, or a constant.
Thresholds resolve_thresholds(const std::string& thresholds_file, const std::string& prompt_table, double theta,
                              const std::vector<std::string>& class_names) {
  if (!thresholds_file.empty()) return load_thresholds(thresholds_file, class_names);
  if (!prompt_table.empty()) {
    const PromptTable table = PromptTable::load(prompt_table);
    if (table.class_names() != class_names) {
      throw ValidationError("prompt table " + prompt_table + " does not list the corpus classes in order");
    }
    return table.thresholds();
  }
  const std::size_t C = class_names.size();
  return {std::vector<double>(C, theta), std::vector<double>(C, theta)};
}

std::vector<LabeledVideo> to_labeled(const Corpus& corpus, const std::vector<DenseLabels>& labels) {
  std::vector<LabeledVideo> out;
  for (std::size_t i = 0; i < labels.size(); ++i) out.push_back({corpus.samples[i].video_id, labels[i]});
  return out;
}

json level_json(const LevelScores& s) {
  return {{"A", s.audio}, {"V", s.visual}, {"AV", s.av}, {"Type@AV", s.type_av}, {"Event@AV", s.event_av}};
}

std::array<double, 3> parse_fractions(const std::string& text) {
  const auto cfg = KeyValueConfig::parse("split = " + text, "--split");
  const auto v = cfg.get_doubles("split", {});
  if (v.size() != 3) throw UsageError("--split expects three fractions train,val,test");
  return {v[0], v[1], v[2]};
}

/// Applies --split/--subset selection to a loaded corpus.
struct SplitOptions {
  std::string fractions;
  std::uint64_t seed = 0;
  std::string subset;

  void add(CLI::App* app, const std::string& default_subset) {
    subset = default_subset;
    app->add_option("--split", fractions, "train,val,test fractions for a seeded stratified split");
    app->add_option("--split-seed", seed, "seed of the split");
    app->add_option("--subset", subset, "split part to use (train, val, test)")
        ->check(CLI::IsMember({"train", "val", "test"}));
  }

  std::optional<SplitIndices> split(const Corpus& corpus) const {
    if (fractions.empty()) return std::nullopt;
    return split_corpus(corpus, parse_fractions(fractions), seed);
  }

  Corpus select(const Corpus& corpus) const {
    const auto s = split(corpus);
    if (!s) return corpus;
    const auto& idx = subset == "train" ? s->train : subset == "val" ? s->val : s->test;
    return corpus.subset(idx);
  }

  json to_json() const {
    if (fractions.empty()) return nullptr;
    return {{"fractions", fractions}, {"seed", seed}, {"subset", subset}};
  }
};

// --- gen --------------------------------------------------------------------

struct GenArgs {
  std::string spec, out;
  std::optional<std::uint64_t> seed;
};

int cmd_gen(const GenArgs& a, RunRecord& rec) {
  KeyValueConfig cfg = a.spec.empty() ? KeyValueConfig() : KeyValueConfig::load(a.spec);
  if (a.seed) cfg.set("seed", std::to_string(*a.seed));
  const SyntheticSpec spec = SyntheticSpec::from_config(cfg);
  const fs::path out = resolve_out(a.out, "gen");
  ensure_dir(out);
  const SyntheticCorpus corpus = generate_synthetic(spec);
  write_corpus(out, corpus, spec);

  const Bookkeeping& b = corpus.bookkeeping;
  std::cout << "videos " << b.videos << " events " << b.events << " (audio-only " << b.audio_only_events
            << ", visual-only " << b.visual_only_events << ", both " << b.both_events << ")\n"
            << "segment events " << b.segment_events << " nonaligned " << b.nonaligned_segment_events
            << " nonaligned_fraction " << fmt(b.nonaligned_fraction()) << "\n"
            << "teacher sigma " << fmt(spec.teacher_sigma(), 6) << "\n"
            << "wrote " << out.string() << "\n";

  if (!a.spec.empty()) rec.inputs.push_back(a.spec);
  rec.config = {{"spec", spec.to_config_text()}};
  rec.write(out);
  return kExitOk;
}

// --- elaborate --------------------------------------------------------------

struct ElaborateArgs {
  std::string corpus, logits, thresholds, prompt_table, out;
  double theta = 0.0;
  bool no_video_filter = false;
  bool modality_agnostic = false;
};

int cmd_elaborate(const ElaborateArgs& a, RunRecord& rec) {
  const Corpus corpus = load_corpus(a.corpus);
  const fs::path logits_dir = a.logits.empty() ? fs::path(a.corpus) / "teacher" : fs::path(a.logits);
  const auto logits = load_aligned_logits(logits_dir, corpus);
  const Thresholds th = resolve_thresholds(a.thresholds, a.prompt_table, a.theta, corpus.class_names);
  ElaborateOptions opts;
  opts.video_filter = !a.no_video_filter;
  opts.mode = a.modality_agnostic ? ModalityMode::Agnostic : ModalityMode::Aware;
  const auto labels = elaborate_corpus(corpus.samples, logits, th, opts);

  const fs::path out = resolve_out(a.out, "elaborate");
  ensure_dir(out);
  save_dense_labels(out / "labels.txt", to_labeled(corpus, labels));
  std::cout << "elaborated " << labels.size() << " videos"
            << (opts.video_filter ? "" : " without the video-label filter")
            << (a.modality_agnostic ? ", modality-agnostic" : "") << "\n";

  if (corpus.has_dense_gt() && !corpus.samples.empty()) {
    const auto gt = corpus.dense_gt();
    std::vector<DenseLabels> broadcast;
    for (const auto& s : corpus.samples) broadcast.push_back(broadcast_weak(s.weak, s.segments()));
    const LevelScores fid = label_fidelity(labels, gt);
    const LevelScores base = label_fidelity(broadcast, gt);
    json j{{"aggregation", "macro"}, {"elaborated", level_json(fid)}, {"broadcast", level_json(base)}};
    write_text(out / "fidelity.json", j.dump(2) + "\n");
    std::cout << "fidelity     A " << fixed2(fid.audio) << "  V " << fixed2(fid.visual) << "  AV "
              << fixed2(fid.av) << "\n"
              << "broadcast    A " << fixed2(base.audio) << "  V " << fixed2(base.visual) << "  AV "
              << fixed2(base.av) << "\n";
  }

  rec.inputs = {fs::path(a.corpus) / "manifest.csv", logits_dir / "manifest.tsv"};
  if (!a.thresholds.empty()) rec.inputs.push_back(a.thresholds);
  if (!a.prompt_table.empty()) rec.inputs.push_back(a.prompt_table);
  rec.config = {{"video_filter", opts.video_filter},
                {"modality", a.modality_agnostic ? "agnostic" : "aware"},
                {"theta", a.thresholds.empty() && a.prompt_table.empty() ? json(a.theta) : json(nullptr)}};
  rec.write(out);
  return kExitOk;
}

// --- calibrate --------------------------------------------------------------

struct CalibrateArgs {
  std::string corpus, logits, out;
  std::optional<double> lo, hi;
  double step = 0.0;
  std::size_t points = 64;
  bool no_video_filter = false;
};

int cmd_calibrate(const CalibrateArgs& a, RunRecord& rec) {
  const Corpus corpus = load_corpus(a.corpus);
  if (corpus.samples.empty()) throw UsageError("calibrate: corpus " + a.corpus + " has no videos");
  if (!corpus.has_dense_gt()) {
    throw UsageError("calibrate: corpus " + a.corpus +
                     " has no dense ground truth (labels_gt.txt); thresholds are chosen by segment F-score "
                     "against it");
  }
  const fs::path logits_dir = a.logits.empty() ? fs::path(a.corpus) / "teacher" : fs::path(a.logits);
  const auto logits = load_aligned_logits(logits_dir, corpus);
  CalibrationGrid grid;
  grid.lo = a.lo;
  grid.hi = a.hi;
  grid.step = a.step;
  grid.points = a.points;
  const auto result =
      calibrate_thresholds(logits, corpus.dense_gt(), corpus.weak_labels(), grid, !a.no_video_filter);

  const fs::path out = resolve_out(a.out, "calibrate");
  ensure_dir(out);
  save_thresholds(out / "thresholds.tsv", result.thresholds, corpus.class_names);
  json cells = json::array();
  std::cout << "class                          theta_v      F_v    theta_a      F_a\n";
  for (std::size_t c = 0; c < corpus.num_classes(); ++c) {
    const auto& v = result.visual[c];
    const auto& au = result.audio[c];
    cells.push_back({{"class", corpus.class_names[c]},
                     {"visual", {{"theta", v.theta}, {"f_score", v.f_score}, {"absent", v.absent}}},
                     {"audio", {{"theta", au.theta}, {"f_score", au.f_score}, {"absent", au.absent}}}});
    char line[160];
    std::snprintf(line, sizeof line, "%-28s %10.4f %8.4f%s %10.4f %8.4f%s\n", corpus.class_names[c].c_str(),
                  v.theta, v.f_score, v.absent ? "*" : " ", au.theta, au.f_score, au.absent ? "*" : " ");
    std::cout << line;
  }
  std::cout << "(* no positive ground truth; threshold set to the grid maximum)\n";
  write_text(out / "calibration.json", json{{"classes", cells}}.dump(2) + "\n");

  rec.inputs = {fs::path(a.corpus) / "manifest.csv", fs::path(a.corpus) / "labels_gt.txt",
                logits_dir / "manifest.tsv"};
  rec.config = {{"grid_lo", a.lo ? json(*a.lo) : json(nullptr)},
                {"grid_hi", a.hi ? json(*a.hi) : json(nullptr)},
                {"grid_step", a.step},
                {"grid_points", a.points},
                {"video_filter", !a.no_video_filter}};
  rec.write(out);
  return kExitOk;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string corpus, config, labels, logits, thresholds, val_corpus, out, loss;
  double theta = 0.0;
  bool gt_labels = false;
  std::size_t checkpoint_every = 0;
  std::optional<std::size_t> jobs;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  SplitOptions split;
};

fs::path labels_file(const std::string& path) {
  const fs::path p(path);
  return fs::is_directory(p) ? p / "labels.txt" : p;
}

int cmd_train(const TrainArgs& a, RunRecord& rec) {
  KeyValueConfig cfg = a.config.empty() ? KeyValueConfig() : KeyValueConfig::load(a.config);
  std::set<std::string> known(model_config_keys().begin(), model_config_keys().end());
  known.insert(train_config_keys().begin(), train_config_keys().end());
  cfg.reject_unknown(known);
  if (!a.loss.empty()) cfg.set("loss", a.loss);
  if (a.seed) cfg.set("seed", std::to_string(*a.seed));
  cfg.set("jobs", std::to_string(a.jobs.value_or(cfg.get_uint("jobs", default_jobs()))));
  TrainConfig tc = TrainConfig::from_config(cfg);
  const bool ave = tc.loss == LossMode::AveWeak || tc.loss == LossMode::AveValor;

  const Corpus full = load_corpus(a.corpus);
  if (full.samples.empty()) throw UsageError("train: corpus " + a.corpus + " has no videos");
  // Data-derived model fields; explicit config values must agree.
  auto derive = [&](const char* key, std::size_t value) {
    if (cfg.has(key) && cfg.get_uint(key, 0) != value) {
      throw ConfigError(std::string("train: config ") + key + " = " + cfg.get_string(key, "") +
                        " disagrees with the corpus (" + std::to_string(value) + ")");
    }
    cfg.set(key, std::to_string(value));
  };
  derive("num_classes", full.num_classes());
  derive("audio_feat_dim", full.samples[0].feats_audio.dim(1));
  derive("visual_feat_dim", full.samples[0].feats_visual.dim(1));
  if (cfg.has("ave_mode") && cfg.get_bool("ave_mode", ave) != ave) {
    throw ConfigError("train: ave_mode must match the loss (" + to_string(tc.loss) + ")");
  }
  cfg.set("ave_mode", ave ? "true" : "false");
  const ModelConfig mc = ModelConfig::from_config(cfg);

  Corpus train_set, val_set;
  bool has_val = false;
  if (const auto s = a.split.split(full)) {
    train_set = full.subset(s->train);
    val_set = full.subset(s->val);
    has_val = !val_set.samples.empty();
  } else {
    train_set = full;
  }
  if (!a.val_corpus.empty()) {
    if (has_val) throw UsageError("train: give either --split or --val-corpus, not both");
    val_set = load_corpus(a.val_corpus);
    has_val = true;
  }

  TrainData data;
  data.train = &train_set;
  if (has_val) data.validation = &val_set;
  const fs::path logits_dir = a.logits;
  if (tc.needs_dense()) {
    if (a.gt_labels) {
      if (!train_set.has_dense_gt()) throw UsageError("train: --gt-labels but the corpus has no ground truth");
      data.dense = train_set.dense_gt();
    } else if (!a.labels.empty()) {
      data.dense = import_external_labels(labels_file(a.labels), train_set.samples, train_set.num_classes());
      rec.inputs.push_back(labels_file(a.labels));
    } else if (!a.logits.empty()) {
      const auto logits = load_aligned_logits(logits_dir, train_set);
      const Thresholds th = resolve_thresholds(a.thresholds, "", a.theta, train_set.class_names);
      data.dense = elaborate_corpus(train_set.samples, logits, th);
    } else {
      throw UsageError("train: loss " + to_string(tc.loss) +
                       " needs dense labels; pass --labels, --logits, or --gt-labels");
    }
  }
  if (tc.needs_kd()) {
    if (a.logits.empty()) throw UsageError("train: loss " + to_string(tc.loss) + " needs --logits");
    for (const auto& l : load_aligned_logits(logits_dir, train_set)) data.kd.push_back(kd_targets(l));
  }
  if (!a.logits.empty()) rec.inputs.push_back(logits_dir / "manifest.tsv");
  if (!a.thresholds.empty()) rec.inputs.push_back(a.thresholds);

  const fs::path out = resolve_out(a.out, "train");
  ensure_dir(out);
  EpochCallback on_epoch = [&](const EpochRecord& e, const ModelParams& params) {
    if (!a.quiet) {
      std::cout << "epoch " << e.epoch << " lr " << fmt(e.lr, 4) << " loss " << fmt(e.loss, 6) << " grad "
                << fmt(e.mean_grad_norm, 4);
      if (e.val_type_av) std::cout << " val " << fixed2(*e.val_type_av);
      std::cout << std::endl;
    }
    if (a.checkpoint_every && (e.epoch + 1) % static_cast<int>(a.checkpoint_every) == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03d", e.epoch);
      save_checkpoint(out / "checkpoints" / name, params);
    }
  };
  const TrainResult result = train(mc, tc, data, on_epoch);

  save_checkpoint(out / "checkpoint", result.params);
  write_text(out / "train_report.json", result.report.to_json(false) + "\n");
  write_text(out / "config.txt", mc.to_config_text() + tc.to_config_text());
  if (result.report.final_validation) {
    write_text(out / "report.json", report_to_json(*result.report.final_validation) + "\n");
    std::cout << "selected epoch " << result.report.best_epoch << " (" << result.report.selection << ")\n"
              << report_to_text(*result.report.final_validation);
  }
  std::cout << "parameters " << result.params.parameter_count() << ", wrote " << out.string() << "\n";

  rec.inputs.insert(rec.inputs.begin(), fs::path(a.corpus) / "manifest.csv");
  if (!a.config.empty()) rec.inputs.push_back(a.config);
  rec.config = {{"model", mc.to_config_text()},
                {"train", tc.to_config_text()},
                {"split", a.split.to_json()},
                {"train_videos", train_set.samples.size()},
                {"validation_videos", has_val ? val_set.samples.size() : 0},
                {"labels", a.gt_labels ? "ground-truth" : !a.labels.empty() ? "file" : !a.logits.empty() ? "elaborated"
                                                                                                             : "weak"}};
  rec.write(out);
  return kExitOk;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, corpus, out;
  bool per_class = false, nonalignment = false, micro = false, gating = false;
  double threshold = 0.5;
  std::optional<std::size_t> jobs;
  SplitOptions split;
};

int cmd_eval(const EvalArgs& a, RunRecord& rec) {
  const ModelParams params = load_checkpoint(a.checkpoint);
  const Corpus corpus = a.split.select(load_corpus(a.corpus));
  if (corpus.samples.empty()) throw UsageError("eval: no videos to evaluate");
  if (!corpus.has_dense_gt()) throw UsageError("eval: corpus " + a.corpus + " has no dense ground truth");
  EvaluateOptions opts;
  opts.predict.threshold = a.threshold;
  opts.predict.video_gating = a.gating;
  opts.predict.jobs = a.jobs.value_or(default_jobs());
  opts.aggregation = a.micro ? Aggregation::Micro : Aggregation::Macro;
  opts.nonalignment = a.nonalignment;
  const MetricsReport report = evaluate_model(params, corpus, opts);

  const fs::path out = resolve_out(a.out, "eval");
  ensure_dir(out);
  write_text(out / "report.json", report_to_json(report) + "\n");
  write_text(out / "report.txt", report_to_text(report));
  if (a.per_class) write_text(out / "per_class.csv", per_class_csv(report, corpus.class_names));
  std::cout << report_to_text(report);

  rec.inputs = {fs::path(a.checkpoint) / "manifest.json", fs::path(a.corpus) / "manifest.csv"};
  rec.config = {{"threshold", a.threshold}, {"video_gating", a.gating},
                {"aggregation", to_string(opts.aggregation)}, {"nonalignment", a.nonalignment},
                {"split", a.split.to_json()}, {"videos", corpus.samples.size()}};
  rec.write(out);
  return kExitOk;
}

// --- export-logits / teacher-logits -----------------------------------------

struct ExportArgs {
  std::string checkpoint, corpus, out;
};

int cmd_export_logits(const ExportArgs& a, RunRecord& rec) {
  const ModelParams params = load_checkpoint(a.checkpoint);
  const Corpus corpus = load_corpus(a.corpus);
  const fs::path out = resolve_out(a.out, "export-logits");
  ensure_dir(out);
  export_model_logits(params, corpus.samples, out);
  std::cout << "exported logits for " << corpus.samples.size() << " videos to " << out.string() << "\n";
  rec.inputs = {fs::path(a.checkpoint) / "manifest.json", fs::path(a.corpus) / "manifest.csv"};
  rec.write(out);
  return kExitOk;
}

struct TeacherArgs {
  std::string corpus, embeddings, out;
};

int cmd_teacher_logits(const TeacherArgs& a, RunRecord& rec) {
  const Corpus corpus = load_corpus(a.corpus);
  const fs::path emb(a.embeddings);
  const RealMatrix class_v = to_matrix(load_tensor(emb / "classes_visual.avt"));
  const RealMatrix class_a = to_matrix(load_tensor(emb / "classes_audio.avt"));
  if (class_v.rows() != corpus.num_classes() || class_a.rows() != corpus.num_classes()) {
    throw ValidationError("teacher-logits: class embeddings do not have one row per corpus class");
  }
  std::vector<TeacherLogits> logits;
  for (const auto& s : corpus.samples) {
    TeacherLogits t;
    t.video_id = s.video_id;
    t.visual = teacher_logits_from_embeddings(to_matrix(load_tensor(emb / (s.video_id + "_visual.avt"))), class_v);
    t.audio = teacher_logits_from_embeddings(to_matrix(load_tensor(emb / (s.video_id + "_audio.avt"))), class_a);
    if (t.visual.rows() != s.segments() || t.audio.rows() != s.segments()) {
      throw ValidationError("teacher-logits: frame embeddings of " + s.video_id + " do not have T rows");
    }
    logits.push_back(std::move(t));
  }
  const fs::path out = resolve_out(a.out, "teacher-logits");
  ensure_dir(out);
  write_teacher_logits(out, logits);
  std::cout << "wrote teacher logits for " << logits.size() << " videos to " << out.string() << "\n";
  rec.inputs = {fs::path(a.corpus) / "manifest.csv", emb / "classes_visual.avt", emb / "classes_audio.avt"};
  rec.write(out);
  return kExitOk;
}

// --- report -----------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> runs;
  std::string out;
};

struct RunMetrics {
  std::string name;
  std::vector<std::pair<std::string, std::optional<double>>> rows;
};

int cmd_report(const ReportArgs& a, RunRecord& rec) {
  std::vector<RunMetrics> runs;
  std::vector<std::string> metric_names;
  auto add = [&](RunMetrics& r, const std::string& metric, std::optional<double> v) {
    if (std::find(metric_names.begin(), metric_names.end(), metric) == metric_names.end()) {
      metric_names.push_back(metric);
    }
    r.rows.emplace_back(metric, v);
  };
  std::ostringstream per_class, curves;
  per_class << "run,level,modality,class,f\n";
  curves << "run,epoch,lr,loss,val\n";

  for (const auto& dir : a.runs) {
    const fs::path d(dir);
    RunMetrics r;
    r.name = d.filename().empty() ? d.parent_path().filename().string() : d.filename().string();
    bool any = false;
    if (fs::exists(d / "report.json")) {
      any = true;
      rec.inputs.push_back(d / "report.json");
      const MetricsReport m = report_from_json(read_text(d / "report.json"));
      const std::pair<const char*, const LevelScores*> levels[] = {{"segment", &m.segment}, {"event", &m.event}};
      for (const auto& [level, s] : levels) {
        add(r, std::string(level) + " A", s->audio);
        add(r, std::string(level) + " V", s->visual);
        add(r, std::string(level) + " AV", s->av);
        add(r, std::string(level) + " Type@AV", s->type_av);
        add(r, std::string(level) + " Event@AV", s->event_av);
      }
      if (m.ave_accuracy) add(r, "AVE accuracy", 100.0 * *m.ave_accuracy);
      if (m.nonalignment) add(r, "non-aligned success", 100.0 * m.nonalignment->success_rate());
      const std::pair<const char*, const std::vector<double>*> cols[] = {
          {"segment,A", &m.per_class.segment_audio}, {"segment,V", &m.per_class.segment_visual},
          {"segment,AV", &m.per_class.segment_av},   {"event,A", &m.per_class.event_audio},
          {"event,V", &m.per_class.event_visual},    {"event,AV", &m.per_class.event_av}};
      for (const auto& [key, values] : cols) {
        for (std::size_t c = 0; c < values->size(); ++c) {
          per_class << r.name << "," << key << "," << c << "," << fmt((*values)[c]) << "\n";
        }
      }
    }
    if (fs::exists(d / "fidelity.json")) {
      any = true;
      rec.inputs.push_back(d / "fidelity.json");
      const json f = json::parse(read_text(d / "fidelity.json"));
      for (const char* kind : {"elaborated", "broadcast"}) {
        for (const char* k : {"A", "V", "AV"}) add(r, std::string("fidelity ") + kind + " " + k, f[kind][k].get<double>());
      }
    }
    if (fs::exists(d / "train_report.json")) {
      rec.inputs.push_back(d / "train_report.json");
      const json t = json::parse(read_text(d / "train_report.json"));
      for (const auto& e : t["epochs"]) {
        curves << r.name << "," << e["epoch"].get<int>() << "," << fmt(e["lr"].get<double>()) << ","
               << fmt(e["loss"].get<double>()) << ","
               << (e.contains("val_segment_type_av") ? fmt(e["val_segment_type_av"].get<double>()) : "") << "\n";
      }
    }
    if (!any) throw UsageError("report: " + dir + " has neither report.json nor fidelity.json");
    runs.push_back(std::move(r));
  }

  auto value = [](const RunMetrics& r, const std::string& metric) -> std::optional<double> {
    for (const auto& [k, v] : r.rows) {
      if (k == metric) return v;
    }
    return std::nullopt;
  };

  // Columns: each run, then B - A deltas of every later run against the first.
  std::ostringstream csv, md;
  csv << "metric";
  md << "| metric |";
  for (const auto& r : runs) {
    csv << "," << r.name;
    md << " " << r.name << " |";
  }
  for (std::size_t i = 1; i < runs.size(); ++i) {
    csv << ",delta " << runs[i].name << " - " << runs[0].name;
    md << " " << runs[i].name << " - " << runs[0].name << " |";
  }
  csv << "\n";
  md << "\n|---|";
  for (std::size_t i = 0; i < 2 * runs.size() - 1; ++i) md << "---:|";
  md << "\n";
  for (const auto& metric : metric_names) {
    csv << metric;
    md << "| " << metric << " |";
    for (const auto& r : runs) {
      const auto v = value(r, metric);
      csv << "," << (v ? fmt(*v) : "");
      md << " " << (v ? fixed2(*v) : "-") << " |";
    }
    const auto base = value(runs[0], metric);
    for (std::size_t i = 1; i < runs.size(); ++i) {
      const auto v = value(runs[i], metric);
      const bool both = v && base;
      csv << "," << (both ? fmt(*v - *base) : "");
      md << " " << (both ? (*v - *base >= 0 ? "+" : "") + fixed2(*v - *base) : "-") << " |";
    }
    csv << "\n";
    md << "\n";
  }

  const fs::path out = resolve_out(a.out, "report");
  ensure_dir(out);
  write_text(out / "comparison.csv", csv.str());
  write_text(out / "comparison.md", md.str());
  write_text(out / "plot_per_class.csv", per_class.str());
  write_text(out / "plot_training.csv", curves.str());
  std::cout << md.str();
  rec.config = {{"runs", a.runs}};
  rec.write(out);
  return kExitOk;
}

int fail(int code, const std::string& kind, const std::exception& e) {
  std::cerr << "avparse: " << kind << ": " << e.what() << "\n";
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Audio-visual video parsing with modality-aware dense pseudo labels"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  RunRecord rec;
  rec.args = args;

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic corpus with planted ground truth");
  g->add_option("--spec", gen.spec, "generator config (key = value)")->check(CLI::ExistingFile);
  g->add_option("--out", gen.out, "output corpus directory");
  g->add_option("--seed", gen.seed, "overrides the seed in --spec");

  ElaborateArgs el;
  auto* e = app.add_subcommand("elaborate", "Turn teacher logits and weak labels into dense labels");
  e->add_option("--corpus", el.corpus, "corpus directory")->required();
  e->add_option("--logits", el.logits, "teacher logits directory (default: <corpus>/teacher)");
  auto* th_opt = e->add_option("--thresholds", el.thresholds, "thresholds TSV from calibrate");
  auto* pt_opt = e->add_option("--prompt-table", el.prompt_table, "prompt table TSV with per-class thresholds");
  e->add_option("--theta", el.theta, "uniform threshold when no table is given")->excludes(th_opt)->excludes(pt_opt);
  th_opt->excludes(pt_opt);
  e->add_flag("--no-video-filter", el.no_video_filter, "do not AND with the video-level label");
  e->add_flag("--modality-agnostic", el.modality_agnostic, "give both modalities the OR of the teachers");
  e->add_option("--out", el.out, "output directory");

  CalibrateArgs ca;
  auto* c = app.add_subcommand("calibrate", "Choose per-class thresholds by segment F-score");
  c->add_option("--corpus", ca.corpus, "corpus directory with dense ground truth")->required();
  c->add_option("--logits", ca.logits, "teacher logits directory (default: <corpus>/teacher)");
  c->add_option("--grid-lo", ca.lo, "lowest threshold (default: observed minimum)");
  c->add_option("--grid-hi", ca.hi, "highest threshold (default: observed maximum)");
  c->add_option("--grid-step", ca.step, "grid spacing; overrides --grid-points");
  c->add_option("--grid-points", ca.points, "evenly spaced grid size")->check(CLI::PositiveNumber);
  c->add_flag("--no-video-filter", ca.no_video_filter, "score labels without the video-level filter");
  c->add_option("--out", ca.out, "output directory");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a HAN model");
  t->add_option("--corpus", tr.corpus, "training corpus directory")->required();
  t->add_option("--config", tr.config, "model and training config (key = value)")->check(CLI::ExistingFile);
  t->add_option("--loss", tr.loss, "base, kd, valor, mixed, ave-weak, ave-valor");
  t->add_option("--labels", tr.labels, "dense labels file or elaborate output directory");
  t->add_option("--logits", tr.logits, "teacher logits directory (kd targets, or labels via elaboration)");
  t->add_option("--thresholds", tr.thresholds, "thresholds for elaborating --logits");
  t->add_option("--theta", tr.theta, "uniform threshold for elaborating --logits");
  t->add_flag("--gt-labels", tr.gt_labels, "use the corpus ground truth as dense labels");
  t->add_option("--val-corpus", tr.val_corpus, "validation corpus directory");
  tr.split.add(t, "train");
  t->add_option("--checkpoint-every", tr.checkpoint_every, "also save a checkpoint every k epochs");
  t->add_option("--jobs", tr.jobs, "worker threads (default: available cores)")->check(CLI::PositiveNumber);
  t->add_option("--seed", tr.seed, "overrides the config seed");
  t->add_flag("--quiet", tr.quiet, "no per-epoch output");
  t->add_option("--out", tr.out, "output directory");

  EvalArgs ev;
  auto* v = app.add_subcommand("eval", "Score a checkpoint against dense ground truth");
  v->add_option("--checkpoint", ev.checkpoint, "checkpoint directory")->required();
  v->add_option("--corpus", ev.corpus, "corpus directory")->required();
  ev.split.add(v, "test");
  v->add_flag("--per-class", ev.per_class, "write per_class.csv");
  v->add_flag("--nonalignment", ev.nonalignment, "add the modality non-alignment analysis");
  v->add_flag("--micro", ev.micro, "pool counts over videos instead of averaging per video");
  v->add_flag("--gating", ev.gating, "require the video-level probability to pass the threshold too");
  v->add_option("--threshold", ev.threshold, "probability threshold");
  v->add_option("--jobs", ev.jobs, "worker threads (default: available cores)")->check(CLI::PositiveNumber);
  v->add_option("--out", ev.out, "output directory");

  ExportArgs ex;
  auto* x = app.add_subcommand("export-logits", "Write a model's segment logits in teacher format");
  x->add_option("--checkpoint", ex.checkpoint, "checkpoint directory")->required();
  x->add_option("--corpus", ex.corpus, "corpus directory")->required();
  x->add_option("--out", ex.out, "output directory");

  TeacherArgs te;
  auto* tl = app.add_subcommand("teacher-logits", "Teacher logits from precomputed embeddings");
  tl->add_option("--corpus", te.corpus, "corpus directory")->required();
  tl->add_option("--embeddings", te.embeddings,
                 "directory with <id>_visual.avt, <id>_audio.avt, classes_visual.avt, classes_audio.avt")
      ->required();
  tl->add_option("--out", te.out, "output directory");

  ReportArgs re;
  auto* r = app.add_subcommand("report", "Compare runs from their report.json files");
  r->add_option("runs", re.runs, "run directories; deltas are taken against the first")->required();
  r->add_option("--out", re.out, "output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success& s) {
    return app.exit(s);
  } catch (const CLI::ParseError& p) {
    app.exit(p);
    return kExitUsage;
  }

  try {
    rec.command = app.get_subcommands().front()->get_name();
    if (*g) return cmd_gen(gen, rec);
    if (*e) return cmd_elaborate(el, rec);
    if (*c) return cmd_calibrate(ca, rec);
    if (*t) return cmd_train(tr, rec);
    if (*v) return cmd_eval(ev, rec);
    if (*x) return cmd_export_logits(ex, rec);
    if (*tl) return cmd_teacher_logits(te, rec);
    if (*r) return cmd_report(re, rec);
  } catch (const UsageError& err) {
    return fail(kExitUsage, "usage error", err);
  } catch (const ConfigError& err) {
    return fail(kExitUsage, "config error", err);
  } catch (const ParseError& err) {
    return fail(kExitUsage, "parse error", err);
  } catch (const ValidationError& err) {
    return fail(kExitUsage, "invalid input", err);
  } catch (const std::exception& err) {
    return fail(kExitRuntime, "error", err);
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace avp::cli
