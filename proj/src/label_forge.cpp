#include "avp/label_forge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "avp/errors.hpp"

namespace avp {

namespace {

// Mirrors data/llp_prompt_table.tsv.
constexpr const char* kLlpPromptTable = R"tsv(class	visual_caption	audio_caption	theta_visual	theta_audio
Speech	A photo of people talking.	This is a sound of speech	20	0
Car	A photo of a car.	This is a sound of car	15	0
Cheering	A photo of people cheering.	This is a sound of cheering	18	1
Dog	A photo of a dog.	This is a sound of dog	14	4
Cat	A photo of a cat.	This is a sound of cat	15	6
Frying_(food)	A photo of frying food.	This is a sound of frying (food)	18	-2
Basketball_bounce	A photo of people playing basketball.	This is a sound of basketball bounce	18	4
Fire_alarm	A photo of a fire alarm.	This is a sound of fire alarm	15	4
Chainsaw	A photo of a chainsaw.	This is a sound of chainsaw	15	2
Cello	A photo of a cello.	This is a sound of cello	15	2
Banjo	A photo of a banjo.	This is a sound of banjo	15	2
Singing	A photo of people singing.	This is a sound of singing	18	1
Chicken_rooster	A photo of a chicken or a rooster.	This is a sound of chicken, rooster	15	2
Violin_fiddle	A photo of a violin.	This is a sound of violin fiddle	15	3
Vacuum_cleaner	A photo of a vaccum cleaner.	This is a sound of vacuum cleaner	15	0
Baby_laughter	A photo of a laughing baby.	This is a sound of baby laughter	15	2
Accordion	A photo of an accordion.	This is a sound of accordion	15	2
Lawn_mower	A photo of a lawnmower.	This is a sound of lawn mower	15	2
Motorcycle	A photo of a motorcycle.	This is a sound of motorcycle	15	0
Helicopter	A photo of a helicopter.	This is a sound of helicopter	16	2
Acoustic_guitar	A photo of a acoustic guiter.	This is a sound of acoustic guitar	14	-1
Telephone_bell_ringing	A photo of a ringing telephone.	This is a sound of telephone bell ringing	15	2
Baby_cry_infant_cry	A photo of a crying baby.	This is a sound of baby cry, infant cry	15	3
Blender	A photo of a blender.	This is a sound of blender	15	3
Clapping	A photo of hands clapping.	This is a sound of clapping	18	0
)tsv";

constexpr const char* kPromptHeader = "class\tvisual_caption\taudio_caption\ttheta_visual\ttheta_audio";

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

void check_logits(const TeacherLogits& logits) {
  if (logits.visual.rows() != logits.audio.rows()) {
    throw ValidationError("teacher logits for " + logits.video_id + ": visual has " +
                          std::to_string(logits.visual.rows()) + " segments, audio has " +
                          std::to_string(logits.audio.rows()));
  }
  if (logits.visual.cols() != logits.audio.cols()) {
    throw ValidationError("teacher logits for " + logits.video_id + ": visual and audio class counts differ");
  }
}

}  // namespace

// --- prompt table -----------------------------------------------------------

PromptTable PromptTable::llp_default() { return parse(kLlpPromptTable, "<builtin LLP prompt table>"); }

PromptTable PromptTable::parse(const std::string& text, const std::string& origin) {
  PromptTable table;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (!header_seen) {
      if (line != kPromptHeader) throw ParseError(where + ": expected prompt table header");
      header_seen = true;
      continue;
    }
    const auto f = split_tabs(line);
    if (f.size() != 5) throw ParseError(where + ": expected 5 tab-separated fields, got " + std::to_string(f.size()));
    PromptRow row{f[0], f[1], f[2], 0.0, 0.0};
    if (row.name.empty() || row.visual_caption.empty() || row.audio_caption.empty()) {
      throw ValidationError(where + ": class name and captions must be non-empty");
    }
    try {
      std::size_t used = 0;
      row.theta_visual = std::stod(f[3], &used);
      if (used != f[3].size()) throw std::invalid_argument("trailing");
      row.theta_audio = std::stod(f[4], &used);
      if (used != f[4].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError(where + ": thresholds must be numbers");
    }
    if (!std::isfinite(row.theta_visual) || !std::isfinite(row.theta_audio)) {
      throw ValidationError(where + ": thresholds must be finite");
    }
    table.rows.push_back(std::move(row));
  }
  if (!header_seen) throw ParseError(origin + ": empty prompt table");
  return table;
}

PromptTable PromptTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open prompt table " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string PromptTable::to_tsv() const {
  std::ostringstream os;
  os << kPromptHeader << "\n";
  for (const auto& r : rows) {
    os << r.name << '\t' << r.visual_caption << '\t' << r.audio_caption << '\t' << r.theta_visual << '\t'
       << r.theta_audio << '\n';
  }
  return os.str();
}

std::vector<std::string> PromptTable::class_names() const {
  std::vector<std::string> out;
  for (const auto& r : rows) out.push_back(r.name);
  return out;
}

Thresholds PromptTable::thresholds() const {
  Thresholds thr;
  for (const auto& r : rows) {
    thr.visual.push_back(r.theta_visual);
    thr.audio.push_back(r.theta_audio);
  }
  return thr;
}

// --- teacher logits ---------------------------------------------------------

RealMatrix teacher_logits_from_embeddings(const RealMatrix& frame_embs, const RealMatrix& class_embs) {
  if (frame_embs.cols() != class_embs.cols()) {
    throw DimensionError("teacher_logits_from_embeddings: frame embeddings have width " +
                         std::to_string(frame_embs.cols()) + ", class embeddings " +
                         std::to_string(class_embs.cols()));
  }
  RealMatrix z(frame_embs.rows(), class_embs.rows());
  for (std::size_t t = 0; t < frame_embs.rows(); ++t) {
    const auto f = frame_embs.row(t);
    for (std::size_t c = 0; c < class_embs.rows(); ++c) {
      const auto g = class_embs.row(c);
      double acc = 0.0;
      for (std::size_t k = 0; k < f.size(); ++k) acc += f[k] * g[k];
      z(t, c) = acc;
    }
  }
  return z;
}

// --- elaboration ------------------------------------------------------------

DenseLabels elaborate(const TeacherLogits& logits, const Thresholds& thresholds, const WeakLabel& weak,
                      const ElaborateOptions& opts) {
  check_logits(logits);
  const std::size_t T = logits.visual.rows();
  const std::size_t C = logits.visual.cols();
  if (thresholds.visual.size() != C || thresholds.audio.size() != C) {
    throw ValidationError("elaborate: " + std::to_string(thresholds.visual.size()) + " thresholds for " +
                          std::to_string(C) + " classes");
  }
  if (weak.size() != C) {
    throw ValidationError("elaborate: weak label has " + std::to_string(weak.size()) + " classes, logits have " +
                          std::to_string(C));
  }
  DenseLabels out{BinaryMatrix(T, C), BinaryMatrix(T, C)};
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      const bool allowed = !opts.video_filter || weak.has(c);
      const bool vis = logits.visual(t, c) > thresholds.visual[c];
      const bool aud = logits.audio(t, c) > thresholds.audio[c];
      if (opts.mode == ModalityMode::Aware) {
        out.visual(t, c) = vis && allowed;
        out.audio(t, c) = aud && allowed;
      } else {
        const std::uint8_t u = (vis || aud) && allowed;
        out.visual(t, c) = u;
        out.audio(t, c) = u;
      }
    }
  }
  return out;
}

std::vector<DenseLabels> elaborate_corpus(std::span<const VideoSample> samples, std::span<const TeacherLogits> logits,
                                          const Thresholds& thresholds, const ElaborateOptions& opts) {
  if (samples.size() != logits.size()) throw ValidationError("elaborate_corpus: sample and logit counts differ");
  std::vector<DenseLabels> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].video_id != logits[i].video_id) {
      throw ValidationError("elaborate_corpus: video " + samples[i].video_id + " paired with logits for " +
                            logits[i].video_id);
    }
    if (logits[i].segments() != samples[i].segments()) {
      throw ValidationError("elaborate_corpus: T mismatch for video " + samples[i].video_id);
    }
    out.push_back(elaborate(logits[i], thresholds, samples[i].weak, opts));
  }
  return out;
}

DenseLabels broadcast_weak(const WeakLabel& weak, std::size_t segments) {
  DenseLabels out{BinaryMatrix(segments, weak.size()), BinaryMatrix(segments, weak.size())};
  for (std::size_t t = 0; t < segments; ++t) {
    for (std::size_t c = 0; c < weak.size(); ++c) {
      out.audio(t, c) = weak.classes[c];
      out.visual(t, c) = weak.classes[c];
    }
  }
  return out;
}

std::vector<double> smooth_labels(const WeakLabel& weak, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon < 0.5)) {
    throw ConfigError("label smoothing epsilon must be in [0, 0.5), got " + std::to_string(epsilon));
  }
  std::vector<double> out(weak.size());
  for (std::size_t c = 0; c < weak.size(); ++c) {
    const double y = weak.has(c) ? 1.0 : 0.0;
    out[c] = y * (1.0 - epsilon) + (1.0 - y) * epsilon;
  }
  return out;
}

namespace {

RealMatrix row_softmax(const RealMatrix& z) {
  RealMatrix q(z.rows(), z.cols());
  for (std::size_t t = 0; t < z.rows(); ++t) {
    const auto row = z.row(t);
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      q(t, c) = std::exp(row[c] - mx);
      total += q(t, c);
    }
    for (std::size_t c = 0; c < row.size(); ++c) q(t, c) /= total;
  }
  return q;
}

}  // namespace

KdTargets kd_targets(const TeacherLogits& logits) {
  check_logits(logits);
  return {row_softmax(logits.visual), row_softmax(logits.audio)};
}

// --- calibration ------------------------------------------------------------

std::vector<double> grid_values(double lo, double hi, const CalibrationGrid& grid) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
    throw UsageError("calibration grid needs finite lo <= hi");
  }
  std::vector<double> out;
  if (grid.step > 0.0) {
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / grid.step + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) out.push_back(lo + static_cast<double>(i) * grid.step);
    return out;
  }
  if (grid.step < 0.0) throw UsageError("calibration grid step must be positive");
  if (grid.points == 0) throw UsageError("calibration grid needs at least one point");
  if (grid.points == 1 || lo == hi) return {hi};
  for (std::size_t i = 0; i < grid.points; ++i) {
    out.push_back(i + 1 == grid.points ? hi : lo + (hi - lo) * static_cast<double>(i) / (grid.points - 1));
  }
  return out;
}

namespace {

struct Cell {
  double z;
  bool gt;
  bool allowed;
};

CalibrationCell calibrate_one(const std::vector<Cell>& cells, const CalibrationGrid& grid) {
  double lo = grid.lo.value_or(0.0), hi = grid.hi.value_or(0.0);
  if (!grid.lo || !grid.hi) {
    double mn = cells.front().z, mx = cells.front().z;
    for (const auto& cell : cells) {
      mn = std::min(mn, cell.z);
      mx = std::max(mx, cell.z);
    }
    if (!grid.lo) lo = mn;
    if (!grid.hi) hi = mx;
  }
  CalibrationCell out;
  out.grid = grid_values(lo, hi, grid);
  out.absent = std::none_of(cells.begin(), cells.end(), [](const Cell& c) { return c.gt; });
  auto f_at = [&](double theta) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& cell : cells) {
      const bool pred = cell.allowed && cell.z > theta;
      tp += pred && cell.gt;
      fp += pred && !cell.gt;
      fn += !pred && cell.gt;
    }
    return tp + fp + fn == 0 ? 1.0 : 2.0 * tp / (2.0 * tp + fp + fn);
  };
  if (out.absent) {
    out.theta = out.grid.back();
    out.f_score = f_at(out.theta);
    return out;
  }
  out.f_score = -1.0;
  for (double theta : out.grid) {
    const double f = f_at(theta);
    if (f >= out.f_score) {
      out.f_score = f;
      out.theta = theta;
    }
  }
  return out;
}

}  // namespace

CalibrationResult calibrate_thresholds(std::span<const TeacherLogits> logits, std::span<const DenseLabels> dense_gt,
                                       std::span<const WeakLabel> weak, const CalibrationGrid& grid,
                                       bool video_filter) {
  if (logits.empty()) throw UsageError("calibrate_thresholds: empty corpus");
  if (logits.size() != dense_gt.size() || logits.size() != weak.size()) {
    throw ValidationError("calibrate_thresholds: logits, ground truth, and weak labels differ in length");
  }
  const std::size_t C = logits.front().visual.cols();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    check_logits(logits[i]);
    if (logits[i].visual.cols() != C || dense_gt[i].classes() != C || weak[i].size() != C) {
      throw ValidationError("calibrate_thresholds: class count mismatch at video " + logits[i].video_id);
    }
    if (dense_gt[i].segments() != logits[i].segments()) {
      throw ValidationError("calibrate_thresholds: T mismatch at video " + logits[i].video_id);
    }
  }
  CalibrationResult result;
  for (std::size_t c = 0; c < C; ++c) {
    std::vector<Cell> vis, aud;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const bool allowed = !video_filter || weak[i].has(c);
      for (std::size_t t = 0; t < logits[i].segments(); ++t) {
        vis.push_back({logits[i].visual(t, c), dense_gt[i].visual(t, c) != 0, allowed});
        aud.push_back({logits[i].audio(t, c), dense_gt[i].audio(t, c) != 0, allowed});
      }
    }
    result.visual.push_back(calibrate_one(vis, grid));
    result.audio.push_back(calibrate_one(aud, grid));
    result.thresholds.visual.push_back(result.visual.back().theta);
    result.thresholds.audio.push_back(result.audio.back().theta);
  }
  return result;
}

DenseLabels extend_background(const DenseLabels& dense) {
  const std::size_t T = dense.segments(), C = dense.classes();
  auto extend = [&](const BinaryMatrix& m) {
    BinaryMatrix out(T, C + 1);
    for (std::size_t t = 0; t < T; ++t) {
      bool any = false;
      for (std::size_t c = 0; c < C; ++c) {
        out(t, c) = m(t, c);
        any = any || m(t, c);
      }
      out(t, C) = any ? 0 : 1;
    }
    return out;
  };
  return {extend(dense.audio), extend(dense.visual)};
}

}  // namespace avp
