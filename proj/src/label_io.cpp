#include "avp/label_io.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "avp/errors.hpp"
#include "avp/tensor_io.hpp"

namespace avp {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

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

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

// --- teacher logits ---------------------------------------------------------

void write_teacher_logits(const std::filesystem::path& dir, std::span<const TeacherLogits> logits) {
  auto manifest = open_out(dir / "manifest.tsv");
  for (const auto& tl : logits) {
    if (tl.visual.rows() != tl.audio.rows() || tl.visual.cols() != tl.audio.cols()) {
      throw ValidationError("teacher logits for " + tl.video_id + ": visual and audio shapes differ");
    }
    save_tensor(dir / (tl.video_id + "_visual.avt"), to_tensor(tl.visual));
    save_tensor(dir / (tl.video_id + "_audio.avt"), to_tensor(tl.audio));
    manifest << tl.video_id << '\t' << tl.segments() << '\n';
  }
  if (!manifest) throw IoError("failed writing " + (dir / "manifest.tsv").string());
}

std::vector<TeacherLogits> read_teacher_logits(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.tsv";
  auto in = open_in(manifest_path);
  std::vector<TeacherLogits> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    const std::string where = manifest_path.string() + ":" + std::to_string(lineno);
    if (fields.size() != 2) throw ParseError(where + ": expected `video_id<TAB>T`");
    std::size_t segments = 0;
    try {
      segments = std::stoul(fields[1]);
    } catch (const std::exception&) {
      throw ParseError(where + ": bad segment count `" + fields[1] + "`");
    }
    TeacherLogits tl;
    tl.video_id = fields[0];
    tl.visual = to_matrix(load_tensor(dir / (tl.video_id + "_visual.avt")));
    tl.audio = to_matrix(load_tensor(dir / (tl.video_id + "_audio.avt")));
    if (tl.visual.rows() != segments || tl.audio.rows() != segments) {
      throw ValidationError(where + ": manifest says T=" + std::to_string(segments) + " but blobs have " +
                            std::to_string(tl.visual.rows()) + " (visual) and " + std::to_string(tl.audio.rows()) +
                            " (audio) rows");
    }
    if (tl.visual.cols() != tl.audio.cols()) throw ValidationError(where + ": visual and audio class counts differ");
    for (double v : tl.visual.data()) {
      if (!std::isfinite(v)) throw ValidationError(where + ": non-finite visual logit");
    }
    for (double v : tl.audio.data()) {
      if (!std::isfinite(v)) throw ValidationError(where + ": non-finite audio logit");
    }
    out.push_back(std::move(tl));
  }
  return out;
}

std::vector<TeacherLogits> align_logits(std::span<const VideoSample> samples, std::span<const TeacherLogits> logits,
                                        std::size_t num_classes) {
  std::map<std::string, const TeacherLogits*> by_id;
  for (const auto& tl : logits) by_id[tl.video_id] = &tl;
  std::vector<TeacherLogits> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const auto it = by_id.find(s.video_id);
    if (it == by_id.end()) throw ValidationError("no teacher logits for video " + s.video_id);
    const TeacherLogits& tl = *it->second;
    if (tl.segments() != s.segments()) {
      throw ValidationError("teacher logits for " + s.video_id + " have T=" + std::to_string(tl.segments()) +
                            ", features have T=" + std::to_string(s.segments()));
    }
    if (tl.visual.cols() != num_classes) {
      throw ValidationError("teacher logits for " + s.video_id + " have " + std::to_string(tl.visual.cols()) +
                            " classes, expected " + std::to_string(num_classes));
    }
    out.push_back(tl);
  }
  return out;
}

// --- dense labels -----------------------------------------------------------

void write_dense_labels(std::ostream& out, std::span<const LabeledVideo> videos) {
  auto rows = [&](char tag, const BinaryMatrix& m) {
    for (std::size_t t = 0; t < m.rows(); ++t) {
      out << tag << ':';
      for (std::size_t c = 0; c < m.cols(); ++c) out << ' ' << static_cast<int>(m(t, c));
      out << '\n';
    }
  };
  for (const auto& v : videos) {
    if (v.labels.audio.rows() != v.labels.visual.rows() || v.labels.audio.cols() != v.labels.visual.cols()) {
      throw ValidationError("dense labels for " + v.video_id + ": audio and visual shapes differ");
    }
    out << v.video_id << '\n';
    rows('A', v.labels.audio);
    rows('V', v.labels.visual);
  }
}

std::vector<LabeledVideo> read_dense_labels(std::istream& in, const std::string& origin) {
  std::vector<LabeledVideo> out;
  std::string line;
  int lineno = 0;
  LabeledVideo* current = nullptr;
  std::vector<std::vector<std::uint8_t>> audio_rows, visual_rows;
  std::size_t classes = 0;
  bool classes_known = false;

  auto where = [&](int n) { return origin + ":" + std::to_string(n); };
  auto to_matrix_rows = [](const std::vector<std::vector<std::uint8_t>>& rows, std::size_t cols) {
    BinaryMatrix m(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
    return m;
  };
  auto finish = [&](int at) {
    if (!current) return;
    if (audio_rows.empty()) throw ParseError(where(at) + ": video " + current->video_id + " has no A: rows");
    if (audio_rows.size() != visual_rows.size()) {
      throw ParseError(where(at) + ": video " + current->video_id + " has " + std::to_string(audio_rows.size()) +
                       " A: rows but " + std::to_string(visual_rows.size()) + " V: rows");
    }
    current->labels.audio = to_matrix_rows(audio_rows, classes);
    current->labels.visual = to_matrix_rows(visual_rows, classes);
    audio_rows.clear();
    visual_rows.clear();
  };

  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    const bool is_row = line.size() >= 2 && (line[0] == 'A' || line[0] == 'V') && line[1] == ':';
    if (!is_row) {
      finish(lineno);
      if (line.find_first_of(" \t") != std::string::npos) {
        throw ParseError(where(lineno) + ": video id may not contain whitespace: `" + line + "`");
      }
      out.push_back({line, {}});
      current = &out.back();
      continue;
    }
    if (!current) throw ParseError(where(lineno) + ": label row before any video id");
    const char tag = line[0];
    if (tag == 'A' && !visual_rows.empty()) {
      throw ParseError(where(lineno) + ": A: row after V: rows in video " + current->video_id);
    }
    std::vector<std::uint8_t> row;
    std::istringstream tokens(line.substr(2));
    std::string tok;
    while (tokens >> tok) {
      if (tok != "0" && tok != "1") {
        const auto col = line.find(tok, 2);
        throw ParseError(where(lineno) + ":" + std::to_string(col + 1) + ": expected 0 or 1, got `" + tok + "`");
      }
      row.push_back(tok == "1" ? 1 : 0);
    }
    if (row.empty()) throw ParseError(where(lineno) + ": empty label row");
    if (!classes_known) {
      classes = row.size();
      classes_known = true;
    } else if (row.size() != classes) {
      throw ParseError(where(lineno) + ": expected " + std::to_string(classes) + " labels, got " +
                       std::to_string(row.size()));
    }
    (tag == 'A' ? audio_rows : visual_rows).push_back(std::move(row));
  }
  finish(lineno + 1);
  return out;
}

void save_dense_labels(const std::filesystem::path& path, std::span<const LabeledVideo> videos) {
  auto out = open_out(path);
  write_dense_labels(out, videos);
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<LabeledVideo> load_dense_labels(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_dense_labels(in, path.string());
}

std::vector<DenseLabels> import_external_labels(const std::filesystem::path& path,
                                                std::span<const VideoSample> samples, std::size_t num_classes) {
  const auto loaded = load_dense_labels(path);
  std::map<std::string, const DenseLabels*> by_id;
  for (const auto& v : loaded) {
    if (!by_id.emplace(v.video_id, &v.labels).second) {
      throw ValidationError(path.string() + ": duplicate video " + v.video_id);
    }
  }
  std::vector<DenseLabels> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const auto it = by_id.find(s.video_id);
    if (it == by_id.end()) throw ValidationError(path.string() + ": no labels for video " + s.video_id);
    const DenseLabels& d = *it->second;
    if (d.segments() != s.segments() || d.classes() != num_classes) {
      throw ValidationError(path.string() + ": labels for " + s.video_id + " are " + std::to_string(d.segments()) +
                            "x" + std::to_string(d.classes()) + ", expected " + std::to_string(s.segments()) + "x" +
                            std::to_string(num_classes));
    }
    out.push_back(d);
  }
  return out;
}

// --- thresholds -------------------------------------------------------------

void save_thresholds(const std::filesystem::path& path, const Thresholds& thresholds,
                     std::span<const std::string> class_names) {
  if (thresholds.visual.size() != class_names.size() || thresholds.audio.size() != class_names.size()) {
    throw ValidationError("save_thresholds: class count mismatch");
  }
  auto out = open_out(path);
  out << "class\ttheta_visual\ttheta_audio\n" << std::setprecision(17);
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    out << class_names[c] << '\t' << thresholds.visual[c] << '\t' << thresholds.audio[c] << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Thresholds load_thresholds(const std::filesystem::path& path, std::span<const std::string> class_names) {
  auto in = open_in(path);
  std::string line;
  int lineno = 0;
  Thresholds thr;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    if (lineno == 1) {
      if (line != "class\ttheta_visual\ttheta_audio") {
        throw ParseError(path.string() + ":1: expected header `class<TAB>theta_visual<TAB>theta_audio`");
      }
      continue;
    }
    const auto fields = split_tabs(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (fields.size() != 3) throw ParseError(where + ": expected 3 tab-separated fields");
    const std::size_t idx = thr.visual.size();
    if (idx >= class_names.size() || fields[0] != class_names[idx]) {
      throw ValidationError(where + ": class `" + fields[0] + "` does not match class table entry " +
                            std::to_string(idx));
    }
    try {
      thr.visual.push_back(std::stod(fields[1]));
      thr.audio.push_back(std::stod(fields[2]));
    } catch (const std::exception&) {
      throw ParseError(where + ": bad threshold value");
    }
  }
  if (thr.visual.size() != class_names.size()) {
    throw ValidationError(path.string() + ": " + std::to_string(thr.visual.size()) + " thresholds for " +
                          std::to_string(class_names.size()) + " classes");
  }
  return thr;
}

}  // namespace avp
