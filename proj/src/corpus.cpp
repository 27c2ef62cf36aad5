#include "avp/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <boost/tokenizer.hpp>
#include <nlohmann/json.hpp>

#include "avp/errors.hpp"
#include "avp/label_io.hpp"
#include "avp/tensor_io.hpp"

namespace avp {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool parse_count(const std::string& s, std::size_t& out) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char ch) { return std::isdigit(ch); })) return false;
  out = std::stoul(s);
  return true;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// --- manifest ---------------------------------------------------------------

Manifest Manifest::parse(const std::string& text, const std::string& origin) {
  using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;
  Manifest m;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    bool open_quote = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '\\') ++i;
      else if (line[i] == '"') open_quote = !open_quote;
    }
    if (open_quote) throw ParseError(where + ": unterminated quote");
    std::vector<std::string> fields;
    try {
      Tokenizer tok(line, boost::escaped_list_separator<char>('\\', ',', '"'));
      for (const auto& f : tok) fields.push_back(trim(f));
    } catch (const boost::escaped_list_error& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (fields.empty() || fields[0].empty()) throw ParseError(where + ": missing video id");
    if (fields[0] == "video_id") continue;  // header
    ManifestRow row;
    row.video_id = fields[0];
    std::size_t first_event = 1;
    if (fields.size() > 1 && parse_count(fields[1], row.segments)) {
      if (row.segments == 0) throw ParseError(where + ": T must be positive");
      first_event = 2;
    }
    for (std::size_t i = first_event; i < fields.size(); ++i) {
      for (auto& e : split_commas(fields[i])) row.events.push_back(std::move(e));
    }
    if (!seen.insert(row.video_id).second) throw ParseError(where + ": duplicate video id " + row.video_id);
    m.rows.push_back(std::move(row));
  }
  return m;
}

Manifest Manifest::load(const std::filesystem::path& path) { return parse(read_text(path), path.string()); }

std::string Manifest::to_csv() const {
  std::ostringstream os;
  os << "video_id,T,events\n";
  for (const auto& r : rows) {
    os << r.video_id << ',';
    if (r.segments != 0) os << r.segments;
    os << ",\"";
    for (std::size_t i = 0; i < r.events.size(); ++i) os << (i ? "," : "") << r.events[i];
    os << "\"\n";
  }
  return os.str();
}

std::vector<std::string> load_class_table(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::vector<std::string> names;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    if (!seen.insert(line).second) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": duplicate class " + line);
    }
    names.push_back(line);
  }
  if (names.empty()) throw ParseError(path.string() + ": empty class table");
  return names;
}

void save_class_table(const std::filesystem::path& path, std::span<const std::string> names) {
  std::string text;
  for (const auto& n : names) text += n + "\n";
  write_text(path, text);
}

WeakLabel weak_from_names(std::span<const std::string> events, std::span<const std::string> class_names,
                          const std::string& where) {
  WeakLabel weak = WeakLabel::none(class_names.size());
  for (const auto& e : events) {
    const auto it = std::find(class_names.begin(), class_names.end(), e);
    if (it == class_names.end()) throw ParseError(where + ": unknown event `" + e + "`");
    weak.classes[static_cast<std::size_t>(it - class_names.begin())] = 1;
  }
  return weak;
}

// --- corpus -----------------------------------------------------------------

bool Corpus::has_dense_gt() const {
  return !samples.empty() &&
         std::all_of(samples.begin(), samples.end(), [](const VideoSample& s) { return s.dense_gt.has_value(); });
}

std::vector<DenseLabels> Corpus::dense_gt() const {
  std::vector<DenseLabels> out;
  for (const auto& s : samples) {
    if (!s.dense_gt) throw UsageError("video " + s.video_id + " has no dense ground truth");
    out.push_back(*s.dense_gt);
  }
  return out;
}

std::vector<WeakLabel> Corpus::weak_labels() const {
  std::vector<WeakLabel> out;
  for (const auto& s : samples) out.push_back(s.weak);
  return out;
}

Corpus Corpus::subset(std::span<const std::size_t> indices) const {
  Corpus out;
  out.class_names = class_names;
  for (std::size_t i : indices) out.samples.push_back(samples.at(i));
  return out;
}

Corpus load_corpus(const std::filesystem::path& manifest_path, const std::filesystem::path& feature_dir,
                   const std::filesystem::path& class_table, const std::optional<std::filesystem::path>& labels) {
  Corpus corpus;
  corpus.class_names = load_class_table(class_table);
  const Manifest manifest = Manifest::load(manifest_path);
  if (manifest.rows.empty()) corpus.warnings.push_back(manifest_path.string() + ": manifest lists no videos");

  std::map<std::string, DenseLabels> gt;
  if (labels) {
    for (auto& v : load_dense_labels(*labels)) {
      if (v.labels.classes() != corpus.num_classes()) {
        throw ValidationError(labels->string() + ": labels for " + v.video_id + " have " +
                              std::to_string(v.labels.classes()) + " classes, class table has " +
                              std::to_string(corpus.num_classes()));
      }
      gt.emplace(v.video_id, std::move(v.labels));
    }
  }

  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    const auto& row = manifest.rows[i];
    const std::string where = manifest_path.string() + " row " + std::to_string(i + 1) + " (" + row.video_id + ")";
    VideoSample s;
    s.video_id = row.video_id;
    s.weak = weak_from_names(row.events, corpus.class_names, where);
    s.feats_audio = load_tensor(feature_dir / (row.video_id + "_audio.avt"));
    s.feats_visual = load_tensor(feature_dir / (row.video_id + "_visual.avt"));
    if (s.feats_audio.rank() != 2 || s.feats_visual.rank() != 2) {
      throw ValidationError(where + ": feature tensors must be 2-D");
    }
    if (s.feats_audio.dim(0) != s.feats_visual.dim(0)) {
      throw ValidationError(where + ": audio has " + std::to_string(s.feats_audio.dim(0)) +
                            " segments, visual has " + std::to_string(s.feats_visual.dim(0)));
    }
    if (row.segments != 0 && row.segments != s.segments()) {
      throw ValidationError(where + ": manifest says T=" + std::to_string(row.segments) + ", features have T=" +
                            std::to_string(s.segments()));
    }
    if (labels) {
      const auto it = gt.find(row.video_id);
      if (it == gt.end()) throw ValidationError(where + ": no dense ground truth");
      if (it->second.segments() != s.segments()) {
        throw ValidationError(where + ": ground truth has T=" + std::to_string(it->second.segments()));
      }
      if (weak_from_dense(it->second) != s.weak) {
        throw ValidationError(where + ": manifest events disagree with the dense ground truth");
      }
      s.dense_gt = it->second;
    }
    corpus.samples.push_back(std::move(s));
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& dir) {
  const auto labels = dir / "labels_gt.txt";
  return load_corpus(dir / "manifest.csv", dir / "features", dir / "classes.txt",
                     std::filesystem::exists(labels) ? std::optional(labels) : std::nullopt);
}

SplitIndices split_corpus(const Corpus& corpus, std::array<double, 3> fractions, std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw UsageError("split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw UsageError("split fractions must sum to 1");
  const std::size_t n = corpus.samples.size();

  // Group by lowest-index event class (videos without events form their own group),
  // shuffle within groups, then deal the concatenation so every split receives
  // its share of each group.
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& cls = corpus.samples[i].weak.classes;
    const auto it = std::find(cls.begin(), cls.end(), 1);
    groups[static_cast<std::size_t>(it - cls.begin())].push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order;
  for (auto& [key, members] : groups) {
    std::shuffle(members.begin(), members.end(), rng);
    order.insert(order.end(), members.begin(), members.end());
  }

  std::array<std::size_t, 3> assigned{};
  SplitIndices out;
  std::array<std::vector<std::size_t>*, 3> dst = {&out.train, &out.val, &out.test};
  for (std::size_t p = 0; p < order.size(); ++p) {
    int best = -1;
    double best_deficit = -1e300;
    for (int s = 0; s < 3; ++s) {
      if (fractions[s] == 0.0) continue;
      const double deficit = fractions[s] * static_cast<double>(p + 1) - static_cast<double>(assigned[s]);
      if (deficit > best_deficit + 1e-12) {
        best_deficit = deficit;
        best = s;
      }
    }
    dst[best]->push_back(order[p]);
    ++assigned[best];
  }
  for (int s = 0; s < 3; ++s) {
    if (fractions[s] > 0.0 && assigned[s] == 0) {
      throw UsageError("split fraction " + std::to_string(fractions[s]) + " leaves split " + std::to_string(s) +
                       " empty for " + std::to_string(n) + " videos");
    }
    std::sort(dst[s]->begin(), dst[s]->end());
  }
  return out;
}

// --- synthetic spec ---------------------------------------------------------

void SyntheticSpec::validate() const {
  if (num_videos == 0 || segments == 0 || num_classes == 0) {
    throw ConfigError("synthetic spec: num_videos, segments, and num_classes must be positive");
  }
  if (min_events == 0 || min_events > max_events) throw ConfigError("synthetic spec: need 1 <= min_events <= max_events");
  if (max_events > num_classes) throw ConfigError("synthetic spec: max_events exceeds num_classes");
  for (double m : {mix_audio_only, mix_visual_only, mix_both}) {
    if (!(m >= 0.0)) throw ConfigError("synthetic spec: modality mix entries must be non-negative");
  }
  if (std::abs(mix_audio_only + mix_visual_only + mix_both - 1.0) > 1e-9) {
    throw ConfigError("synthetic spec: modality mix must sum to 1");
  }
  if (min_span == 0 || min_span > max_span) throw ConfigError("synthetic spec: need 1 <= min_span <= max_span");
  if (min_span > segments) throw ConfigError("synthetic spec: min_span exceeds segments");
  if (audio_feat_dim == 0 || visual_feat_dim == 0) throw ConfigError("synthetic spec: feature dims must be positive");
  if (!(feature_noise >= 0.0) || !std::isfinite(feature_noise)) {
    throw ConfigError("synthetic spec: feature_noise must be finite and non-negative");
  }
  if (!std::isfinite(teacher_pos_mean) || !std::isfinite(teacher_neg_mean)) {
    throw ConfigError("synthetic spec: teacher means must be finite");
  }
  if (teacher_noise) {
    if (!(*teacher_noise >= 0.0) || !std::isfinite(*teacher_noise)) {
      throw ConfigError("synthetic spec: teacher_noise must be finite and non-negative");
    }
  } else {
    if (!(teacher_accuracy > 0.5 && teacher_accuracy < 1.0)) {
      throw ConfigError("synthetic spec: teacher_accuracy must be in (0.5, 1)");
    }
    if (!(teacher_pos_mean > teacher_neg_mean)) {
      throw ConfigError("synthetic spec: teacher_accuracy needs teacher_pos_mean > teacher_neg_mean");
    }
  }
  for (const auto& [a, b] : confusable_pairs) {
    if (a >= num_classes || b >= num_classes || a == b) {
      throw ConfigError("synthetic spec: confusable pair " + std::to_string(a) + ":" + std::to_string(b) +
                        " is not a pair of distinct classes");
    }
  }
}

double SyntheticSpec::teacher_sigma() const {
  if (teacher_noise) return *teacher_noise;
  // Midpoint accuracy Phi((pos - neg) / (2 sigma)) = accuracy.
  const double z = boost::math::quantile(boost::math::normal(), teacher_accuracy);
  return (teacher_pos_mean - teacher_neg_mean) / (2.0 * z);
}

SyntheticSpec SyntheticSpec::from_config(const KeyValueConfig& cfg) {
  cfg.reject_unknown({"num_videos", "segments", "num_classes", "min_events", "max_events", "mix", "min_span",
                      "max_span", "audio_feat_dim", "visual_feat_dim", "feature_noise", "teacher_pos_mean",
                      "teacher_neg_mean", "teacher_accuracy", "teacher_noise", "confusable_pairs", "ave_mode",
                      "seed"});
  SyntheticSpec s;
  s.num_videos = cfg.get_uint("num_videos", s.num_videos);
  s.segments = cfg.get_uint("segments", s.segments);
  s.num_classes = cfg.get_uint("num_classes", s.num_classes);
  s.ave_mode = cfg.get_bool("ave_mode", s.ave_mode);
  if (s.ave_mode) {
    s.min_events = s.max_events = 1;
    s.mix_audio_only = s.mix_visual_only = 0.0;
    s.mix_both = 1.0;
  }
  s.min_events = cfg.get_uint("min_events", s.min_events);
  s.max_events = cfg.get_uint("max_events", s.max_events);
  const auto mix = cfg.get_doubles("mix", {s.mix_audio_only, s.mix_visual_only, s.mix_both});
  if (mix.size() != 3) throw ConfigError("synthetic spec: mix needs three values (audio_only, visual_only, both)");
  s.mix_audio_only = mix[0];
  s.mix_visual_only = mix[1];
  s.mix_both = mix[2];
  s.min_span = cfg.get_uint("min_span", s.min_span);
  s.max_span = cfg.get_uint("max_span", s.max_span);
  s.audio_feat_dim = cfg.get_uint("audio_feat_dim", s.audio_feat_dim);
  s.visual_feat_dim = cfg.get_uint("visual_feat_dim", s.visual_feat_dim);
  s.feature_noise = cfg.get_double("feature_noise", s.feature_noise);
  s.teacher_pos_mean = cfg.get_double("teacher_pos_mean", s.teacher_pos_mean);
  s.teacher_neg_mean = cfg.get_double("teacher_neg_mean", s.teacher_neg_mean);
  s.teacher_accuracy = cfg.get_double("teacher_accuracy", s.teacher_accuracy);
  if (cfg.has("teacher_noise")) s.teacher_noise = cfg.get_double("teacher_noise", 0.0);
  for (const auto& item : cfg.get_strings("confusable_pairs", {})) {
    const auto colon = item.find(':');
    std::size_t a = 0, b = 0;
    if (colon == std::string::npos || !parse_count(trim(item.substr(0, colon)), a) ||
        !parse_count(trim(item.substr(colon + 1)), b)) {
      throw ConfigError("synthetic spec: confusable pair `" + item + "` is not of the form a:b");
    }
    s.confusable_pairs.emplace_back(a, b);
  }
  s.seed = cfg.get_uint("seed", s.seed);
  s.validate();
  return s;
}

std::string SyntheticSpec::to_config_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "num_videos = " << num_videos << "\n"
     << "segments = " << segments << "\n"
     << "num_classes = " << num_classes << "\n"
     << "min_events = " << min_events << "\n"
     << "max_events = " << max_events << "\n"
     << "mix = " << mix_audio_only << ", " << mix_visual_only << ", " << mix_both << "\n"
     << "min_span = " << min_span << "\n"
     << "max_span = " << max_span << "\n"
     << "audio_feat_dim = " << audio_feat_dim << "\n"
     << "visual_feat_dim = " << visual_feat_dim << "\n"
     << "feature_noise = " << feature_noise << "\n"
     << "teacher_pos_mean = " << teacher_pos_mean << "\n"
     << "teacher_neg_mean = " << teacher_neg_mean << "\n";
  if (teacher_noise) {
    os << "teacher_noise = " << *teacher_noise << "\n";
  } else {
    os << "teacher_accuracy = " << teacher_accuracy << "\n";
  }
  if (!confusable_pairs.empty()) {
    os << "confusable_pairs = ";
    for (std::size_t i = 0; i < confusable_pairs.size(); ++i) {
      os << (i ? ", " : "") << confusable_pairs[i].first << ":" << confusable_pairs[i].second;
    }
    os << "\n";
  }
  os << "ave_mode = " << (ave_mode ? "true" : "false") << "\n"
     << "seed = " << seed << "\n";
  return os.str();
}

// --- bookkeeping ------------------------------------------------------------

double Bookkeeping::nonaligned_fraction() const {
  return segment_events == 0 ? 0.0
                             : static_cast<double>(nonaligned_segment_events) / static_cast<double>(segment_events);
}

std::string Bookkeeping::to_json() const {
  json j{{"videos", videos},
         {"events", events},
         {"audio_only_events", audio_only_events},
         {"visual_only_events", visual_only_events},
         {"both_events", both_events},
         {"segment_events", segment_events},
         {"nonaligned_segment_events", nonaligned_segment_events},
         {"class_events", class_events}};
  return j.dump(2) + "\n";
}

Bookkeeping Bookkeeping::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    Bookkeeping b;
    b.videos = j.at("videos").get<std::size_t>();
    b.events = j.at("events").get<std::size_t>();
    b.audio_only_events = j.at("audio_only_events").get<std::size_t>();
    b.visual_only_events = j.at("visual_only_events").get<std::size_t>();
    b.both_events = j.at("both_events").get<std::size_t>();
    b.segment_events = j.at("segment_events").get<std::size_t>();
    b.nonaligned_segment_events = j.at("nonaligned_segment_events").get<std::size_t>();
    b.class_events = j.at("class_events").get<std::vector<std::size_t>>();
    return b;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bookkeeping: ") + e.what());
  }
}

// --- generator --------------------------------------------------------------

std::vector<std::string> synthetic_class_names(std::size_t num_classes) {
  static const std::vector<std::string> llp = {
      "Speech",         "Car",           "Cheering",        "Dog",
      "Cat",            "Frying_(food)", "Basketball_bounce", "Fire_alarm",
      "Chainsaw",       "Cello",         "Banjo",           "Singing",
      "Chicken_rooster", "Violin_fiddle", "Vacuum_cleaner", "Baby_laughter",
      "Accordion",      "Lawn_mower",    "Motorcycle",      "Helicopter",
      "Acoustic_guitar", "Telephone_bell_ringing", "Baby_cry_infant_cry", "Blender",
      "Clapping"};
  if (num_classes == llp.size()) return llp;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < num_classes; ++c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "c%02zu", c);
    names.emplace_back(buf);
  }
  return names;
}

namespace {

enum class EventModality { AudioOnly, VisualOnly, Both };

double as_float(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t T = spec.segments, C = spec.num_classes;
  const double sigma = spec.teacher_sigma();

  RealMatrix proto_audio(C, spec.audio_feat_dim), proto_visual(C, spec.visual_feat_dim);
  for (double& v : proto_audio.data()) v = gauss(rng);
  for (double& v : proto_visual.data()) v = gauss(rng);

  SyntheticCorpus out;
  out.corpus.class_names = synthetic_class_names(C);
  out.bookkeeping.videos = spec.num_videos;
  out.bookkeeping.class_events.assign(C, 0);
  auto& book = out.bookkeeping;

  std::vector<std::size_t> class_pool(C);
  for (std::size_t v = 0; v < spec.num_videos; ++v) {
    char id[32];
    std::snprintf(id, sizeof id, "syn%05zu", v);
    DenseLabels dense{BinaryMatrix(T, C), BinaryMatrix(T, C)};

    const std::size_t n_events =
        spec.ave_mode ? 1 : std::uniform_int_distribution<std::size_t>(spec.min_events, spec.max_events)(rng);
    std::iota(class_pool.begin(), class_pool.end(), std::size_t{0});
    for (std::size_t k = 0; k < n_events; ++k) {
      const std::size_t pick = std::uniform_int_distribution<std::size_t>(k, C - 1)(rng);
      std::swap(class_pool[k], class_pool[pick]);
      const std::size_t c = class_pool[k];

      const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      const EventModality modality = spec.ave_mode              ? EventModality::Both
                                     : u < spec.mix_audio_only                          ? EventModality::AudioOnly
                                     : u < spec.mix_audio_only + spec.mix_visual_only ? EventModality::VisualOnly
                                                                                      : EventModality::Both;
      const std::size_t max_len = std::min(spec.max_span, T);
      const std::size_t len = std::uniform_int_distribution<std::size_t>(spec.min_span, max_len)(rng);
      const std::size_t start = std::uniform_int_distribution<std::size_t>(0, T - len)(rng);
      for (std::size_t t = start; t < start + len; ++t) {
        if (modality != EventModality::VisualOnly) dense.audio(t, c) = 1;
        if (modality != EventModality::AudioOnly) dense.visual(t, c) = 1;
      }
      ++book.events;
      ++book.class_events[c];
      book.segment_events += len;
      switch (modality) {
        case EventModality::AudioOnly:
          ++book.audio_only_events;
          book.nonaligned_segment_events += len;
          break;
        case EventModality::VisualOnly:
          ++book.visual_only_events;
          book.nonaligned_segment_events += len;
          break;
        case EventModality::Both:
          ++book.both_events;
          break;
      }
    }

    auto features = [&](const BinaryMatrix& active, const RealMatrix& proto) {
      const std::size_t d = proto.cols();
      std::vector<double> values(T * d, 0.0);
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t c = 0; c < C; ++c) {
          if (!active(t, c)) continue;
          for (std::size_t k = 0; k < d; ++k) values[t * d + k] += proto(c, k);
        }
        for (std::size_t k = 0; k < d; ++k) values[t * d + k] = as_float(values[t * d + k] + spec.feature_noise * gauss(rng));
      }
      return Tensor({T, d}, std::move(values));
    };

    VideoSample s;
    s.video_id = id;
    s.feats_audio = features(dense.audio, proto_audio);
    s.feats_visual = features(dense.visual, proto_visual);

    TeacherLogits tl{id, RealMatrix(T, C), RealMatrix(T, C)};
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t c = 0; c < C; ++c) {
        const double mean = dense.visual(t, c) ? spec.teacher_pos_mean : spec.teacher_neg_mean;
        tl.visual(t, c) = as_float(mean + sigma * gauss(rng));
      }
      for (std::size_t c = 0; c < C; ++c) {
        bool positive = dense.audio(t, c) != 0;
        for (const auto& [a, b] : spec.confusable_pairs) {
          if ((c == b && dense.audio(t, a)) || (c == a && dense.audio(t, b))) positive = true;
        }
        const double mean = positive ? spec.teacher_pos_mean : spec.teacher_neg_mean;
        tl.audio(t, c) = as_float(mean + sigma * gauss(rng));
      }
    }

    s.weak = weak_from_dense(dense);
    s.dense_gt = std::move(dense);
    out.corpus.samples.push_back(std::move(s));
    out.teacher.push_back(std::move(tl));
  }
  return out;
}

void write_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus, const SyntheticSpec& spec) {
  ensure_dir(dir / "features");
  const auto& names = corpus.corpus.class_names;
  Manifest manifest;
  std::vector<LabeledVideo> labels;
  for (const auto& s : corpus.corpus.samples) {
    ManifestRow row{s.video_id, s.segments(), {}};
    for (std::size_t c = 0; c < names.size(); ++c) {
      if (s.weak.has(c)) row.events.push_back(names[c]);
    }
    manifest.rows.push_back(std::move(row));
    save_tensor(dir / "features" / (s.video_id + "_audio.avt"), s.feats_audio);
    save_tensor(dir / "features" / (s.video_id + "_visual.avt"), s.feats_visual);
    labels.push_back({s.video_id, *s.dense_gt});
  }
  write_text(dir / "manifest.csv", manifest.to_csv());
  save_class_table(dir / "classes.txt", names);
  save_dense_labels(dir / "labels_gt.txt", labels);
  write_teacher_logits(dir / "teacher", corpus.teacher);
  write_text(dir / "bookkeeping.json", corpus.bookkeeping.to_json());
  write_text(dir / "spec.txt", spec.to_config_text());
}

}  // namespace avp
