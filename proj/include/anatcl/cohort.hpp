#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "anatcl/anatomy/roi_table.hpp"
#include "anatcl/error.hpp"
#include "anatcl/io.hpp"
#include "anatcl/numgrad/tensor.hpp"

namespace anatcl::cohort {

using numgrad::Tensor;

struct Subject {
  std::string id;
  std::vector<double> x;
  double age = 0.0;
  int sex = 0;
  /// Phenotype values keyed by label name; binary labels hold 0 or 1.
  std::map<std::string, double> labels;
  friend bool operator==(const Subject&, const Subject&) = default;
};

inline constexpr double kMinAge = 5.0;
inline constexpr double kMaxAge = 95.0;

class Cohort {
 public:
  Cohort() = default;
  Cohort(std::vector<Subject> subjects, std::optional<anatomy::RoiTable> roi)
      : subjects_(std::move(subjects)), roi_(std::move(roi)) {
    validate();
  }

  const std::vector<Subject>& subjects() const noexcept { return subjects_; }
  std::vector<Subject>& mutable_subjects() noexcept { return subjects_; }
  const Subject& operator[](std::size_t i) const { return subjects_[i]; }
  std::size_t size() const noexcept { return subjects_.size(); }
  std::size_t input_dim() const { return subjects_.empty() ? 0 : subjects_[0].x.size(); }
  const std::optional<anatomy::RoiTable>& roi() const noexcept { return roi_; }

  std::vector<std::string> label_names() const {
    std::vector<std::string> out;
    if (!subjects_.empty())
      for (const auto& [k, v] : subjects_[0].labels) out.push_back(k);
    return out;
  }

  bool has_label(const std::string& name) const {
    return !subjects_.empty() && subjects_[0].labels.count(name) != 0;
  }

  std::vector<std::string> ids(std::span<const std::size_t> rows) const {
    std::vector<std::string> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(subjects_[r].id);
    return out;
  }
  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& s : subjects_) out.push_back(s.id);
    return out;
  }

  Tensor features(std::span<const std::size_t> rows) const {
    const std::size_t d = input_dim();
    Tensor out = Tensor::zeros({rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i)
      std::copy(subjects_[rows[i]].x.begin(), subjects_[rows[i]].x.end(), out.row(i).begin());
    return out;
  }
  Tensor features() const { return features(all_rows()); }

  std::vector<double> ages(std::span<const std::size_t> rows) const {
    std::vector<double> out;
    for (auto r : rows) out.push_back(subjects_[r].age);
    return out;
  }
  std::vector<double> ages() const { return ages(all_rows()); }

  /// Label values for every subject; "age" and "sex" are accepted as names.
  std::vector<double> label(const std::string& name) const {
    std::vector<double> out;
    out.reserve(subjects_.size());
    for (const auto& s : subjects_) {
      if (name == "age") {
        out.push_back(s.age);
      } else if (name == "sex") {
        out.push_back(s.sex);
      } else {
        auto it = s.labels.find(name);
        if (it == s.labels.end()) throw Error(ErrorKind::label_missing, "cohort has no label '" + name + "'");
        out.push_back(it->second);
      }
    }
    if (subjects_.empty()) throw Error(ErrorKind::label_missing, "cohort is empty");
    return out;
  }

  std::vector<std::size_t> all_rows() const {
    std::vector<std::size_t> r(subjects_.size());
    std::iota(r.begin(), r.end(), 0);
    return r;
  }

  friend bool operator==(const Cohort& a, const Cohort& b) {
    return a.subjects_ == b.subjects_ && a.roi_ == b.roi_;
  }

 private:
  void validate() const {
    std::unordered_map<std::string, std::size_t> seen;
    const std::size_t width = input_dim();
    const auto names = label_names();
    for (const auto& s : subjects_) {
      if (!seen.emplace(s.id, 0).second) throw Error(ErrorKind::id_mismatch, "duplicate subject id '" + s.id + "'");
      if (s.x.size() != width) throw Error(ErrorKind::width_mismatch, "subject '" + s.id + "' has a different x width");
      if (!(s.age >= kMinAge && s.age <= kMaxAge)) {
        throw Error(ErrorKind::malformed_row, "subject '" + s.id + "' age outside [5, 95]");
      }
      if (s.labels.size() != names.size()) {
        throw Error(ErrorKind::label_missing, "subject '" + s.id + "' has a different label set");
      }
    }
    if (roi_) {
      for (const auto& s : subjects_)
        if (!roi_->contains(s.id)) throw Error(ErrorKind::id_mismatch, "roi.csv has no entries for subject '" + s.id + "'");
    }
  }

  std::vector<Subject> subjects_;
  std::optional<anatomy::RoiTable> roi_;
};

// ---------------------------------------------------------------------------
// Synthetic generator

enum class Latent { age, size, thickness, nuisance, none };

inline std::string_view to_string(Latent l) {
  switch (l) {
    case Latent::age: return "age";
    case Latent::size: return "size";
    case Latent::thickness: return "thickness";
    case Latent::nuisance: return "nuisance";
    case Latent::none: return "none";
  }
  return "?";
}

inline std::optional<Latent> parse_latent(std::string_view s) {
  for (Latent l : {Latent::age, Latent::size, Latent::thickness, Latent::nuisance, Latent::none})
    if (to_string(l) == s) return l;
  return std::nullopt;
}

/// label = 1 when (standardized factor + noise * N(0,1)) > threshold. The
/// factor `none` makes a label independent of every input.
struct LabelRule {
  std::string name;
  Latent factor = Latent::none;
  double threshold = 0.0;
  double noise = 0.0;
  friend bool operator==(const LabelRule&, const LabelRule&) = default;
};

inline std::vector<LabelRule> default_label_rules() {
  return {
      {"dx_neuro", Latent::thickness, 0.5, 0.5},
      {"dx_size", Latent::size, 0.0, 0.5},
      {"coin", Latent::none, 0.0, 1.0},
  };
}

/// name:factor:threshold:noise entries separated by commas.
inline std::vector<LabelRule> parse_label_rules(std::string_view text) {
  std::vector<LabelRule> rules;
  if (io::trim(text).empty()) return rules;
  for (auto entry : io::split(text, ',')) {
    auto parts = io::split(io::trim(entry), ':');
    auto bad = [&] {
      return Error(ErrorKind::type_error, "label_rules: expected name:factor:threshold:noise, got '" +
                                              std::string(io::trim(entry)) + "'");
    };
    if (parts.size() != 4) throw bad();
    auto factor = parse_latent(io::trim(parts[1]));
    auto thr = io::parse_double(parts[2]);
    auto noise = io::parse_double(parts[3]);
    if (io::trim(parts[0]).empty() || !factor || !thr || !noise || !(*noise >= 0.0)) throw bad();
    rules.push_back({std::string(io::trim(parts[0])), *factor, *thr, *noise});
  }
  return rules;
}

inline std::string format_label_rules(const std::vector<LabelRule>& rules) {
  std::string out;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    if (i) out += ',';
    out += rules[i].name + ":" + std::string(to_string(rules[i].factor)) + ":" +
           io::format_double(rules[i].threshold) + ":" + io::format_double(rules[i].noise);
  }
  return out;
}

struct SyntheticConfig {
  std::size_t n_subjects = 2000;
  std::size_t input_dim = 128;
  anatomy::Atlas atlas = anatomy::Atlas::desikan();
  anatomy::MeasureSet measures = anatomy::MeasureSet::all_seven();
  double noise_scale = 1.0;
  std::vector<LabelRule> label_rules = default_label_rules();
  std::uint64_t seed = 0;

  void validate() const {
    if (n_subjects < 10) throw Error(ErrorKind::invalid_config, "n_subjects must be >= 10");
    if (input_dim < 1) throw Error(ErrorKind::invalid_config, "input_dim must be >= 1");
    if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale))
      throw Error(ErrorKind::invalid_config, "noise_scale must be >= 0");
    for (std::size_t i = 0; i < label_rules.size(); ++i) {
      const auto& n = label_rules[i].name;
      if (n == "age" || n == "sex" || n == "id")
        throw Error(ErrorKind::invalid_config, "label name '" + n + "' is reserved");
      for (std::size_t j = 0; j < i; ++j)
        if (label_rules[j].name == n) throw Error(ErrorKind::invalid_config, "duplicate label '" + n + "'");
    }
  }

  friend bool operator==(const SyntheticConfig&, const SyntheticConfig&) = default;
};

inline constexpr std::size_t kNuisanceFactors = 6;

namespace detail {

struct RoiProfile {
  double base;
  double age_slope;
};

/// Per-measure generative constants: baseline range, age effect (log scale
/// per standardized age unit), size effect, thickness effect, noise.
struct MeasureModel {
  double base_lo, base_hi;
  double age_effect;
  double size_effect;
  double thickness_effect;
  double noise;
};

inline MeasureModel measure_model(anatomy::Measure m) {
  using anatomy::Measure;
  switch (m) {
    case Measure::ct_mean: return {2.0, 3.2, -0.08, 0.0, 0.06, 0.06};
    case Measure::ct_std: return {0.5, 0.8, 0.01, 0.0, 0.03, 0.06};
    case Measure::gmv: return {3000.0, 12000.0, -0.12, 0.12, 0.02, 0.03};
    case Measure::surface_area: return {500.0, 3000.0, -0.04, 0.12, 0.0, 0.04};
    case Measure::integrated_mean_curv: return {1.0, 10.0, 0.02, 0.0, 0.0, 0.1};
    case Measure::gaussian_curv_index: return {0.5, 5.0, 0.0, 0.0, 0.0, 0.2};
    case Measure::intrinsic_curv_index: return {0.5, 5.0, 0.015, 0.0, 0.0, 0.1};
  }
  return {1, 1, 0, 0, 0, 0};
}

}  // namespace detail

/// Latent factor model. Per subject: age ~ U[6, 88], sex ~ Bernoulli(0.5),
/// a size factor shifted by sex, a thickness factor and six nuisance
/// factors, all standard normal. Each ROI measure is
///   base_k * exp(age_effect * slope_k * a + size_effect * s + thickness_effect * t + noise * e)
/// with a the standardized age, so thickness falls with age and GMV/SA grow
/// with size. x mixes [a, s, t, nuisance..., mean log-GMV deviation] through
/// a fixed random matrix, plus noise_scale * N(0, 1) per coordinate.
inline Cohort generate(const SyntheticConfig& config) {
  config.validate();
  using anatomy::Measure;
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t K = config.atlas.roi_count, N = config.measures.size();
  // ROI profiles are drawn in canonical measure order so a given seed gives
  // the same anatomy regardless of which measures are kept.
  std::map<Measure, std::vector<detail::RoiProfile>> profiles;
  for (Measure m : anatomy::kAllMeasures) {
    const auto mm = detail::measure_model(m);
    auto& pr = profiles[m];
    for (std::size_t k = 0; k < K; ++k) {
      const double base = mm.base_lo + (mm.base_hi - mm.base_lo) * unit(rng);
      pr.push_back({base, 0.4 + 1.2 * unit(rng)});
    }
  }
  constexpr std::size_t kLatent = 3 + kNuisanceFactors + 1;
  const std::size_t D = config.input_dim;
  std::vector<double> mixing(D * kLatent);
  std::vector<double> column_scale(kLatent, 1.0);
  column_scale[0] = 1.0;  // age
  column_scale[1] = 1.0;  // size
  column_scale[2] = 0.7;  // thickness
  for (std::size_t u = 0; u < kNuisanceFactors; ++u) column_scale[3 + u] = 2.0;
  column_scale[kLatent - 1] = 0.5;  // ROI summary
  for (std::size_t r = 0; r < D; ++r)
    for (std::size_t c = 0; c < kLatent; ++c) mixing[r * kLatent + c] = column_scale[c] * gauss(rng);
  std::vector<double> offset(D);
  for (auto& o : offset) o = gauss(rng);

  constexpr double kAgeMean = 47.0, kAgeStd = 82.0 / 3.4641016151377544;  // U[6, 88]
  const std::size_t n = config.n_subjects;
  std::vector<Subject> subjects(n);
  std::vector<double> roi_values(n * K * N);
  for (std::size_t i = 0; i < n; ++i) {
    Subject& s = subjects[i];
    s.id = "sub-" + std::string(5 - std::min<std::size_t>(5, std::to_string(i).size()), '0') + std::to_string(i);
    s.age = 6.0 + 82.0 * unit(rng);
    s.sex = unit(rng) < 0.5 ? 0 : 1;
    const double a = (s.age - kAgeMean) / kAgeStd;
    const double size = gauss(rng) + 0.5 * (2.0 * s.sex - 1.0);
    const double thick = gauss(rng);
    std::array<double, kNuisanceFactors> nuisance{};
    for (auto& u : nuisance) u = gauss(rng);

    // Every measure's noise is drawn, kept or not, for the same reason as above.
    double gmv_dev = 0.0;
    for (Measure m : anatomy::kAllMeasures) {
      const auto mm = detail::measure_model(m);
      const auto& pr = profiles[m];
      const auto col = config.measures.index_of(m);
      for (std::size_t k = 0; k < K; ++k) {
        const double logdev = mm.age_effect * pr[k].age_slope * a + mm.size_effect * size +
                              mm.thickness_effect * thick + mm.noise * config.noise_scale * gauss(rng);
        if (m == Measure::gmv) gmv_dev += logdev / static_cast<double>(K);
        if (col) roi_values[(i * K + k) * N + *col] = pr[k].base * std::exp(logdev);
      }
    }

    std::array<double, kLatent> latent{};
    latent[0] = a;
    latent[1] = size;
    latent[2] = thick;
    for (std::size_t u = 0; u < kNuisanceFactors; ++u) latent[3 + u] = nuisance[u];
    latent[kLatent - 1] = gmv_dev / 0.12;
    s.x.resize(D);
    for (std::size_t r = 0; r < D; ++r) {
      double v = offset[r];
      for (std::size_t c = 0; c < kLatent; ++c) v += mixing[r * kLatent + c] * latent[c];
      s.x[r] = v + config.noise_scale * gauss(rng);
    }

    for (const auto& rule : config.label_rules) {
      double f = 0.0;
      switch (rule.factor) {
        case Latent::age: f = a; break;
        case Latent::size: f = size; break;
        case Latent::thickness: f = thick; break;
        case Latent::nuisance: f = nuisance[0]; break;
        case Latent::none: f = 0.0; break;
      }
      s.labels[rule.name] = (f + rule.noise * gauss(rng) > rule.threshold) ? 1.0 : 0.0;
    }
  }
  std::vector<std::string> ids;
  for (const auto& s : subjects) ids.push_back(s.id);
  return Cohort(std::move(subjects), anatomy::RoiTable(config.atlas, config.measures, ids, std::move(roi_values)));
}

// ---------------------------------------------------------------------------
// Files

inline std::string subjects_csv(const Cohort& c) {
  std::string out = "id,age,sex";
  const auto names = c.label_names();
  for (const auto& n : names) out += "," + n;
  out += '\n';
  for (const auto& s : c.subjects()) {
    out += s.id + "," + io::format_double(s.age) + "," + std::to_string(s.sex);
    for (const auto& n : names) out += "," + io::format_double(s.labels.at(n));
    out += '\n';
  }
  return out;
}

inline std::string features_csv(const Cohort& c) {
  std::string out = "id";
  for (std::size_t j = 0; j < c.input_dim(); ++j) out += ",x_" + std::to_string(j);
  out += '\n';
  for (const auto& s : c.subjects()) {
    out += s.id;
    for (double v : s.x) {
      out += ',';
      out += io::format_double(v);
    }
    out += '\n';
  }
  return out;
}

inline void save(const Cohort& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  io::write_file_atomic(dir / "subjects.csv", subjects_csv(c));
  io::write_file_atomic(dir / "features.csv", features_csv(c));
  if (c.roi()) io::write_file_atomic(dir / "roi.csv", anatomy::to_csv(*c.roi()));
}

namespace detail {

inline Error row_error(const std::string& file, std::size_t line, const std::string& msg) {
  return Error(ErrorKind::malformed_row, file + " line " + std::to_string(line) + ": " + msg);
}

inline double parse_field(std::string_view f, const std::string& file, std::size_t line, const std::string& what) {
  auto v = io::parse_double(f);
  if (!v || !std::isfinite(*v)) throw row_error(file, line, what + " '" + std::string(f) + "' is not a number");
  return *v;
}

}  // namespace detail

inline Cohort load(const std::filesystem::path& dir) {
  const auto subj_lines = io::read_lines(dir / "subjects.csv");
  const auto feat_lines = io::read_lines(dir / "features.csv");
  if (subj_lines.empty()) throw detail::row_error("subjects.csv", 1, "missing header");
  auto header = io::split(io::trim(subj_lines[0]));
  if (header.size() < 3 || io::trim(header[0]) != "id" || io::trim(header[1]) != "age" ||
      io::trim(header[2]) != "sex") {
    throw detail::row_error("subjects.csv", 1, "header must start with id,age,sex");
  }
  std::vector<std::string> label_names;
  for (std::size_t i = 3; i < header.size(); ++i) label_names.emplace_back(io::trim(header[i]));

  std::vector<Subject> subjects;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t ln = 1; ln < subj_lines.size(); ++ln) {
    const auto line = io::trim(subj_lines[ln]);
    if (line.empty()) continue;
    auto f = io::split(line);
    if (f.size() != header.size()) {
      throw detail::row_error("subjects.csv", ln + 1, "expected " + std::to_string(header.size()) + " fields");
    }
    Subject s;
    s.id = std::string(io::trim(f[0]));
    if (s.id.empty()) throw detail::row_error("subjects.csv", ln + 1, "empty id");
    s.age = detail::parse_field(f[1], "subjects.csv", ln + 1, "age");
    if (!(s.age >= kMinAge && s.age <= kMaxAge)) {
      throw detail::row_error("subjects.csv", ln + 1, "age outside [5, 95]");
    }
    const double sex = detail::parse_field(f[2], "subjects.csv", ln + 1, "sex");
    if (sex != 0.0 && sex != 1.0) throw detail::row_error("subjects.csv", ln + 1, "sex must be 0 or 1");
    s.sex = static_cast<int>(sex);
    for (std::size_t i = 0; i < label_names.size(); ++i)
      s.labels[label_names[i]] = detail::parse_field(f[3 + i], "subjects.csv", ln + 1, label_names[i]);
    if (!index.emplace(s.id, subjects.size()).second) {
      throw Error(ErrorKind::id_mismatch, "subjects.csv line " + std::to_string(ln + 1) + ": duplicate id '" +
                                              s.id + "'");
    }
    subjects.push_back(std::move(s));
  }

  if (feat_lines.empty()) throw detail::row_error("features.csv", 1, "missing header");
  const std::size_t width = io::split(io::trim(feat_lines[0])).size();
  if (width < 2) throw detail::row_error("features.csv", 1, "header needs id and at least one x column");
  std::vector<char> have(subjects.size(), 0);
  for (std::size_t ln = 1; ln < feat_lines.size(); ++ln) {
    const auto line = io::trim(feat_lines[ln]);
    if (line.empty()) continue;
    auto f = io::split(line);
    if (f.size() != width) {
      throw detail::row_error("features.csv", ln + 1, "expected " + std::to_string(width) + " fields");
    }
    const std::string id(io::trim(f[0]));
    auto it = index.find(id);
    if (it == index.end()) {
      throw Error(ErrorKind::id_mismatch, "features.csv line " + std::to_string(ln + 1) + ": subject '" + id +
                                              "' not in subjects.csv");
    }
    if (have[it->second]) {
      throw Error(ErrorKind::id_mismatch, "features.csv line " + std::to_string(ln + 1) + ": duplicate id '" +
                                              id + "'");
    }
    have[it->second] = 1;
    auto& x = subjects[it->second].x;
    x.reserve(width - 1);
    for (std::size_t j = 1; j < width; ++j) x.push_back(detail::parse_field(f[j], "features.csv", ln + 1, "value"));
  }
  for (std::size_t i = 0; i < subjects.size(); ++i)
    if (!have[i]) throw Error(ErrorKind::id_mismatch, "features.csv has no row for subject '" + subjects[i].id + "'");

  std::optional<anatomy::RoiTable> roi;
  if (std::filesystem::exists(dir / "roi.csv")) {
    auto table = anatomy::load_roi_csv(dir / "roi.csv");
    for (const auto& s : subjects)
      if (!table.contains(s.id)) {
        throw Error(ErrorKind::id_mismatch, "roi.csv has no entries for subject '" + s.id + "'");
      }
    std::vector<std::string> ids;
    for (const auto& s : subjects) ids.push_back(s.id);
    roi = table.subset(ids);
  }
  return Cohort(std::move(subjects), std::move(roi));
}

// ---------------------------------------------------------------------------
// Views, folds, embeddings

/// x + N(0, (strength * std(x))^2) per coordinate, then each coordinate
/// zeroed with probability `dropout`. std is the population std of x.
inline std::vector<double> augment(std::span<const double> x, double strength, std::uint64_t seed,
                                   double dropout = 0.1) {
  if (!(strength >= 0.0)) throw Error(ErrorKind::domain_error, "augment strength must be >= 0");
  std::mt19937_64 rng(seed);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(std::max<std::size_t>(1, x.size()));
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(std::max<std::size_t>(1, x.size())));
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out(x.begin(), x.end());
  for (auto& v : out) {
    // Both draws always happen so the stream does not depend on the settings.
    const double noise = g(rng);
    const double keep = u(rng);
    if (strength > 0.0) v += strength * sd * noise;
    if (keep < dropout) v = 0.0;
  }
  return out;
}

/// k disjoint folds covering [0, n). With labels, each class is shuffled
/// and the classes are dealt round-robin in turn, so every fold holds its
/// share of each class within one subject.
inline std::vector<std::vector<std::size_t>> split_folds(std::size_t n, std::size_t k, std::uint64_t seed,
                                                         const std::vector<double>* labels = nullptr) {
  if (k < 2) throw Error(ErrorKind::invalid_config, "folds must be >= 2");
  if (n < k) throw Error(ErrorKind::invalid_config, "fewer subjects than folds");
  if (labels && labels->size() != n) throw Error(ErrorKind::length_mismatch, "label count differs from cohort size");
  std::mt19937_64 rng(seed);
  std::map<double, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < n; ++i) classes[labels ? (*labels)[i] : 0.0].push_back(i);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t next = 0;
  for (auto& [value, members] : classes) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t idx : members) folds[next++ % k].push_back(idx);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

inline std::string embeddings_csv(const std::vector<std::string>& ids, const Tensor& h) {
  if (h.rank() != 2 || h.rows() != ids.size()) {
    throw Error(ErrorKind::width_mismatch, "embedding rows differ from id count");
  }
  std::string out = "id";
  for (std::size_t j = 0; j < h.cols(); ++j) out += ",h_" + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out += ids[i];
    for (double v : h.row(i)) {
      out += ',';
      out += io::format_double(v);
    }
    out += '\n';
  }
  return out;
}

inline void save_embeddings(const std::vector<std::string>& ids, const Tensor& h, const std::filesystem::path& path) {
  io::write_file_atomic(path, embeddings_csv(ids, h));
}

struct Embeddings {
  std::vector<std::string> ids;
  Tensor h;
};

/// Loads an embeddings CSV. expected_width, when nonzero, is the required d_enc.
inline Embeddings load_embeddings(const std::filesystem::path& path, std::size_t expected_width = 0) {
  const auto lines = io::read_lines(path, ErrorKind::io_error);
  const std::string file = path.filename().string();
  if (lines.empty()) throw Error(ErrorKind::width_mismatch, file + ": missing header");
  const auto header = io::split(io::trim(lines[0]));
  if (header.size() < 2 || io::trim(header[0]) != "id") {
    throw Error(ErrorKind::width_mismatch, file + ": header must be id,h_0,...");
  }
  const std::size_t width = header.size() - 1;
  if (expected_width && width != expected_width) {
    throw Error(ErrorKind::width_mismatch, file + ": " + std::to_string(width) + " columns, expected " +
                                               std::to_string(expected_width));
  }
  Embeddings e;
  std::vector<double> data;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const auto line = io::trim(lines[ln]);
    if (line.empty()) continue;
    auto f = io::split(line);
    if (f.size() != width + 1) {
      throw Error(ErrorKind::width_mismatch, file + " line " + std::to_string(ln + 1) + ": expected " +
                                                 std::to_string(width + 1) + " fields");
    }
    e.ids.emplace_back(io::trim(f[0]));
    for (std::size_t j = 1; j <= width; ++j) data.push_back(detail::parse_field(f[j], file, ln + 1, "value"));
  }
  e.h = Tensor::matrix(e.ids.size(), width, std::move(data));
  return e;
}

}  // namespace anatcl::cohort
