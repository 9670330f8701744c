#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "anatcl/error.hpp"
#include "anatcl/io.hpp"

namespace anatcl::anatomy {

enum class AtlasName { desikan, destrieux };

struct Atlas {
  AtlasName name = AtlasName::desikan;
  std::size_t roi_count = 68;

  static constexpr Atlas desikan() { return {AtlasName::desikan, 68}; }
  static constexpr Atlas destrieux() { return {AtlasName::destrieux, 148}; }

  static std::optional<Atlas> from_roi_count(std::size_t k) {
    if (k == 68) return desikan();
    if (k == 148) return destrieux();
    return std::nullopt;
  }

  friend bool operator==(const Atlas&, const Atlas&) = default;
};

inline std::string_view to_string(AtlasName a) { return a == AtlasName::desikan ? "desikan" : "destrieux"; }

inline std::optional<Atlas> parse_atlas(std::string_view s) {
  if (s == "desikan") return Atlas::desikan();
  if (s == "destrieux") return Atlas::destrieux();
  return std::nullopt;
}

enum class Measure {
  ct_mean,
  ct_std,
  gmv,
  surface_area,
  integrated_mean_curv,
  gaussian_curv_index,
  intrinsic_curv_index,
};

inline constexpr std::array<Measure, 7> kAllMeasures = {
    Measure::ct_mean,         Measure::ct_std,
    Measure::gmv,             Measure::surface_area,
    Measure::integrated_mean_curv, Measure::gaussian_curv_index,
    Measure::intrinsic_curv_index,
};

inline std::string_view to_string(Measure m) {
  switch (m) {
    case Measure::ct_mean: return "CT_mean";
    case Measure::ct_std: return "CT_std";
    case Measure::gmv: return "GMV";
    case Measure::surface_area: return "surface_area";
    case Measure::integrated_mean_curv: return "integrated_mean_curv";
    case Measure::gaussian_curv_index: return "gaussian_curv_index";
    case Measure::intrinsic_curv_index: return "intrinsic_curv_index";
  }
  return "?";
}

inline std::optional<Measure> parse_measure(std::string_view s) {
  for (Measure m : kAllMeasures)
    if (to_string(m) == s) return m;
  return std::nullopt;
}

/// Ordered, duplicate-free selection of measures.
class MeasureSet {
 public:
  MeasureSet() : measures_{Measure::ct_mean, Measure::gmv, Measure::surface_area} {}

  explicit MeasureSet(std::vector<Measure> measures) : measures_(std::move(measures)) {
    if (measures_.empty()) throw Error(ErrorKind::invalid_config, "measure set is empty");
    for (std::size_t i = 0; i < measures_.size(); ++i)
      for (std::size_t j = i + 1; j < measures_.size(); ++j)
        if (measures_[i] == measures_[j]) {
          throw Error(ErrorKind::invalid_config, "duplicate measure " + std::string(anatomy::to_string(measures_[i])));
        }
  }

  static MeasureSet all_seven() { return MeasureSet(std::vector<Measure>(kAllMeasures.begin(), kAllMeasures.end())); }

  std::size_t size() const noexcept { return measures_.size(); }
  Measure operator[](std::size_t i) const { return measures_[i]; }
  const std::vector<Measure>& measures() const noexcept { return measures_; }
  auto begin() const { return measures_.begin(); }
  auto end() const { return measures_.end(); }

  std::optional<std::size_t> index_of(Measure m) const {
    auto it = std::find(measures_.begin(), measures_.end(), m);
    if (it == measures_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - measures_.begin());
  }

  std::string to_string() const {
    std::string out;
    for (std::size_t i = 0; i < measures_.size(); ++i) {
      if (i) out += ',';
      out += anatomy::to_string(measures_[i]);
    }
    return out;
  }

  static MeasureSet parse(std::string_view list) {
    std::vector<Measure> ms;
    for (auto tok : io::split(list, ',')) {
      tok = io::trim(tok);
      auto m = parse_measure(tok);
      if (!m) throw Error(ErrorKind::invalid_config, "unknown measure '" + std::string(tok) + "'");
      ms.push_back(*m);
    }
    return MeasureSet(std::move(ms));
  }

  friend bool operator==(const MeasureSet&, const MeasureSet&) = default;

 private:
  std::vector<Measure> measures_;
};

/// Per-subject x per-ROI x per-measure anatomical values.
class RoiTable {
 public:
  RoiTable() = default;

  RoiTable(Atlas atlas, MeasureSet measures, std::vector<std::string> subject_ids, std::vector<double> values)
      : atlas_(atlas), measures_(std::move(measures)), ids_(std::move(subject_ids)), values_(std::move(values)) {
    if (values_.size() != ids_.size() * atlas_.roi_count * measures_.size()) {
      throw Error(ErrorKind::dimension_mismatch, "ROI table needs subjects x K x N values");
    }
    for (double v : values_)
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw Error(ErrorKind::malformed_row, "anatomical measures must be finite and nonnegative");
      }
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (!index_.emplace(ids_[i], i).second) {
        throw Error(ErrorKind::id_mismatch, "duplicate subject '" + ids_[i] + "' in ROI table");
      }
    }
  }

  const Atlas& atlas() const noexcept { return atlas_; }
  const MeasureSet& measures() const noexcept { return measures_; }
  const std::vector<std::string>& subject_ids() const noexcept { return ids_; }
  std::size_t subject_count() const noexcept { return ids_.size(); }
  std::size_t roi_count() const noexcept { return atlas_.roi_count; }
  std::size_t measure_count() const noexcept { return measures_.size(); }
  bool empty() const noexcept { return ids_.empty(); }

  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  std::size_t row_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw Error(ErrorKind::unknown_subject, "subject '" + id + "' not in ROI table");
    return it->second;
  }

  double value(std::size_t subject_row, std::size_t roi, std::size_t measure) const {
    return values_[(subject_row * atlas_.roi_count + roi) * measures_.size() + measure];
  }

  const std::vector<double>& values() const noexcept { return values_; }

  /// Restricts the table to a subset of its measures, in the subset's order.
  RoiTable select(const MeasureSet& subset) const {
    std::vector<std::size_t> cols;
    for (Measure m : subset) {
      auto idx = measures_.index_of(m);
      if (!idx) {
        throw Error(ErrorKind::dimension_mismatch,
                    "ROI table has no measure " + std::string(anatomy::to_string(m)));
      }
      cols.push_back(*idx);
    }
    std::vector<double> out;
    out.reserve(ids_.size() * atlas_.roi_count * cols.size());
    for (std::size_t s = 0; s < ids_.size(); ++s)
      for (std::size_t k = 0; k < atlas_.roi_count; ++k)
        for (std::size_t c : cols) out.push_back(value(s, k, c));
    return RoiTable(atlas_, subset, ids_, std::move(out));
  }

  /// Rows for the given subjects, in that order.
  RoiTable subset(const std::vector<std::string>& ids) const {
    std::vector<double> out;
    const std::size_t stride = atlas_.roi_count * measures_.size();
    out.reserve(ids.size() * stride);
    for (const auto& id : ids) {
      const std::size_t r = row_of(id);
      out.insert(out.end(), values_.begin() + static_cast<std::ptrdiff_t>(r * stride),
                 values_.begin() + static_cast<std::ptrdiff_t>((r + 1) * stride));
    }
    return RoiTable(atlas_, measures_, ids, std::move(out));
  }

  friend bool operator==(const RoiTable& a, const RoiTable& b) {
    return a.atlas_ == b.atlas_ && a.measures_ == b.measures_ && a.ids_ == b.ids_ && a.values_ == b.values_;
  }

 private:
  Atlas atlas_;
  MeasureSet measures_;
  std::vector<std::string> ids_;
  std::vector<double> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// CSV with header `subject_id,roi_index,measure_name,value`, one row per
/// (subject, roi, measure) in subject, roi, measure order.
inline std::string to_csv(const RoiTable& table) {
  std::string out = "subject_id,roi_index,measure_name,value\n";
  for (std::size_t s = 0; s < table.subject_count(); ++s)
    for (std::size_t k = 0; k < table.roi_count(); ++k)
      for (std::size_t j = 0; j < table.measure_count(); ++j) {
        out += table.subject_ids()[s];
        out += ',';
        out += std::to_string(k);
        out += ',';
        out += to_string(table.measures()[j]);
        out += ',';
        out += io::format_double(table.value(s, k, j));
        out += '\n';
      }
  return out;
}

/// Parses the ROI CSV. The atlas is inferred from the ROI index range and the
/// measures are ordered canonically; every (subject, roi, measure)
/// combination must be present exactly once.
inline RoiTable parse_roi_csv(const std::vector<std::string>& lines, const std::string& source = "roi.csv") {
  auto fail = [&](std::size_t line_no, const std::string& msg) {
    return Error(ErrorKind::malformed_row, source + " line " + std::to_string(line_no) + ": " + msg);
  };
  if (lines.empty() || io::trim(lines[0]) != "subject_id,roi_index,measure_name,value") {
    throw fail(1, "expected header subject_id,roi_index,measure_name,value");
  }
  struct Row {
    std::size_t subject;
    std::size_t roi;
    Measure measure;
    double value;
  };
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::size_t> id_index;
  std::vector<Row> rows;
  std::array<bool, kAllMeasures.size()> seen_measure{};
  std::size_t max_roi = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string_view line = io::trim(lines[i]);
    if (line.empty()) continue;
    auto fields = io::split(line);
    if (fields.size() != 4) throw fail(i + 1, "expected 4 fields");
    const std::string id(io::trim(fields[0]));
    if (id.empty()) throw fail(i + 1, "empty subject_id");
    auto roi = io::parse_int<std::size_t>(fields[1]);
    if (!roi) throw fail(i + 1, "roi_index is not a nonnegative integer");
    auto m = parse_measure(io::trim(fields[2]));
    if (!m) throw fail(i + 1, "unknown measure '" + std::string(fields[2]) + "'");
    auto v = io::parse_double(fields[3]);
    if (!v || !std::isfinite(*v)) throw fail(i + 1, "value is not a finite number");
    if (*v < 0.0) throw fail(i + 1, "anatomical measures must be nonnegative");
    auto [it, inserted] = id_index.emplace(id, ids.size());
    if (inserted) ids.push_back(id);
    rows.push_back({it->second, *roi, *m, *v});
    seen_measure[static_cast<std::size_t>(*m)] = true;
    max_roi = std::max(max_roi, *roi);
  }
  if (rows.empty()) throw Error(ErrorKind::empty_table, source + " has no rows");
  auto atlas = Atlas::from_roi_count(max_roi + 1);
  if (!atlas) {
    throw Error(ErrorKind::atlas_mismatch,
                source + ": ROI indices span " + std::to_string(max_roi + 1) + " regions, expected 68 or 148");
  }
  std::vector<Measure> present;
  std::array<std::size_t, kAllMeasures.size()> col{};
  for (Measure m : kAllMeasures)
    if (seen_measure[static_cast<std::size_t>(m)]) {
      col[static_cast<std::size_t>(m)] = present.size();
      present.push_back(m);
    }
  MeasureSet measures(present);
  const std::size_t K = atlas->roi_count, N = present.size();
  std::vector<double> values(ids.size() * K * N, 0.0);
  std::vector<char> filled(values.size(), 0);
  for (const auto& r : rows) {
    const std::size_t at = (r.subject * K + r.roi) * N + col[static_cast<std::size_t>(r.measure)];
    if (filled[at]) {
      throw Error(ErrorKind::malformed_row, source + ": duplicate entry for subject '" + ids[r.subject] +
                                                "', roi " + std::to_string(r.roi) + ", " +
                                                std::string(to_string(r.measure)));
    }
    filled[at] = 1;
    values[at] = r.value;
  }
  for (std::size_t at = 0; at < filled.size(); ++at)
    if (!filled[at]) {
      const std::size_t s = at / (K * N), k = (at / N) % K, j = at % N;
      throw Error(ErrorKind::id_mismatch, source + ": missing entry for subject '" + ids[s] + "', roi " +
                                              std::to_string(k) + ", " + std::string(to_string(present[j])));
    }
  return RoiTable(*atlas, std::move(measures), std::move(ids), std::move(values));
}

inline RoiTable load_roi_csv(const std::filesystem::path& path) {
  return parse_roi_csv(io::read_lines(path), path.filename().string());
}

}  // namespace anatcl::anatomy
