#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "anatcl/anatomy/roi_table.hpp"
#include "anatcl/degree_matrix.hpp"
#include "anatcl/error.hpp"

namespace anatcl::anatomy {

/// Per-(roi, measure) min-max range fitted on a pretraining table.
struct NormalizationStats {
  Atlas atlas;
  MeasureSet measures;
  std::vector<double> min;  // K x N, row-major by roi
  std::vector<double> max;

  /// Maps a raw value into [0, 1]. Constant columns map to 0.5; values
  /// outside the fitted range are clamped.
  double apply(double value, std::size_t roi, std::size_t measure) const {
    const std::size_t at = roi * measures.size() + measure;
    const double lo = min[at], hi = max[at];
    if (hi == lo) return 0.5;
    return std::clamp((value - lo) / (hi - lo), 0.0, 1.0);
  }
};

inline NormalizationStats fit_normalizer(const RoiTable& table) {
  if (table.empty()) throw Error(ErrorKind::empty_table, "cannot fit normalizer on an empty ROI table");
  const std::size_t K = table.roi_count(), N = table.measure_count();
  NormalizationStats stats{table.atlas(), table.measures(), std::vector<double>(K * N), std::vector<double>(K * N)};
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < N; ++j) {
      double lo = table.value(0, k, j), hi = lo;
      for (std::size_t s = 1; s < table.subject_count(); ++s) {
        const double v = table.value(s, k, j);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      stats.min[k * N + j] = lo;
      stats.max[k * N + j] = hi;
    }
  return stats;
}

/// psi^k for k in [0, K): K vectors of N normalized measures.
struct LocalDescriptorSet {
  std::size_t roi_count = 0;
  std::size_t measure_count = 0;
  std::vector<double> psi;  // K x N

  std::span<const double> region(std::size_t k) const { return {psi.data() + k * measure_count, measure_count}; }
};

/// omega^j for each measure j: N vectors spanning all K regions, raw values.
struct GlobalDescriptorSet {
  std::size_t measure_count = 0;
  std::size_t roi_count = 0;
  std::vector<double> omega;  // N x K

  std::span<const double> measure(std::size_t j) const { return {omega.data() + j * roi_count, roi_count}; }

  /// Mean of each omega^j over the K regions.
  std::vector<double> mean_per_measure() const {
    std::vector<double> out(measure_count, 0.0);
    for (std::size_t j = 0; j < measure_count; ++j) {
      double s = 0.0;
      for (double v : measure(j)) s += v;
      out[j] = s / static_cast<double>(roi_count);
    }
    return out;
  }
};

inline LocalDescriptorSet local_descriptors(const RoiTable& table, const std::string& subject,
                                            const NormalizationStats& stats) {
  if (!(stats.atlas == table.atlas()) || !(stats.measures == table.measures())) {
    throw Error(ErrorKind::atlas_mismatch, "normalizer was fitted on a different atlas or measure set");
  }
  const std::size_t row = table.row_of(subject);
  const std::size_t K = table.roi_count(), N = table.measure_count();
  LocalDescriptorSet out{K, N, std::vector<double>(K * N)};
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < N; ++j) out.psi[k * N + j] = stats.apply(table.value(row, k, j), k, j);
  return out;
}

inline GlobalDescriptorSet global_descriptors(const RoiTable& table, const std::string& subject) {
  const std::size_t row = table.row_of(subject);
  const std::size_t K = table.roi_count(), N = table.measure_count();
  GlobalDescriptorSet out{N, K, std::vector<double>(N * K)};
  for (std::size_t j = 0; j < N; ++j)
    for (std::size_t k = 0; k < K; ++k) out.omega[j * K + k] = table.value(row, k, j);
  return out;
}

inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw Error(ErrorKind::dimension_mismatch,
                "cosine of lengths " + std::to_string(u.size()) + " and " + std::to_string(v.size()));
  }
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw Error(ErrorKind::zero_vector, "cosine similarity of a zero vector");
  // sqrt(uu * vv) keeps cosine(u, u) == 1 exactly.
  const double c = uv / std::sqrt(uu * vv);
  return std::clamp(c, -1.0, 1.0);
}

namespace detail {
inline bool is_zero(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}
}  // namespace detail

/// Mean over regions of the cosine between normalized local descriptors.
/// A region whose normalized descriptor is all zero (the subject sits at the
/// fitted minimum of every measure there) scores 1 against another zero
/// descriptor and 0 otherwise.
inline double local_degree(const LocalDescriptorSet& a, const LocalDescriptorSet& b) {
  if (a.roi_count != b.roi_count || a.measure_count != b.measure_count) {
    throw Error(ErrorKind::dimension_mismatch, "local descriptor sets differ in K or N");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < a.roi_count; ++k) {
    const auto u = a.region(k), v = b.region(k);
    const bool zu = detail::is_zero(u), zv = detail::is_zero(v);
    if (zu || zv) {
      total += (zu && zv) ? 1.0 : 0.0;
    } else {
      total += cosine(u, v);
    }
  }
  return total / static_cast<double>(a.roi_count);
}

/// Mean over measures of the cosine between raw global descriptors.
inline double global_degree(const GlobalDescriptorSet& a, const GlobalDescriptorSet& b) {
  if (a.roi_count != b.roi_count || a.measure_count != b.measure_count) {
    throw Error(ErrorKind::dimension_mismatch, "global descriptor sets differ in K or N");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < a.measure_count; ++j) total += cosine(a.measure(j), b.measure(j));
  return total / static_cast<double>(a.measure_count);
}

namespace detail {
template <class Set, class Fn>
DegreeMatrix pairwise(std::span<const Set> batch, DegreeKind kind, Fn degree) {
  const std::size_t n = batch.size();
  if (n < 2) throw Error(ErrorKind::dimension_mismatch, "degree matrix needs at least 2 subjects");
  auto values = numgrad::Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    values.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = degree(batch[i], batch[j]);
      values.at(i, j) = d;
      values.at(j, i) = d;
    }
  }
  return DegreeMatrix{std::move(values), kind};
}
}  // namespace detail

/// Pairwise alpha over a batch. The diagonal is exactly 1.
inline DegreeMatrix local_degree_matrix(std::span<const LocalDescriptorSet> batch) {
  return detail::pairwise(batch, DegreeKind::local_anat,
                          [](const auto& a, const auto& b) { return local_degree(a, b); });
}

/// Pairwise beta over a batch. The diagonal is exactly 1.
inline DegreeMatrix global_degree_matrix(std::span<const GlobalDescriptorSet> batch) {
  return detail::pairwise(batch, DegreeKind::global_anat,
                          [](const auto& a, const auto& b) { return global_degree(a, b); });
}

enum class DegreeMode { local, global };

/// Degree matrix for a batch of subject ids straight from an ROI table.
inline DegreeMatrix degree_matrix(const RoiTable& table, const NormalizationStats& stats,
                                  const std::vector<std::string>& subjects, DegreeMode mode) {
  if (mode == DegreeMode::local) {
    std::vector<LocalDescriptorSet> sets;
    sets.reserve(subjects.size());
    for (const auto& s : subjects) sets.push_back(local_descriptors(table, s, stats));
    return local_degree_matrix(sets);
  }
  std::vector<GlobalDescriptorSet> sets;
  sets.reserve(subjects.size());
  for (const auto& s : subjects) sets.push_back(global_descriptors(table, s));
  return global_degree_matrix(sets);
}

}  // namespace anatcl::anatomy
