#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "anatcl/anatomy/roi_table.hpp"
#include "anatcl/cohort.hpp"
#include "anatcl/error.hpp"
#include "anatcl/io.hpp"
#include "anatcl/model.hpp"
#include "anatcl/numgrad/tensor.hpp"

namespace anatcl::probe {

using numgrad::Tensor;

namespace detail {
inline Eigen::MatrixXd to_eigen(const Tensor& x) {
  Eigen::MatrixXd m(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x.at(i, j);
  return m;
}
}  // namespace detail

struct LinearModel {
  std::vector<double> weights;
  double intercept = 0.0;

  std::vector<double> predict(const Tensor& x) const {
    std::vector<double> out(x.rows(), intercept);
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < weights.size(); ++j) out[i] += x.at(i, j) * weights[j];
    return out;
  }

  friend bool operator==(const LinearModel&, const LinearModel&) = default;
};

/// Ridge regression with an unpenalized intercept. Centering X and y and
/// solving (Xc^T Xc + lambda I) w = Xc^T yc is the same solution as the
/// augmented-column formulation with the constant column left unpenalized.
inline LinearModel ridge_fit(const Tensor& x, std::span<const double> y, double lambda) {
  if (x.rank() != 2 || x.rows() != y.size()) {
    throw Error(ErrorKind::length_mismatch, "ridge: " + std::to_string(x.rows()) + " rows for " +
                                                std::to_string(y.size()) + " targets");
  }
  if (!(lambda >= 0.0)) throw Error(ErrorKind::domain_error, "ridge penalty must be >= 0");
  if (x.rows() == 0) throw Error(ErrorKind::length_mismatch, "ridge: no rows");
  const auto n = static_cast<Eigen::Index>(x.rows());
  const auto p = static_cast<Eigen::Index>(x.cols());
  Eigen::MatrixXd X = detail::to_eigen(x);
  Eigen::VectorXd Y = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  const Eigen::RowVectorXd xm = X.colwise().mean();
  const double ym = Y.mean();
  X.rowwise() -= xm;
  Y.array() -= ym;
  Eigen::MatrixXd A = X.transpose() * X;
  A.diagonal().array() += lambda;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  const double scale = std::max(1.0, A.diagonal().cwiseAbs().maxCoeff());
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().cwiseAbs().minCoeff() <= 1e-12 * scale) {
    throw Error(ErrorKind::singular_system, "ridge normal equations are singular (penalty " +
                                                io::format_double(lambda) + ")");
  }
  const Eigen::VectorXd w = ldlt.solve(X.transpose() * Y);
  LinearModel m;
  m.weights.assign(w.data(), w.data() + p);
  m.intercept = ym - xm.dot(w);
  return m;
}

/// Per-column mean and population std fitted on one split; zero-variance
/// columns keep unit scale.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const Tensor& x) {
    Standardizer s{std::vector<double>(x.cols(), 0.0), std::vector<double>(x.cols(), 0.0)};
    const double n = static_cast<double>(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) s.mean[j] += x.at(i, j) / n;
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) {
        const double d = x.at(i, j) - s.mean[j];
        s.scale[j] += d * d / n;
      }
    for (auto& v : s.scale) v = v > 0.0 ? std::sqrt(v) : 1.0;
    return s;
  }

  Tensor apply(const Tensor& x) const {
    Tensor out = x;
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) = (x.at(i, j) - mean[j]) / scale[j];
    return out;
  }

  friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

struct LogisticOptions {
  std::size_t iterations = 2000;
  double learning_rate = 0.1;
  double tolerance = 1e-6;
};

/// Class-balanced logistic regression by full-batch gradient descent from
/// zero. The objective is the mean of the two per-class mean log-losses,
/// i.e. sample weights inversely proportional to class frequency.
inline LinearModel logistic_probe_fit(const Tensor& x, std::span<const double> y, const LogisticOptions& opt = {}) {
  if (x.rows() != y.size()) throw Error(ErrorKind::length_mismatch, "logistic: rows differ from labels");
  std::size_t n1 = 0;
  for (double v : y) {
    if (v != 0.0 && v != 1.0) throw Error(ErrorKind::domain_error, "logistic labels must be 0 or 1");
    n1 += v == 1.0;
  }
  const std::size_t n0 = y.size() - n1;
  if (n0 == 0 || n1 == 0) throw Error(ErrorKind::single_class, "logistic probe needs both classes");
  const std::size_t p = x.cols();
  const double w0 = 0.5 / static_cast<double>(n0), w1 = 0.5 / static_cast<double>(n1);
  LinearModel m{std::vector<double>(p, 0.0), 0.0};
  std::vector<double> grad(p);
  for (std::size_t it = 0; it < opt.iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double s = m.intercept;
      const auto row = x.row(i);
      for (std::size_t j = 0; j < p; ++j) s += row[j] * m.weights[j];
      const double prob = 1.0 / (1.0 + std::exp(-s));
      const double r = (prob - y[i]) * (y[i] == 1.0 ? w1 : w0);
      for (std::size_t j = 0; j < p; ++j) grad[j] += r * row[j];
      gb += r;
    }
    double norm2 = gb * gb;
    for (double g : grad) norm2 += g * g;
    if (std::sqrt(norm2) < opt.tolerance) break;
    for (std::size_t j = 0; j < p; ++j) m.weights[j] -= opt.learning_rate * grad[j];
    m.intercept -= opt.learning_rate * gb;
  }
  return m;
}

inline std::vector<double> classify(const LinearModel& m, const Tensor& x) {
  auto s = m.predict(x);
  for (auto& v : s) v = v > 0.0 ? 1.0 : 0.0;
  return s;
}

// ---------------------------------------------------------------------------
// Metrics

enum class Metric { mae, balanced_accuracy, r2, neg_mae };

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::mae: return "mae";
    case Metric::balanced_accuracy: return "balanced_accuracy";
    case Metric::r2: return "r2";
    case Metric::neg_mae: return "neg_mae";
  }
  return "?";
}

inline double mae(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty()) throw Error(ErrorKind::length_mismatch, "mae: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

/// Mean of the per-class recalls over binary targets.
inline double balanced_accuracy(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw Error(ErrorKind::length_mismatch, "balanced accuracy: length mismatch");
  std::size_t tp = 0, tn = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (target[i] == 1.0) {
      ++pos;
      tp += pred[i] == 1.0;
    } else if (target[i] == 0.0) {
      ++neg;
      tn += pred[i] == 0.0;
    } else {
      throw Error(ErrorKind::domain_error, "balanced accuracy needs binary targets");
    }
  }
  if (pos == 0 || neg == 0) throw Error(ErrorKind::single_class, "balanced accuracy needs both classes");
  return 0.5 * (static_cast<double>(tp) / static_cast<double>(pos) + static_cast<double>(tn) / static_cast<double>(neg));
}

/// 1 - SS_res / SS_tot with SS_tot around the mean of the targets.
inline double r2(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty()) throw Error(ErrorKind::length_mismatch, "r2: length mismatch");
  double mean = 0.0;
  for (double t : target) mean += t;
  mean /= static_cast<double>(target.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ss_res += (pred[i] - target[i]) * (pred[i] - target[i]);
    ss_tot += (target[i] - mean) * (target[i] - mean);
  }
  if (ss_tot == 0.0) throw Error(ErrorKind::domain_error, "r2: constant targets");
  return 1.0 - ss_res / ss_tot;
}

inline double metric(Metric kind, std::span<const double> pred, std::span<const double> target) {
  switch (kind) {
    case Metric::mae: return mae(pred, target);
    case Metric::neg_mae: return -mae(pred, target);
    case Metric::balanced_accuracy: return balanced_accuracy(pred, target);
    case Metric::r2: return r2(pred, target);
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Cross-validation

/// Per-fold values of one metric with their mean and population std.
struct ProbeResult {
  std::string task;
  std::string metric;
  std::vector<double> folds;
  double mean = 0.0;
  double std = 0.0;

  static ProbeResult from_folds(std::string task, std::string metric, std::vector<double> folds) {
    ProbeResult r{std::move(task), std::move(metric), std::move(folds), 0.0, 0.0};
    const double k = static_cast<double>(r.folds.size());
    for (double v : r.folds) r.mean += v / k;
    double var = 0.0;
    for (double v : r.folds) var += (v - r.mean) * (v - r.mean) / k;
    r.std = std::sqrt(var);
    return r;
  }

  friend bool operator==(const ProbeResult&, const ProbeResult&) = default;
};

/// `task,metric,fold,value` rows followed by a `task,metric,mean,std` row
/// per result.
inline std::string to_csv(std::span<const ProbeResult> results) {
  std::string out = "task,metric,fold,value\n";
  for (const auto& r : results)
    for (std::size_t f = 0; f < r.folds.size(); ++f)
      out += r.task + "," + r.metric + "," + std::to_string(f) + "," + io::format_double(r.folds[f]) + "\n";
  out += "task,metric,mean,std\n";
  for (const auto& r : results)
    out += r.task + "," + r.metric + "," + io::format_double(r.mean) + "," + io::format_double(r.std) + "\n";
  return out;
}

enum class ProbeKind { ridge, logistic };

struct ProbeOptions {
  std::size_t folds = 5;
  double ridge_penalty = 1.0;
  LogisticOptions logistic;
  std::uint64_t seed = 0;
};

/// What one fold fitted; exposed so tests can check that test-fold data
/// never reaches the fit.
struct FoldFit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  Standardizer standardizer;
  LinearModel model;
  friend bool operator==(const FoldFit&, const FoldFit&) = default;
};

struct CvReport {
  std::vector<ProbeResult> results;
  std::vector<FoldFit> fits;
};

inline std::vector<std::size_t> complement(std::size_t n, const std::vector<std::size_t>& sorted_subset) {
  std::vector<std::size_t> out;
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (j < sorted_subset.size() && sorted_subset[j] == i) {
      ++j;
      continue;
    }
    out.push_back(i);
  }
  return out;
}

inline Tensor take_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  Tensor out = Tensor::zeros({rows.size(), x.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(x.row(rows[i]).begin(), x.row(rows[i]).end(), out.row(i).begin());
  return out;
}

inline std::vector<double> take(std::span<const double> v, const std::vector<std::size_t>& rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(v[r]);
  return out;
}

/// k-fold probe on fixed features. Each fold standardizes with train-fold
/// statistics, fits on train, and scores the test fold with every metric.
/// Binary tasks are stratified by label.
inline CvReport cross_validate_features(const Tensor& features, std::span<const double> targets,
                                        const std::string& task, ProbeKind kind, std::span<const Metric> metrics,
                                        const ProbeOptions& opt) {
  if (features.rows() != targets.size()) throw Error(ErrorKind::length_mismatch, "features and targets differ");
  std::vector<double> labels(targets.begin(), targets.end());
  auto folds = cohort::split_folds(targets.size(), opt.folds, opt.seed, kind == ProbeKind::logistic ? &labels : nullptr);
  CvReport rep;
  std::vector<std::vector<double>> values(metrics.size());
  for (const auto& test : folds) {
    FoldFit fit;
    fit.test = test;
    fit.train = complement(targets.size(), test);
    const Tensor xtr = take_rows(features, fit.train);
    const auto ytr = take(targets, fit.train);
    fit.standardizer = Standardizer::fit(xtr);
    const Tensor xs = fit.standardizer.apply(xtr);
    fit.model = kind == ProbeKind::ridge ? ridge_fit(xs, ytr, opt.ridge_penalty)
                                         : logistic_probe_fit(xs, ytr, opt.logistic);
    const Tensor xte = fit.standardizer.apply(take_rows(features, fit.test));
    const auto yte = take(targets, fit.test);
    const auto pred = kind == ProbeKind::ridge ? fit.model.predict(xte) : classify(fit.model, xte);
    for (std::size_t m = 0; m < metrics.size(); ++m) values[m].push_back(metric(metrics[m], pred, yte));
    rep.fits.push_back(std::move(fit));
  }
  for (std::size_t m = 0; m < metrics.size(); ++m)
    rep.results.push_back(ProbeResult::from_folds(task, std::string(to_string(metrics[m])), std::move(values[m])));
  return rep;
}

/// Age is probed by ridge regression and scored by MAE; any other task must
/// be a binary label, probed by the balanced logistic classifier.
inline CvReport cross_validate(const cohort::Cohort& cohort, const model::Parameters& encoder,
                               const std::string& task, const ProbeOptions& opt = {}) {
  const auto targets = cohort.label(task);
  // h of a subject depends on its own x only, so extracting all rows at once
  // leaks nothing across folds.
  const Tensor h = model::represent(encoder, cohort.features());
  if (task == "age") {
    const Metric ms[] = {Metric::mae, Metric::r2};
    return cross_validate_features(h, targets, task, ProbeKind::ridge, ms, opt);
  }
  const Metric ms[] = {Metric::balanced_accuracy};
  return cross_validate_features(h, targets, task, ProbeKind::logistic, ms, opt);
}

struct FeatureStudyRow {
  anatomy::Measure measure;
  ProbeResult neg_mae;
  ProbeResult r2;
};

/// Ridge-regresses age from each measure's K-vector on its own.
inline std::vector<FeatureStudyRow> feature_study(const anatomy::RoiTable& table, std::span<const double> ages,
                                                  const ProbeOptions& opt = {}) {
  if (table.measure_count() < 2) throw Error(ErrorKind::invalid_config, "feature study needs at least 2 measures");
  if (table.subject_count() != ages.size()) throw Error(ErrorKind::length_mismatch, "ROI table rows differ from ages");
  std::vector<FeatureStudyRow> rows;
  const Metric ms[] = {Metric::neg_mae, Metric::r2};
  for (std::size_t j = 0; j < table.measure_count(); ++j) {
    Tensor x = Tensor::zeros({table.subject_count(), table.roi_count()});
    for (std::size_t s = 0; s < table.subject_count(); ++s)
      for (std::size_t k = 0; k < table.roi_count(); ++k) x.at(s, k) = table.value(s, k, j);
    const std::string name(anatomy::to_string(table.measures()[j]));
    auto rep = cross_validate_features(x, ages, name, ProbeKind::ridge, ms, opt);
    rows.push_back({table.measures()[j], rep.results[0], rep.results[1]});
  }
  return rows;
}

inline std::string feature_study_csv(const std::vector<FeatureStudyRow>& rows) {
  std::string out = "measure,neg_mae_mean,neg_mae_std,r2_mean,r2_std\n";
  for (const auto& r : rows)
    out += std::string(anatomy::to_string(r.measure)) + "," + io::format_double(r.neg_mae.mean) + "," +
           io::format_double(r.neg_mae.std) + "," + io::format_double(r.r2.mean) + "," + io::format_double(r.r2.std) +
           "\n";
  return out;
}

}  // namespace anatcl::probe
