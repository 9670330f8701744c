#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "anatcl/degree_matrix.hpp"
#include "anatcl/error.hpp"
#include "anatcl/numgrad/tape.hpp"

namespace anatcl::losses {

using numgrad::Tape;
using numgrad::Tensor;
using numgrad::Var;

enum class LossVariant {
  simclr,
  yaware,
  expw,
  anatcl_local,
  anatcl_global,
  anatssl_local,
  anatssl_global,
  l1_age,
  l1_anat,
};

inline constexpr LossVariant kAllVariants[] = {
    LossVariant::simclr,        LossVariant::yaware,         LossVariant::expw,
    LossVariant::anatcl_local,  LossVariant::anatcl_global,  LossVariant::anatssl_local,
    LossVariant::anatssl_global, LossVariant::l1_age,        LossVariant::l1_anat,
};

inline std::string_view to_string(LossVariant v) {
  switch (v) {
    case LossVariant::simclr: return "simclr";
    case LossVariant::yaware: return "yaware";
    case LossVariant::expw: return "expw";
    case LossVariant::anatcl_local: return "anatcl_local";
    case LossVariant::anatcl_global: return "anatcl_global";
    case LossVariant::anatssl_local: return "anatssl_local";
    case LossVariant::anatssl_global: return "anatssl_global";
    case LossVariant::l1_age: return "l1_age";
    case LossVariant::l1_anat: return "l1_anat";
  }
  return "?";
}

inline std::optional<LossVariant> parse_variant(std::string_view s) {
  for (LossVariant v : kAllVariants)
    if (to_string(v) == s) return v;
  return std::nullopt;
}

inline bool uses_local_degrees(LossVariant v) {
  return v == LossVariant::anatcl_local || v == LossVariant::anatssl_local;
}
inline bool uses_global_degrees(LossVariant v) {
  return v == LossVariant::anatcl_global || v == LossVariant::anatssl_global;
}
/// Variants that read the ROI table during pretraining.
inline bool needs_roi_table(LossVariant v) {
  return uses_local_degrees(v) || uses_global_degrees(v) || v == LossVariant::l1_anat;
}

struct LossConfig {
  LossVariant variant = LossVariant::anatcl_global;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  /// Divides cosine similarities; 1 gives the untempered formula.
  double temperature = 0.1;
  /// Age-kernel bandwidth in years.
  double sigma = 5.0;

  /// The AnatSSL ablation drops the age term.
  double effective_lambda2() const {
    return (variant == LossVariant::anatssl_local || variant == LossVariant::anatssl_global) ? 0.0 : lambda2;
  }

  void validate() const {
    if (!(lambda1 >= 0.0) || !std::isfinite(lambda1))
      throw Error(ErrorKind::invalid_config, "lambda1 must be >= 0");
    if (!(lambda2 >= 0.0) || !std::isfinite(lambda2))
      throw Error(ErrorKind::invalid_config, "lambda2 must be >= 0");
    if (!(temperature > 0.0) || !std::isfinite(temperature))
      throw Error(ErrorKind::invalid_config, "temperature must be > 0");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error(ErrorKind::invalid_config, "sigma must be > 0");
    if ((uses_local_degrees(variant) || uses_global_degrees(variant)) && lambda1 == 0.0 &&
        effective_lambda2() == 0.0) {
      throw Error(ErrorKind::invalid_config, "lambda1 and lambda2 are both zero");
    }
  }

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

/// Gaussian kernel on the age difference, in (0, 1].
inline double age_degree(double age_a, double age_b, double sigma) {
  const double d = age_a - age_b;
  return std::exp(-(d * d) / (2.0 * sigma * sigma));
}

inline DegreeMatrix age_degree_matrix(std::span<const double> ages, double sigma) {
  const std::size_t n = ages.size();
  auto values = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) values.at(i, j) = i == j ? 1.0 : age_degree(ages[i], ages[j], sigma);
  return DegreeMatrix{std::move(values), DegreeKind::age_kernel};
}

/// Binary pairing for 2N rows where row i and row i + N are views of the
/// same subject.
inline DegreeMatrix simclr_pairing(std::size_t subjects) {
  const std::size_t n = 2 * subjects;
  auto values = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < subjects; ++i) {
    values.at(i, i + subjects) = 1.0;
    values.at(i + subjects, i) = 1.0;
  }
  return DegreeMatrix{std::move(values), DegreeKind::simclr_binary};
}

/// Per-anchor weights W[a][i] / sum_{j != a} W[a][j] with a zero diagonal.
inline Tensor normalized_positive_weights(const Tensor& weights) {
  if (weights.rank() != 2 || weights.rows() != weights.cols()) {
    throw Error(ErrorKind::dimension_mismatch, "weight matrix must be square");
  }
  const std::size_t n = weights.rows();
  Tensor p = Tensor::zeros({n, n});
  for (std::size_t a = 0; a < n; ++a) {
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      const double w = weights.at(a, j);
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw Error(ErrorKind::domain_error, "contrastive weights must be finite and >= 0");
      }
      total += w;
    }
    if (!(total > 0.0)) {
      throw Error(ErrorKind::degenerate_anchor, "anchor " + std::to_string(a) + " has no positive weight");
    }
    for (std::size_t j = 0; j < n; ++j)
      if (j != a) p.at(a, j) = weights.at(a, j) / total;
  }
  return p;
}

/// Kernel-weighted InfoNCE averaged over anchors. Rows of z are unit
/// embeddings, so z z^T holds the cosine similarities. Each anchor is
/// excluded from its own positives and denominator:
///
///   L = 1/B sum_a [ log sum_{t != a} exp(s_at / tau) - sum_{i != a} p_ai s_ai / tau ]
///
/// with p_ai the row-normalized weights. The exponent is shifted by 1/tau,
/// the largest possible similarity, before exponentiating.
inline Var weighted_contrastive(Tape& tape, Var z, const Tensor& weights, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorKind::domain_error, "temperature must be positive");
  const Tensor& zv = tape.value(z);
  if (zv.rank() != 2) throw Error(ErrorKind::shape_mismatch, "embeddings must be a (batch, d) matrix");
  const std::size_t n = zv.rows();
  if (n < 2) throw Error(ErrorKind::dimension_mismatch, "contrastive loss needs a batch of at least 2");
  if (weights.rows() != n) {
    throw Error(ErrorKind::dimension_mismatch, "weight matrix size " + std::to_string(weights.rows()) +
                                                   " differs from batch size " + std::to_string(n));
  }
  Tensor p = normalized_positive_weights(weights);
  Tensor mask = Tensor::filled({n, n}, 1.0);
  for (std::size_t i = 0; i < n; ++i) mask.at(i, i) = 0.0;
  const double shift = 1.0 / tau;

  Var sim = tape.scale(tape.matmul(z, tape.transpose(z)), 1.0 / tau);
  Var shifted = tape.sub(sim, tape.constant(Tensor::filled({n, n}, shift)));
  Var masked = tape.mul(tape.exp(shifted), tape.constant(std::move(mask)));
  Var log_den = tape.log(tape.sum(masked, numgrad::SumAxis::rows));
  Var positive = tape.sum(tape.mul(sim, tape.constant(std::move(p))));
  Var total = tape.sub(tape.sum(log_den), positive);
  // sum_a (log_den_a + shift) - positive, divided by B
  Var with_shift = tape.add(total, tape.constant(Tensor::scalar(shift * static_cast<double>(n))));
  return tape.scale(with_shift, 1.0 / static_cast<double>(n));
}

inline Var weighted_contrastive(Tape& tape, Var z, const DegreeMatrix& w, double tau) {
  return weighted_contrastive(tape, z, w.values, tau);
}

/// Forward-only convenience for unit embeddings held as plain values.
inline double weighted_contrastive_value(const Tensor& z, const Tensor& weights, double tau) {
  Tape tape;
  return tape.value(weighted_contrastive(tape, tape.constant(z), weights, tau)).item();
}

inline Var yaware_loss(Tape& tape, Var z, std::span<const double> ages, double sigma, double tau) {
  return weighted_contrastive(tape, z, age_degree_matrix(ages, sigma), tau);
}

/// Stand-in for the exponentially reweighted baseline: the y-Aware engine
/// with per-pair weight exp(w) - 1 on the age kernel w. This approximates,
/// and is not claimed to reproduce, the published ExpW objective.
inline Tensor expw_weights(const Tensor& kernel) {
  Tensor out = kernel;
  for (auto& v : out.data()) v = std::expm1(v);
  return out;
}

inline Var expw_loss(Tape& tape, Var z, std::span<const double> ages, double sigma, double tau) {
  return weighted_contrastive(tape, z, expw_weights(age_degree_matrix(ages, sigma).values), tau);
}

inline Var anatcl_local_loss(Tape& tape, Var z, const DegreeMatrix& alpha, double tau) {
  if (alpha.kind != DegreeKind::local_anat) {
    throw Error(ErrorKind::dimension_mismatch, "local AnatCL loss needs a local_anat degree matrix");
  }
  return weighted_contrastive(tape, z, alpha, tau);
}

inline Var anatcl_global_loss(Tape& tape, Var z, const DegreeMatrix& beta, double tau) {
  if (beta.kind != DegreeKind::global_anat) {
    throw Error(ErrorKind::dimension_mismatch, "global AnatCL loss needs a global_anat degree matrix");
  }
  return weighted_contrastive(tape, z, beta, tau);
}

/// lambda1 * anatomical term + lambda2 * y-Aware term. Terms with a zero
/// weight are not evaluated.
inline Var combined_loss(Tape& tape, Var z, const DegreeMatrix& anat, std::span<const double> ages,
                         const LossConfig& config) {
  config.validate();
  const bool local = uses_local_degrees(config.variant);
  if (!local && !uses_global_degrees(config.variant)) {
    throw Error(ErrorKind::invalid_config,
                "combined loss needs an anatcl/anatssl variant, got " + std::string(to_string(config.variant)));
  }
  const double l1 = config.lambda1, l2 = config.effective_lambda2();
  std::optional<Var> total;
  if (l1 != 0.0) {
    Var anat_term = local ? anatcl_local_loss(tape, z, anat, config.temperature)
                          : anatcl_global_loss(tape, z, anat, config.temperature);
    total = l1 == 1.0 ? anat_term : tape.scale(anat_term, l1);
  }
  if (l2 != 0.0) {
    Var age_term = yaware_loss(tape, z, ages, config.sigma, config.temperature);
    if (l2 != 1.0) age_term = tape.scale(age_term, l2);
    total = total ? tape.add(*total, age_term) : age_term;
  }
  return *total;
}

/// NT-Xent over 2N rows: rows i and i + N are the two views of subject i.
inline Var simclr_loss(Tape& tape, Var z_views, double tau) {
  const std::size_t rows = tape.value(z_views).rows();
  if (rows % 2 != 0) throw Error(ErrorKind::dimension_mismatch, "SimCLR needs an even number of view rows");
  return weighted_contrastive(tape, z_views, simclr_pairing(rows / 2), tau);
}

/// |x| as relu(x) + relu(-x); the derivative at 0 is 0.
inline Var abs(Tape& tape, Var x) { return tape.add(tape.relu(x), tape.relu(tape.scale(x, -1.0))); }

/// Mean absolute error between (B, 1) predictions and ages in years.
inline Var l1_age_loss(Tape& tape, Var predictions, std::span<const double> ages) {
  const Tensor& pv = tape.value(predictions);
  if (pv.size() != ages.size()) {
    throw Error(ErrorKind::length_mismatch, std::to_string(pv.size()) + " predictions for " +
                                                std::to_string(ages.size()) + " ages");
  }
  Tensor target(pv.shape(), std::vector<double>(ages.begin(), ages.end()));
  return tape.mean(abs(tape, tape.sub(predictions, tape.constant(std::move(target)))));
}

/// Mean over the batch of || r(features) - mean_descriptor ||_1, with r the
/// linear map features * weight + bias.
inline Var anat_sup_loss(Tape& tape, Var features, Var weight, Var bias, const Tensor& mean_descriptors) {
  const Tensor& f = tape.value(features);
  const Tensor& w = tape.value(weight);
  if (f.rank() != 2 || w.rank() != 2 || w.rows() != f.cols() || mean_descriptors.rank() != 2 ||
      mean_descriptors.rows() != f.rows() || mean_descriptors.cols() != w.cols()) {
    throw Error(ErrorKind::dimension_mismatch, "anat-sup shapes: features " + numgrad::shape_string(f.shape()) +
                                                   ", weight " + numgrad::shape_string(w.shape()) + ", targets " +
                                                   numgrad::shape_string(mean_descriptors.shape()));
  }
  Var pred = tape.add(tape.matmul(features, weight), bias);
  Var err = abs(tape, tape.sub(pred, tape.constant(mean_descriptors)));
  return tape.scale(tape.sum(err), 1.0 / static_cast<double>(f.rows()));
}

}  // namespace anatcl::losses
