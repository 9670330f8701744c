#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "anatcl/numgrad/tape.hpp"

namespace anatcl::numgrad {

/// Builds a scalar loss on a fresh tape from the given parameter handles.
using Objective = std::function<Var(Tape&, std::span<const Var>)>;

inline double evaluate(const Objective& f, std::span<const Tensor> params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.parameter(p));
  return tape.value(f(tape, vars)).item();
}

inline std::vector<Tensor> analytic_gradient(const Objective& f, std::span<const Tensor> params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.parameter(p));
  const Gradients grads = tape.backward(f(tape, vars));
  std::vector<Tensor> out;
  out.reserve(vars.size());
  for (Var v : vars) out.push_back(grads[v]);
  return out;
}

/// max |analytic - central difference| / max(1, |central difference|) over
/// every parameter entry. Non-finite evaluations yield NaN so a broken
/// objective can never pass a `< tol` comparison.
inline double gradient_error(const Objective& f, std::span<const Tensor> params,
                             std::span<const Tensor> analytic, double step) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  if (!(step > 0.0)) throw Error(ErrorKind::domain_error, "finite-difference step must be positive");
  if (analytic.size() != params.size()) {
    throw Error(ErrorKind::shape_mismatch, "gradient count differs from parameter count");
  }
  std::vector<Tensor> probe(params.begin(), params.end());
  double worst = 0.0;
  try {
    for (std::size_t p = 0; p < probe.size(); ++p) {
      if (analytic[p].shape() != probe[p].shape()) {
        throw Error(ErrorKind::shape_mismatch, "gradient shape differs from parameter shape");
      }
      for (std::size_t i = 0; i < probe[p].size(); ++i) {
        const double orig = probe[p][i];
        probe[p][i] = orig + step;
        const double up = evaluate(f, probe);
        probe[p][i] = orig - step;
        const double down = evaluate(f, probe);
        probe[p][i] = orig;
        const double fd = (up - down) / (2.0 * step);
        const double err = std::abs(analytic[p][i] - fd) / std::max(1.0, std::abs(fd));
        if (!std::isfinite(err)) return nan;
        worst = std::max(worst, err);
      }
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::non_finite) return nan;
    throw;
  }
  return worst;
}

inline double finite_diff_check(const Objective& f, std::span<const Tensor> params, double step = 1e-5) {
  std::vector<Tensor> analytic;
  try {
    analytic = analytic_gradient(f, params);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::non_finite) return std::numeric_limits<double>::quiet_NaN();
    throw;
  }
  return gradient_error(f, params, analytic, step);
}

}  // namespace anatcl::numgrad
