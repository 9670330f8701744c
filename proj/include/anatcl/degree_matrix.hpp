#pragma once

#include <cmath>
#include <string>

#include "anatcl/error.hpp"
#include "anatcl/numgrad/tensor.hpp"

namespace anatcl {

enum class DegreeKind { age_kernel, local_anat, global_anat, simclr_binary };

/// Batch-pairwise degrees of positiveness in [0, 1]. Constant with respect
/// to gradients.
struct DegreeMatrix {
  numgrad::Tensor values;
  DegreeKind kind = DegreeKind::age_kernel;

  std::size_t size() const noexcept { return values.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return values.at(i, j); }

  /// Checks squareness, range, symmetry, and (except for binary pairings)
  /// the unit diagonal.
  void validate(double tol = 1e-12) const {
    if (values.rank() != 2 || values.rows() != values.cols()) {
      throw Error(ErrorKind::dimension_mismatch, "degree matrix must be square");
    }
    const std::size_t n = values.rows();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double v = values.at(i, j);
        if (!(v >= -tol && v <= 1.0 + tol)) {
          throw Error(ErrorKind::domain_error, "degree " + std::to_string(v) + " outside [0,1]");
        }
        if (std::abs(v - values.at(j, i)) > tol) {
          throw Error(ErrorKind::domain_error, "degree matrix is not symmetric");
        }
      }
      if (kind != DegreeKind::simclr_binary && std::abs(values.at(i, i) - 1.0) > tol) {
        throw Error(ErrorKind::domain_error, "degree matrix diagonal must be 1");
      }
    }
  }
};

}  // namespace anatcl
