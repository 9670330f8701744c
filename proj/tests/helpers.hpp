#pragma once

#include <gtest/gtest.h>

#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "anatcl/error.hpp"
#include "anatcl/numgrad/tensor.hpp"
#include "oracles.hpp"

namespace testing_helpers {

inline anatcl::numgrad::Tensor to_tensor(const oracle::Matrix& m) {
  std::vector<double> data;
  for (const auto& r : m) data.insert(data.end(), r.begin(), r.end());
  return anatcl::numgrad::Tensor::matrix(m.size(), m.empty() ? 0 : m[0].size(), std::move(data));
}

inline oracle::Matrix to_rows(const anatcl::numgrad::Tensor& t) {
  oracle::Matrix m(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) m[r].assign(t.row(r).begin(), t.row(r).end());
  return m;
}

inline void expect_kind(const std::function<void()>& fn, anatcl::ErrorKind kind) {
  try {
    fn();
    ADD_FAILURE() << "expected " << anatcl::to_string(kind);
  } catch (const anatcl::Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

/// Fresh empty directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("anatcl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_helpers
