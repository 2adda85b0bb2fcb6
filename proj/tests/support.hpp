// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mcsp/numcore/complex_matrix.hpp"
#include "mcsp/numcore/rng.hpp"
#include "mcsp/numcore/tensor.hpp"

namespace mcsp::test {

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, double scale = 1.0) {
  RngStream rng(seed, stream_id("test.tensor"));
  Tensor t(shape);
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

inline ComplexMatrix random_grid(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  RngStream rng(seed, stream_id("test.grid"));
  ComplexMatrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) {
    m.re()[i] = rng.normal();
    m.im()[i] = rng.normal();
  }
  return m;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("mcsp_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace mcsp::test
