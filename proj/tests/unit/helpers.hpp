#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "vnt/rotation.hpp"
#include "vnt/tensor.hpp"

namespace vnt::test {

inline Tensor randn(const Shape& shape, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = g(rng);
  return Tensor(shape, std::move(v));
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("vnt_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace vnt::test
