// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>

#include "hava/autodiff.hpp"
#include "hava/matrix.hpp"

namespace hava::test {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("hava_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = n(rng);
  return m;
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t size, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(size);
  for (auto& x : v) x = n(rng);
  return v;
}

inline ad::Value random_parameter(std::mt19937_64& rng, ad::Shape shape, double scale = 1.0) {
  return ad::Value::parameter(shape, random_vector(rng, ad::shape_size(shape), scale));
}

inline ad::Value random_constant(std::mt19937_64& rng, ad::Shape shape, double scale = 1.0) {
  return ad::Value::constant(shape, random_vector(rng, ad::shape_size(shape), scale));
}

}  // namespace hava::test
