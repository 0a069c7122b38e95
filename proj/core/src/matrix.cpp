// SPDX-License-Identifier: Apache-2.0
#include "hava/matrix.hpp"

namespace hava {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw std::invalid_argument("Matrix: payload has " + std::to_string(data_.size()) +
                                " values, expected " + std::to_string(rows_ * cols_));
  }
}

}  // namespace hava
