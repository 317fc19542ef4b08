// SPDX-License-Identifier: Apache-2.0
#include "ping/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ping/errors.hpp"

namespace ping {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw ShapeError("matrix of " + std::to_string(rows_) + "x" + std::to_string(cols_) + " given " +
                     std::to_string(values_.size()) + " values");
  }
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  }
  return t;
}

void Matrix::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

void Matrix::add_scaled(const Matrix& other, double scale) {
  if (other.rows_ != rows_ || other.cols_ != cols_) {
    throw ShapeError("add_scaled: shape mismatch");
  }
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += scale * other.values_[i];
}

Matrix gather_rows(const Matrix& source, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), source.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= source.rows()) throw IndexError("gather_rows: index out of range");
    std::copy_n(source.row(indices[i]).begin(), source.cols(), out.row(i).begin());
  }
  return out;
}

}  // namespace ping
