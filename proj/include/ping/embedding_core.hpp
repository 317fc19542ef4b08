// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ping/matrix.hpp"

namespace ping {

/// Rows with an L2 norm below this are left untouched by normalization.
inline constexpr double kNormEpsilon = 1e-12;

/// Logits inv_temperature * a_i . b_j for every pair of rows.
struct SimilarityMatrix {
  Matrix logits;
  double inv_temperature = 1.0;

  std::size_t rows() const noexcept { return logits.rows(); }
  std::size_t cols() const noexcept { return logits.cols(); }
  double operator()(std::size_t i, std::size_t j) const noexcept { return logits(i, j); }
};

struct CrossEntropyResult {
  double loss = 0.0;
  Matrix grad;  ///< d loss / d logits, same shape as the logits
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t probe_count = 0;
};

/// Unit-L2 rows; rows with norm < kNormEpsilon are copied as is.
/// Throws NumericalInputError on NaN/Inf input.
FeatureBatch l2_normalize(const FeatureBatch& batch);

/// Backward of l2_normalize for one batch: given the pre-normalization rows
/// and d loss / d output, returns d loss / d input.
FeatureBatch l2_normalize_backward(const FeatureBatch& input, const FeatureBatch& grad_output);

SimilarityMatrix similarity_matrix(const FeatureBatch& a, const FeatureBatch& b, double inv_temperature);

/// Mean over rows of -log softmax(row)[target], with a per-row max shift.
CrossEntropyResult softmax_cross_entropy_rows(const Matrix& logits, std::span<const std::size_t> targets);
CrossEntropyResult softmax_cross_entropy_rows(const SimilarityMatrix& sim, std::span<const std::size_t> targets);

/// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits);

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central-difference gradient estimate of f at x.
std::vector<double> finite_difference_gradient(const ScalarFunction& f, std::span<const double> x, double h);

/// |a - b| / max(|a|, |b|, floor); the floor keeps near-zero gradients from
/// dominating the report.
double relative_error(double a, double b, double floor = 1e-8);

/// Norm-wise relative error ||a - n|| / max(||a||, ||n||, floor) of one
/// parameter group; elementwise ratios are meaningless for near-zero entries.
GradCheckReport compare_gradients(std::span<const double> analytic, std::span<const double> numeric,
                                  double floor = 1e-12);

}  // namespace ping
