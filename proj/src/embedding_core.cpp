// SPDX-License-Identifier: Apache-2.0
#include "ping/embedding_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ping/errors.hpp"
#include "ping/kernels.hpp"

namespace ping {

FeatureBatch l2_normalize(const FeatureBatch& batch) {
  if (!batch.all_finite()) throw NumericalInputError("l2_normalize: non-finite input");
  FeatureBatch out = batch;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    double sq = 0.0;
    for (double v : row) sq += v * v;
    const double norm = std::sqrt(sq);
    // Rows already unit up to rounding stay as they are (idempotence).
    if (norm < kNormEpsilon || std::abs(norm - 1.0) <= 4.0 * std::numeric_limits<double>::epsilon()) continue;
    for (double& v : row) v /= norm;
  }
  return out;
}

FeatureBatch l2_normalize_backward(const FeatureBatch& input, const FeatureBatch& grad_output) {
  if (input.rows() != grad_output.rows() || input.cols() != grad_output.cols()) {
    throw ShapeError("l2_normalize_backward: shape mismatch");
  }
  FeatureBatch grad(input.rows(), input.cols());
  for (std::size_t r = 0; r < input.rows(); ++r) {
    auto x = input.row(r);
    auto g = grad_output.row(r);
    auto out = grad.row(r);
    double sq = 0.0;
    for (double v : x) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm < kNormEpsilon) {
      std::copy(g.begin(), g.end(), out.begin());
      continue;
    }
    // d(x/|x|) = (I - u u^T) / |x|
    double dot = 0.0;
    for (std::size_t m = 0; m < x.size(); ++m) dot += (x[m] / norm) * g[m];
    for (std::size_t m = 0; m < x.size(); ++m) out[m] = (g[m] - (x[m] / norm) * dot) / norm;
  }
  return grad;
}

SimilarityMatrix similarity_matrix(const FeatureBatch& a, const FeatureBatch& b, double inv_temperature) {
  if (a.cols() != b.cols()) {
    throw ShapeError("similarity_matrix: dims " + std::to_string(a.cols()) + " and " + std::to_string(b.cols()));
  }
  if (!(inv_temperature > 0.0)) throw ParameterError("similarity_matrix: inverse temperature must be positive");
  return {kernels::gemm_abt(a, b, inv_temperature), inv_temperature};
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      p(i, j) = std::exp(row[j] - mx);
      z += p(i, j);
    }
    for (std::size_t j = 0; j < row.size(); ++j) p(i, j) /= z;
  }
  return p;
}

CrossEntropyResult softmax_cross_entropy_rows(const Matrix& logits, std::span<const std::size_t> targets) {
  if (logits.rows() == 0 || logits.cols() == 0) throw ShapeError("softmax_cross_entropy_rows: empty logits");
  if (targets.size() != logits.rows()) throw ShapeError("softmax_cross_entropy_rows: one target per row required");
  for (std::size_t t : targets) {
    if (t >= logits.cols()) throw IndexError("softmax_cross_entropy_rows: target " + std::to_string(t) + " out of range");
  }
  const double inv_rows = 1.0 / static_cast<double>(logits.rows());
  CrossEntropyResult out{0.0, Matrix(logits.rows(), logits.cols())};
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double log_z = std::log(z);
    out.loss -= (row[targets[i]] - mx - log_z);
    for (std::size_t j = 0; j < row.size(); ++j) {
      out.grad(i, j) = std::exp(row[j] - mx - log_z) * inv_rows;
    }
    out.grad(i, targets[i]) -= inv_rows;
  }
  out.loss *= inv_rows;
  return out;
}

CrossEntropyResult softmax_cross_entropy_rows(const SimilarityMatrix& sim, std::span<const std::size_t> targets) {
  return softmax_cross_entropy_rows(sim.logits, targets);
}

std::vector<double> finite_difference_gradient(const ScalarFunction& f, std::span<const double> x, double h) {
  if (!(h > 0.0)) throw ParameterError("finite_difference_gradient: step must be positive");
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double orig = point[i];
    point[i] = orig + h;
    const double fp = f(point);
    point[i] = orig - h;
    const double fm = f(point);
    point[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericalInputError("finite_difference_gradient: non-finite function value");
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double relative_error(double a, double b, double floor) {
  const double scale = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / scale;
}

GradCheckReport compare_gradients(std::span<const double> analytic, std::span<const double> numeric, double floor) {
  if (analytic.size() != numeric.size()) throw ShapeError("compare_gradients: length mismatch");
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nn), floor});
  return {std::sqrt(diff) / scale, analytic.size()};
}

}  // namespace ping
