// SPDX-License-Identifier: Apache-2.0
#include "ping/kernels.hpp"

#include <limits>

#include <omp.h>

#include "ping/errors.hpp"

namespace ping::kernels {
namespace {

void check_abt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("gemm_abt: inner dimensions differ");
}
void check_ab(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("gemm_ab: inner dimensions differ");
}
void check_atb(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("gemm_atb: inner dimensions differ");
}
void check_candidates(const Matrix& queries, std::span<const double> candidates, std::size_t dim) {
  if (dim == 0 || queries.cols() != dim || candidates.size() % dim != 0) {
    throw ShapeError("nearest_rows: dimension mismatch");
  }
  if (candidates.empty()) throw EmptyInputError("nearest_rows: no candidates");
}

// Row bodies shared by the serial and parallel drivers.

// Four interleaved partial sums; the fixed pairing keeps results reproducible.
inline double dot(const double* x, const double* y, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t m = 0;
  for (; m + 4 <= n; m += 4) {
    s0 += x[m] * y[m];
    s1 += x[m + 1] * y[m + 1];
    s2 += x[m + 2] * y[m + 2];
    s3 += x[m + 3] * y[m + 3];
  }
  for (; m < n; ++m) s0 += x[m] * y[m];
  return (s0 + s1) + (s2 + s3);
}

inline double squared_distance(const double* x, const double* y, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t m = 0;
  for (; m + 4 <= n; m += 4) {
    const double d0 = x[m] - y[m], d1 = x[m + 1] - y[m + 1], d2 = x[m + 2] - y[m + 2], d3 = x[m + 3] - y[m + 3];
    s0 += d0 * d0;
    s1 += d1 * d1;
    s2 += d2 * d2;
    s3 += d3 * d3;
  }
  for (; m < n; ++m) {
    const double d = x[m] - y[m];
    s0 += d * d;
  }
  return (s0 + s1) + (s2 + s3);
}

inline void abt_row(const Matrix& a, const Matrix& b, double scale, std::size_t i, Matrix& c) {
  const double* ai = a.row(i).data();
  const std::size_t k = a.cols();
  for (std::size_t j = 0; j < b.rows(); ++j) {
    c(i, j) = scale * dot(ai, b.row(j).data(), k);
  }
}

inline void ab_row(const Matrix& a, const Matrix& b, std::size_t i, Matrix& c) {
  double* ci = c.row(i).data();
  const std::size_t m = b.cols();
  for (std::size_t k = 0; k < a.cols(); ++k) {
    const double aik = a(i, k);
    const double* bk = b.row(k).data();
    for (std::size_t j = 0; j < m; ++j) ci[j] += aik * bk[j];
  }
}

inline void atb_row(const Matrix& a, const Matrix& b, std::size_t i, Matrix& c) {
  double* ci = c.row(i).data();
  const std::size_t m = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double aki = a(k, i);
    const double* bk = b.row(k).data();
    for (std::size_t j = 0; j < m; ++j) ci[j] += aki * bk[j];
  }
}

inline std::size_t nearest_row(std::span<const double> q, std::span<const double> candidates, std::size_t dim) {
  const std::size_t count = candidates.size() / dim;
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < count; ++r) {
    const double d = squared_distance(q.data(), candidates.data() + r * dim, dim);
    if (d < best_d) {
      best_d = d;
      best = r;
    }
  }
  return best;
}

}  // namespace

Matrix gemm_abt(const Matrix& a, const Matrix& b, double scale) {
  check_abt(a, b);
  Matrix c(a.rows(), b.rows());
  const auto n = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) abt_row(a, b, scale, static_cast<std::size_t>(i), c);
  return c;
}

Matrix gemm_ab(const Matrix& a, const Matrix& b) {
  check_ab(a, b);
  Matrix c(a.rows(), b.cols());
  const auto n = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) ab_row(a, b, static_cast<std::size_t>(i), c);
  return c;
}

Matrix gemm_atb(const Matrix& a, const Matrix& b) {
  check_atb(a, b);
  Matrix c(a.cols(), b.cols());
  const auto n = static_cast<std::ptrdiff_t>(a.cols());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) atb_row(a, b, static_cast<std::size_t>(i), c);
  return c;
}

std::vector<std::size_t> nearest_rows(const Matrix& queries, std::span<const double> candidates,
                                      std::size_t dim) {
  check_candidates(queries, candidates, dim);
  std::vector<std::size_t> out(queries.rows());
  const auto n = static_cast<std::ptrdiff_t>(queries.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = nearest_row(queries.row(static_cast<std::size_t>(i)), candidates, dim);
  }
  return out;
}

std::vector<double> squared_distances(std::span<const double> query, std::span<const double> candidates,
                                      std::size_t dim) {
  if (dim == 0 || query.size() != dim || candidates.size() % dim != 0) {
    throw ShapeError("squared_distances: dimension mismatch");
  }
  const std::size_t count = candidates.size() / dim;
  std::vector<double> out(count);
  for (std::size_t r = 0; r < count; ++r) out[r] = squared_distance(query.data(), candidates.data() + r * dim, dim);
  return out;
}

int max_threads() { return omp_get_max_threads(); }

namespace serial {

Matrix gemm_abt(const Matrix& a, const Matrix& b, double scale) {
  check_abt(a, b);
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) abt_row(a, b, scale, i, c);
  return c;
}

Matrix gemm_ab(const Matrix& a, const Matrix& b) {
  check_ab(a, b);
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) ab_row(a, b, i, c);
  return c;
}

Matrix gemm_atb(const Matrix& a, const Matrix& b) {
  check_atb(a, b);
  Matrix c(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i) atb_row(a, b, i, c);
  return c;
}

std::vector<std::size_t> nearest_rows(const Matrix& queries, std::span<const double> candidates,
                                      std::size_t dim) {
  check_candidates(queries, candidates, dim);
  std::vector<std::size_t> out(queries.rows());
  for (std::size_t i = 0; i < queries.rows(); ++i) out[i] = nearest_row(queries.row(i), candidates, dim);
  return out;
}

}  // namespace serial
}  // namespace ping::kernels
