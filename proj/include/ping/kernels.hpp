// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense kernels behind every loss, layer and neighbor scan.
//
// Two implementations share one per-row body:
//   ping::kernels::serial  - plain loops, the reference used by tests
//   ping::kernels          - the same rows distributed with OpenMP
// Each output row is produced by exactly one thread with a fixed summation
// order, so both variants are bit-identical regardless of thread count.

#include <cstddef>
#include <span>
#include <vector>

#include "ping/matrix.hpp"

namespace ping::kernels {

/// C = scale * A * B^T   (A: n x k, B: m x k, C: n x m)
Matrix gemm_abt(const Matrix& a, const Matrix& b, double scale = 1.0);
/// C = A * B             (A: n x k, B: k x m)
Matrix gemm_ab(const Matrix& a, const Matrix& b);
/// C = A^T * B           (A: k x n, B: k x m)
Matrix gemm_atb(const Matrix& a, const Matrix& b);

/// For each query row, the index of the candidate row with the smallest squared
/// L2 distance. Candidates are `count` rows of `dim` values; ties go to the
/// lower index.
std::vector<std::size_t> nearest_rows(const Matrix& queries, std::span<const double> candidates,
                                      std::size_t dim);

/// Squared L2 distance from one query to every candidate row.
std::vector<double> squared_distances(std::span<const double> query, std::span<const double> candidates,
                                      std::size_t dim);

/// Number of threads the parallel variants will use.
int max_threads();

namespace serial {

Matrix gemm_abt(const Matrix& a, const Matrix& b, double scale = 1.0);
Matrix gemm_ab(const Matrix& a, const Matrix& b);
Matrix gemm_atb(const Matrix& a, const Matrix& b);
std::vector<std::size_t> nearest_rows(const Matrix& queries, std::span<const double> candidates,
                                      std::size_t dim);

}  // namespace serial

}  // namespace ping::kernels
