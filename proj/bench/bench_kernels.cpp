// SPDX-License-Identifier: Apache-2.0
// Serial reference vs OpenMP kernels at training-step sizes.
//   bench_kernels [repeats]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>

#include "ping/kernels.hpp"
#include "ping/rng.hpp"

using namespace ping;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.values()) v = standard_normal(rng);
  return m;
}

double time_ms(int repeats, const std::function<void()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < repeats; ++i) fn();
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / repeats;
}

void report(const char* name, double serial_ms, double parallel_ms, bool identical) {
  std::printf("%-28s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx   %s\n", name, serial_ms, parallel_ms,
              serial_ms / parallel_ms, identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 20;
  std::printf("threads: %d, repeats: %d\n", kernels::max_threads(), repeats);
  Rng rng(7);
  const Matrix a = random_matrix(256, 32, rng);
  const Matrix b = random_matrix(256, 32, rng);
  const Matrix x = random_matrix(256, 64, rng);
  const Matrix w = random_matrix(64, 64, rng);
  const Matrix queries = random_matrix(256, 64, rng);
  const Matrix bank = random_matrix(2048, 64, rng);

  int failures = 0;
  {
    Matrix s, p;
    const double ts = time_ms(repeats, [&] { s = kernels::serial::gemm_abt(a, b, 14.3); });
    const double tp = time_ms(repeats, [&] { p = kernels::gemm_abt(a, b, 14.3); });
    report("similarity 256x256x32", ts, tp, s == p);
    failures += !(s == p);
  }
  {
    Matrix s, p;
    const double ts = time_ms(repeats, [&] { s = kernels::serial::gemm_ab(x, w); });
    const double tp = time_ms(repeats, [&] { p = kernels::gemm_ab(x, w); });
    report("input grad 256x64x64", ts, tp, s == p);
    failures += !(s == p);
  }
  {
    Matrix s, p;
    const double ts = time_ms(repeats, [&] { s = kernels::serial::gemm_atb(x, x); });
    const double tp = time_ms(repeats, [&] { p = kernels::gemm_atb(x, x); });
    report("weight grad 64x256x64", ts, tp, s == p);
    failures += !(s == p);
  }
  {
    std::vector<std::size_t> s, p;
    const double ts = time_ms(repeats, [&] { s = kernels::serial::nearest_rows(queries, bank.values(), 64); });
    const double tp = time_ms(repeats, [&] { p = kernels::nearest_rows(queries, bank.values(), 64); });
    report("nn scan 256 q x 2048 x 64", ts, tp, s == p);
    failures += !(s == p);
  }
  return failures == 0 ? 0 : 1;
}
