// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0
//
// Times the OpenMP kernels against their serial references.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "depthroute/kernels.hpp"
#include "depthroute/rng.hpp"

using namespace depthroute;

namespace {

std::vector<float> random_vec(std::size_t n, Rng& rng) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double fast, double ref) {
  std::printf("%-28s omp %9.3f ms   reference %9.3f ms   speedup %5.2fx\n", name, fast, ref,
              ref / fast);
}

}  // namespace

int main() {
  std::printf("threads: %d\n", omp_get_max_threads());
  Rng rng(7);
  for (std::size_t n : {64, 128, 256}) {
    const std::size_t m = 512;
    auto a = random_vec(m * n, rng), b = random_vec(n * n, rng);
    std::vector<float> c(m * n);
    char name[64];
    std::snprintf(name, sizeof(name), "gemm %zux%zux%zu", m, n, n);
    report(name, time_ms([&] { kernels::gemm(a, b, c, m, n, n); }, 5),
           time_ms([&] { kernels::reference::gemm(a, b, c, m, n, n); }, 5));
    std::snprintf(name, sizeof(name), "gemm_nt %zux%zux%zu", m, n, n);
    report(name, time_ms([&] { kernels::gemm_nt(a, b, c, m, n, n); }, 5),
           time_ms([&] { kernels::reference::gemm_nt(a, b, c, m, n, n); }, 5));
  }
  for (std::size_t s : {128, 512}) {
    const kernels::AttentionDims dims{4, 2, 32};
    auto q = random_vec(s * dims.q_width(), rng);
    auto k = random_vec(s * dims.kv_width(), rng);
    auto v = random_vec(s * dims.kv_width(), rng);
    std::vector<float> out(s * dims.q_width());
    char name[64];
    std::snprintf(name, sizeof(name), "attention seq %zu", s);
    report(name, time_ms([&] { kernels::attention_forward(q, k, v, out, dims, s, s, 0); }, 5),
           time_ms([&] { kernels::reference::attention_forward(q, k, v, out, dims, s, s, 0); }, 5));
  }
  return 0;
}
