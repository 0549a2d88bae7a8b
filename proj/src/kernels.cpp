// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthroute/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <vector>

#include "depthroute/errors.hpp"

namespace depthroute::kernels {
namespace {

std::atomic<int> g_counting_depth{0};
std::atomic<std::uint64_t> g_flops{0};

void count(std::uint64_t flops) {
  if (g_counting_depth.load(std::memory_order_relaxed) > 0) {
    g_flops.fetch_add(flops, std::memory_order_relaxed);
  }
}

void check_sizes(std::size_t a, std::size_t b, std::size_t c, std::size_t m, std::size_t k,
                 std::size_t n) {
  if (a < m * k || b < k * n || c < m * n) {
    throw DimensionError("gemm buffers too small for " + std::to_string(m) + "x" +
                         std::to_string(k) + " by " + std::to_string(k) + "x" +
                         std::to_string(n));
  }
}

using Index = std::ptrdiff_t;

}  // namespace

FlopCounting::FlopCounting() { g_counting_depth.fetch_add(1); }
FlopCounting::~FlopCounting() { g_counting_depth.fetch_sub(1); }
std::uint64_t FlopCounting::flops() const { return g_flops.load(); }

void gemm(std::span<const float> a, std::span<const float> b, std::span<float> c,
          std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  check_sizes(a.size(), b.size(), c.size(), m, k, n);
  count(2ULL * m * k * n);
  const float* pa = a.data();
  const float* pb = b.data();
  float* pc = c.data();
#pragma omp parallel for schedule(static) if (m * k * n > 32768)
  for (Index i = 0; i < static_cast<Index>(m); ++i) {
    float* crow = pc + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0f);
    const float* arow = pa + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = arow[p];
      const float* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(std::span<const float> a, std::span<const float> b, std::span<float> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  check_sizes(a.size(), b.size(), c.size(), m, k, n);
  std::vector<float> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  }
  gemm(a, bt, c, m, k, n, accumulate);
}

void gemm_tn(std::span<const float> a, std::span<const float> b, std::span<float> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  check_sizes(a.size(), b.size(), c.size(), m, k, n);
  count(2ULL * m * k * n);
  const float* pa = a.data();
  const float* pb = b.data();
  float* pc = c.data();
#pragma omp parallel for schedule(static) if (m * k * n > 32768)
  for (Index i = 0; i < static_cast<Index>(m); ++i) {
    float* crow = pc + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0f);
    for (std::size_t p = 0; p < k; ++p) {
      const float av = pa[p * m + i];
      const float* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void rmsnorm(std::span<const float> x, std::span<const float> weight, std::span<float> y,
             std::size_t rows, std::size_t dim, float eps, std::span<float> inv_rms) {
#pragma omp parallel for schedule(static) if (rows * dim > 65536)
  for (Index r = 0; r < static_cast<Index>(rows); ++r) {
    const float* xr = x.data() + r * dim;
    float* yr = y.data() + r * dim;
    float ss = 0.0f;
    for (std::size_t i = 0; i < dim; ++i) ss += xr[i] * xr[i];
    const float inv = 1.0f / std::sqrt(ss / static_cast<float>(dim) + eps);
    for (std::size_t i = 0; i < dim; ++i) yr[i] = xr[i] * inv * weight[i];
    if (!inv_rms.empty()) inv_rms[r] = inv;
  }
}

void rope(std::span<float> x, std::size_t rows, std::size_t heads, std::size_t head_dim,
          std::span<const std::size_t> positions, float theta, bool inverse) {
  const std::size_t half = head_dim / 2;
  std::vector<double> freq(half);
  for (std::size_t i = 0; i < half; ++i) {
    freq[i] = std::pow(static_cast<double>(theta),
                       -2.0 * static_cast<double>(i) / static_cast<double>(head_dim));
  }
  const std::size_t width = heads * head_dim;
  for (std::size_t r = 0; r < rows; ++r) {
    const double pos = static_cast<double>(positions[r]);
    float* row = x.data() + r * width;
    for (std::size_t i = 0; i < half; ++i) {
      const float cs = static_cast<float>(std::cos(pos * freq[i]));
      float sn = static_cast<float>(std::sin(pos * freq[i]));
      if (inverse) sn = -sn;
      for (std::size_t h = 0; h < heads; ++h) {
        float* pair = row + h * head_dim + 2 * i;
        const float a = pair[0];
        const float b = pair[1];
        pair[0] = a * cs - b * sn;
        pair[1] = a * sn + b * cs;
      }
    }
  }
}

void attention_forward(std::span<const float> q, std::span<const float> k,
                       std::span<const float> v, std::span<float> out, const AttentionDims& dims,
                       std::size_t nq, std::size_t nk, std::size_t first_pos,
                       std::span<float> probs) {
  if (first_pos + nq > nk) throw DimensionError("attention: queries extend past the keys");
  const std::size_t hd = dims.head_dim;
  const std::size_t qw = dims.q_width();
  const std::size_t kw = dims.kv_width();
  const std::size_t group = dims.group();
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
  std::uint64_t work = 0;
  for (std::size_t i = 0; i < nq; ++i) work += first_pos + i + 1;
  count(4ULL * work * hd * dims.heads);

  const Index total = static_cast<Index>(dims.heads * nq);
#pragma omp parallel if (total * static_cast<Index>(nk * hd) > 65536)
  {
    std::vector<float> scores(nk);
#pragma omp for schedule(static)
    for (Index t = 0; t < total; ++t) {
      const std::size_t h = static_cast<std::size_t>(t) / nq;
      const std::size_t i = static_cast<std::size_t>(t) % nq;
      const std::size_t g = h / group;
      const std::size_t limit = first_pos + i + 1;
      const float* qrow = q.data() + i * qw + h * hd;
      float mx = -std::numeric_limits<float>::infinity();
      for (std::size_t j = 0; j < limit; ++j) {
        const float* krow = k.data() + j * kw + g * hd;
        float s = 0.0f;
        for (std::size_t d = 0; d < hd; ++d) s += qrow[d] * krow[d];
        s *= scale;
        scores[j] = s;
        mx = std::max(mx, s);
      }
      float sum = 0.0f;
      for (std::size_t j = 0; j < limit; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        sum += scores[j];
      }
      const float inv = 1.0f / sum;
      float* orow = out.data() + i * qw + h * hd;
      std::fill(orow, orow + hd, 0.0f);
      for (std::size_t j = 0; j < limit; ++j) {
        const float p = scores[j] * inv;
        const float* vrow = v.data() + j * kw + g * hd;
        for (std::size_t d = 0; d < hd; ++d) orow[d] += p * vrow[d];
        if (!probs.empty()) probs[(h * nq + i) * nk + j] = p;
      }
      if (!probs.empty()) {
        for (std::size_t j = limit; j < nk; ++j) probs[(h * nq + i) * nk + j] = 0.0f;
      }
    }
  }
}

void attention_backward(std::span<const float> q, std::span<const float> k,
                        std::span<const float> v, std::span<const float> probs,
                        std::span<const float> dout, std::span<float> dq, std::span<float> dk,
                        std::span<float> dv, const AttentionDims& dims, std::size_t n) {
  const std::size_t hd = dims.head_dim;
  const std::size_t qw = dims.q_width();
  const std::size_t kw = dims.kv_width();
  const std::size_t group = dims.group();
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));

  // Each kv group owns its rows of dk/dv, so groups can run in parallel.
#pragma omp parallel if (dims.kv_heads > 1 && n * n * hd > 65536)
  {
    std::vector<float> dp(n);
#pragma omp for schedule(static)
    for (Index gi = 0; gi < static_cast<Index>(dims.kv_heads); ++gi) {
      const std::size_t g = static_cast<std::size_t>(gi);
      for (std::size_t h = g * group; h < (g + 1) * group; ++h) {
        for (std::size_t i = 0; i < n; ++i) {
          const float* prow = probs.data() + (h * n + i) * n;
          const float* grow = dout.data() + i * qw + h * hd;
          float dot = 0.0f;
          for (std::size_t j = 0; j <= i; ++j) {
            const float* vrow = v.data() + j * kw + g * hd;
            float s = 0.0f;
            for (std::size_t d = 0; d < hd; ++d) s += grow[d] * vrow[d];
            dp[j] = s;
            dot += s * prow[j];
          }
          const float* qrow = q.data() + i * qw + h * hd;
          for (std::size_t j = 0; j <= i; ++j) {
            const float p = prow[j];
            if (!dv.empty()) {
              float* dvrow = dv.data() + j * kw + g * hd;
              for (std::size_t d = 0; d < hd; ++d) dvrow[d] += p * grow[d];
            }
            const float ds = p * (dp[j] - dot) * scale;
            const float* krow = k.data() + j * kw + g * hd;
            if (!dq.empty()) {
              float* dqrow = dq.data() + i * qw + h * hd;
              for (std::size_t d = 0; d < hd; ++d) dqrow[d] += ds * krow[d];
            }
            if (!dk.empty()) {
              float* dkrow = dk.data() + j * kw + g * hd;
              for (std::size_t d = 0; d < hd; ++d) dkrow[d] += ds * qrow[d];
            }
          }
        }
      }
    }
  }
}

namespace reference {

void gemm(std::span<const float> a, std::span<const float> b, std::span<float> c,
          std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  check_sizes(a.size(), b.size(), c.size(), m, k, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      float acc = accumulate ? c[i * n + j] : 0.0f;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

void gemm_nt(std::span<const float> a, std::span<const float> b, std::span<float> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  check_sizes(a.size(), b.size(), c.size(), m, k, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      float acc = accumulate ? c[i * n + j] : 0.0f;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] = acc;
    }
  }
}

void gemm_tn(std::span<const float> a, std::span<const float> b, std::span<float> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  check_sizes(a.size(), b.size(), c.size(), m, k, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      float acc = accumulate ? c[i * n + j] : 0.0f;
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

void attention_forward(std::span<const float> q, std::span<const float> k,
                       std::span<const float> v, std::span<float> out, const AttentionDims& dims,
                       std::size_t nq, std::size_t nk, std::size_t first_pos) {
  // Full score matrix with an explicit causal mask.
  const std::size_t hd = dims.head_dim;
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
  std::vector<float> scores(nk);
  for (std::size_t h = 0; h < dims.heads; ++h) {
    const std::size_t g = h / dims.group();
    for (std::size_t i = 0; i < nq; ++i) {
      float mx = -std::numeric_limits<float>::infinity();
      for (std::size_t j = 0; j < nk; ++j) {
        if (j > first_pos + i) {
          scores[j] = -std::numeric_limits<float>::infinity();
          continue;
        }
        float s = 0.0f;
        for (std::size_t d = 0; d < hd; ++d) {
          s += q[i * dims.q_width() + h * hd + d] * k[j * dims.kv_width() + g * hd + d];
        }
        scores[j] = s * scale;
        mx = std::max(mx, scores[j]);
      }
      float sum = 0.0f;
      for (std::size_t j = 0; j < nk; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        sum += scores[j];
      }
      for (std::size_t d = 0; d < hd; ++d) {
        float acc = 0.0f;
        for (std::size_t j = 0; j < nk; ++j) {
          acc += scores[j] / sum * v[j * dims.kv_width() + g * hd + d];
        }
        out[i * dims.q_width() + h * hd + d] = acc;
      }
    }
  }
}

}  // namespace reference
}  // namespace depthroute::kernels
