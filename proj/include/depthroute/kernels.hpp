// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense float kernels shared by the gradient tape and the inference path.
//
// Every kernel in this header has an OpenMP-parallel implementation and a
// serial reference in `kernels::reference`. Parallel loops only split work
// over output rows (or heads), and each output element is accumulated in a
// fixed order, so both versions produce identical bits for any thread count.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>

namespace depthroute::kernels {

inline float sigmoid(float x) {
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.0f + e);
}

inline float silu(float x) { return x * sigmoid(x); }

/// C = A·B (or C += A·B). A is m×k, B is k×n, all row-major.
void gemm(std::span<const float> a, std::span<const float> b, std::span<float> c,
          std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
/// C = A·Bᵀ (or +=). A is m×k, B is n×k.
void gemm_nt(std::span<const float> a, std::span<const float> b, std::span<float> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
/// C = Aᵀ·B (or +=). A is k×m, B is k×n.
void gemm_tn(std::span<const float> a, std::span<const float> b, std::span<float> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);

/// y = x ⊙ w / sqrt(mean(x²) + eps), row by row. Writes 1/rms per row to
/// `inv_rms` when it is non-empty.
void rmsnorm(std::span<const float> x, std::span<const float> weight, std::span<float> y,
             std::size_t rows, std::size_t dim, float eps, std::span<float> inv_rms = {});

/// Rotates consecutive pairs inside each head by pos·theta^(-2i/head_dim).
/// `inverse` applies the transpose rotation (used by the backward pass).
void rope(std::span<float> x, std::size_t rows, std::size_t heads, std::size_t head_dim,
          std::span<const std::size_t> positions, float theta, bool inverse = false);

struct AttentionDims {
  std::size_t heads = 1;
  std::size_t kv_heads = 1;
  std::size_t head_dim = 1;

  std::size_t q_width() const { return heads * head_dim; }
  std::size_t kv_width() const { return kv_heads * head_dim; }
  std::size_t group() const { return heads / kv_heads; }
};

/// Causal grouped-query attention for one sequence.
///
/// q is [nq × heads·head_dim] holding absolute positions first_pos ..
/// first_pos+nq-1; k and v are [nk × kv_heads·head_dim] holding positions
/// 0 .. nk-1, and first_pos + nq <= nk. A query at position p attends to keys
/// 0..p. When `probs` is non-empty it receives the attention weights as
/// [heads × nq × nk], zero beyond the causal limit.
void attention_forward(std::span<const float> q, std::span<const float> k,
                       std::span<const float> v, std::span<float> out, const AttentionDims& dims,
                       std::size_t nq, std::size_t nk, std::size_t first_pos,
                       std::span<float> probs = {});

/// Gradients of attention_forward with first_pos = 0 and nq = nk. Accumulates
/// into dq, dk, dv (any may be empty to skip).
void attention_backward(std::span<const float> q, std::span<const float> k,
                        std::span<const float> v, std::span<const float> probs,
                        std::span<const float> dout, std::span<float> dq, std::span<float> dk,
                        std::span<float> dv, const AttentionDims& dims, std::size_t n);

namespace reference {

void gemm(std::span<const float> a, std::span<const float> b, std::span<float> c,
          std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void gemm_nt(std::span<const float> a, std::span<const float> b, std::span<float> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void gemm_tn(std::span<const float> a, std::span<const float> b, std::span<float> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void attention_forward(std::span<const float> q, std::span<const float> k,
                       std::span<const float> v, std::span<float> out, const AttentionDims& dims,
                       std::size_t nq, std::size_t nk, std::size_t first_pos);

}  // namespace reference

/// Counts multiply-accumulate work (2 FLOPs each) performed by gemm* and
/// attention_forward while a FlopCounting scope is alive.
class FlopCounting {
 public:
  FlopCounting();
  ~FlopCounting();
  FlopCounting(const FlopCounting&) = delete;
  FlopCounting& operator=(const FlopCounting&) = delete;

  std::uint64_t flops() const;
};

}  // namespace depthroute::kernels
