// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense float tensors and a per-step reverse-mode gradient tape.
//
// A Tape owns every value produced during one training step. Ops append a
// node holding the forward value and, when any input requires a gradient, a
// closure that pushes the node's gradient into its inputs. backward() replays
// the closures in reverse creation order; dropping the Tape frees everything.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace depthroute {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor scalar(float value) { return Tensor({1}, std::vector<float>{value}); }
  static Tensor vector(std::vector<float> values);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  /// Leading dimension for matrices, 1 for vectors.
  std::size_t rows() const;
  /// Trailing dimension.
  std::size_t cols() const;

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }
  float item() const;

  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<float> data_;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  float item() const { return value().item(); }
  /// Gradient accumulated by the last backward(); empty if none reached this node.
  std::span<const float> grad() const;
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);
  /// Appends an op result. `backward` is dropped when no input requires grad.
  /// Throws DomainError naming `op` if the value holds a non-finite entry.
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs,
             BackwardFn backward);

  /// Seeds d(root)/d(root) = 1 and propagates. root must hold one element.
  void backward(Var root);

  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer for node `id`, zero-initialised on first use.
  std::span<float> grad_buffer(std::uint32_t id);
  std::span<const float> grad(std::uint32_t id) const { return nodes_[id].grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<float> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

namespace ops {

Var matmul(Var a, Var b);
/// a + b with identical shapes.
Var add(Var a, Var b);
/// Elementwise product. b may also hold a single element, broadcast over a.
Var mul(Var a, Var b);
Var sigmoid(Var x);
Var silu(Var x);
/// Natural log; throws DomainError on non-positive input.
Var log(Var x);
Var exp(Var x);
/// min(1, max(0, x)); gradient passes only where 0 < x < 1.
Var clip01(Var x);
/// factor·x + offset with constant factor and offset.
Var scale(Var x, float factor, float offset = 0.0f);
Var sum(Var x);
Var mean(Var x);
/// Element `index` of x as a one-element tensor.
Var element(Var x, std::size_t index);

Var softmax_lastdim(Var x);
Var rmsnorm(Var x, Var weight, float eps = 1e-5f);
/// Mean negative log-likelihood over rows whose target is non-negative.
/// A target of -1 skips the row; targets >= vocab throw IndexError.
Var cross_entropy(Var logits, std::span<const int> targets);
/// Gathers rows of table[vocab × dim].
Var embedding(Var table, std::span<const int> ids);
/// Rotary encoding per head; positions has one entry per row.
Var rope(Var x, std::size_t heads, std::size_t head_dim, std::span<const std::size_t> positions,
         float theta);

struct AttentionShape {
  std::size_t seq_len = 1;
  std::size_t heads = 1;
  std::size_t kv_heads = 1;
  std::size_t head_dim = 1;
};
/// Causal grouped-query attention over consecutive sequences of seq_len rows.
Var causal_attention(Var q, Var k, Var v, const AttentionShape& shape);

}  // namespace ops
}  // namespace depthroute
