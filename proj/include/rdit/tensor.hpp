// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// Every op that sees an input with requires_grad appends a TapeNode to the
// calling thread's tape. backward() replays that tape in reverse creation
// order (a valid reverse topological order, since a node can only consume
// tensors created before it) and then clears it.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rdit/real.hpp"

namespace rdit {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<real> data;
  std::vector<real> grad;  // empty until some gradient reaches this tensor
  bool requires_grad = false;
  bool is_leaf = true;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), real(0));
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, real value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<real> values, bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  // Negative axes count from the back.
  std::size_t dim(int axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<real> data() { return impl_->data; }
  std::span<const real> data() const { return impl_->data; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<real> grad() { return impl_->grad; }
  std::span<const real> grad() const { return impl_->grad; }
  real item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  // Marks a leaf as trainable and allocates a zeroed gradient buffer.
  void set_requires_grad(bool on);
  void zero_grad();

  // Same values, no history, no gradient.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

struct TapeNode {
  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::shared_ptr<TensorImpl> output;
  // Reads output->grad and accumulates into the inputs' grads.
  std::function<void()> backward;
};

class Tape {
 public:
  void record(TapeNode node) { nodes_.push_back(std::move(node)); }
  bool empty() const { return nodes_.empty(); }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<TapeNode>& nodes() const { return nodes_; }
  // Drops every node and the intermediate gradients they own.
  void clear();

 private:
  friend void backward(const Tensor& loss);
  std::vector<TapeNode> nodes_;
};

// Tape of the calling thread.
Tape& active_tape();

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Populates grad of every requires_grad leaf reachable from loss, then
// consumes the tape. Gradients accumulate across calls until zero_grad().
void backward(const Tensor& loss);

}  // namespace rdit
