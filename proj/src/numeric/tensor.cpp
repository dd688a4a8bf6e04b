// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include "rdit/tensor.hpp"

#include <sstream>

#include "rdit/error.hpp"

namespace rdit {

namespace {
thread_local Tape tls_tape;
thread_local bool tls_grad_enabled = true;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), real(0), requires_grad); }

Tensor Tensor::full(Shape shape, real value, bool requires_grad) {
  for (std::size_t e : shape) {
    if (e == 0) fail(ErrorKind::kShape, "tensor extents must be positive, got " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  Tensor t(std::move(impl));
  if (requires_grad) t.set_requires_grad(true);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<real> values, bool requires_grad) {
  for (std::size_t e : shape) {
    if (e == 0) fail(ErrorKind::kShape, "tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    fail(ErrorKind::kShape, "shape " + shape_str(shape) + " does not hold " + std::to_string(values.size()) +
                                " values");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  Tensor t(std::move(impl));
  if (requires_grad) t.set_requires_grad(true);
  return t;
}

Tensor Tensor::scalar(real value, bool requires_grad) { return from({1}, {value}, requires_grad); }

std::size_t Tensor::dim(int axis) const {
  const int r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) fail(ErrorKind::kShape, "axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  return impl_->shape[static_cast<std::size_t>(a)];
}

real Tensor::item() const {
  if (numel() != 1) fail(ErrorKind::kShape, "item() needs a single-element tensor, got " + shape_str(shape()));
  return impl_->data[0];
}

void Tensor::set_requires_grad(bool on) {
  if (!impl_->is_leaf) fail(ErrorKind::kState, "requires_grad can only be changed on leaf tensors");
  impl_->requires_grad = on;
  if (on) {
    impl_->ensure_grad();
  } else {
    impl_->grad.clear();
  }
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), real(0));
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

void Tape::clear() {
  for (auto& node : nodes_) {
    if (node.output && !node.output->is_leaf) node.output->grad.clear();
  }
  nodes_.clear();
}

Tape& active_tape() { return tls_tape; }

bool grad_enabled() { return tls_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(tls_grad_enabled) { tls_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { tls_grad_enabled = previous_; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    fail(ErrorKind::kShape, "backward needs a scalar loss, got " +
                                (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  Tape& tape = tls_tape;
  if (tape.empty()) fail(ErrorKind::kState, "backward called on an empty tape");
  if (!loss.requires_grad() || loss.impl()->is_leaf) {
    fail(ErrorKind::kState, "loss was not produced on the tape");
  }
  loss.impl()->ensure_grad();
  loss.impl()->grad[0] += real(1);
  for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward();
  }
  tape.clear();
}

}  // namespace rdit
