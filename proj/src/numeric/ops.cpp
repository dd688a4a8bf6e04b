// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include "rdit/ops.hpp"

#include <cmath>
#include <string>

#include "rdit/error.hpp"
#include "rdit/simd.hpp"

namespace rdit::ops {
namespace {

using Impl = TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

void require_finite(const Tensor& t, const char* op) {
  const auto d = t.data();
  const std::size_t n = d.size();
  real acc[4] = {0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc[0] += d[i] * real(0);
    acc[1] += d[i + 1] * real(0);
    acc[2] += d[i + 2] * real(0);
    acc[3] += d[i + 3] * real(0);
  }
  for (; i < n; ++i) acc[0] += d[i] * real(0);
  if (!std::isfinite(acc[0] + acc[1] + acc[2] + acc[3])) {
    fail(ErrorKind::kNumeric, std::string(op) + ": non-finite input " + shape_str(t.shape()));
  }
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) fail(ErrorKind::kShape, std::string(op) + ": undefined operand");
}

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
  fail(ErrorKind::kShape,
       std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

std::size_t norm_axis(const Tensor& t, int axis, const char* op) {
  const int r = static_cast<int>(t.rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    fail(ErrorKind::kShape, std::string(op) + ": axis " + std::to_string(axis) + " invalid for " + shape_str(t.shape()));
  }
  return static_cast<std::size_t>(a);
}

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

bool wants_grad(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void record(const char* op, const Tensor& out, std::initializer_list<const Tensor*> inputs,
            std::function<void()> fn) {
  out.impl()->requires_grad = true;
  out.impl()->is_leaf = false;
  TapeNode node;
  node.op = op;
  for (const Tensor* t : inputs) {
    if (t->defined()) node.inputs.push_back(t->impl_ptr());
  }
  node.output = out.impl_ptr();
  node.backward = std::move(fn);
  active_tape().record(std::move(node));
}

// Gradient sink for an input, or null when it does not need one.
real* grad_of(Impl* t) {
  if (!t || !t->requires_grad) return nullptr;
  t->ensure_grad();
  return t->grad.data();
}

thread_local std::vector<real> scratch_a, scratch_b;

// C[M,N] (+)= op(A)[M,K] op(B)[K,N]; a transposed A is stored [K,M], a
// transposed B is stored [N,K].
void mm(std::size_t m, std::size_t n, std::size_t k, const real* a, bool ta, const real* b, bool tb, real* c,
        bool accumulate) {
  const real* ap = a;
  const real* bp = b;
  if (ta) {
    scratch_a.resize(m * k);
    for (std::size_t p = 0; p < k; ++p) {
      for (std::size_t i = 0; i < m; ++i) scratch_a[i * k + p] = a[p * m + i];
    }
    ap = scratch_a.data();
  }
  if (tb) {
    scratch_b.resize(k * n);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t p = 0; p < k; ++p) scratch_b[p * n + j] = b[j * k + p];
    }
    bp = scratch_b.data();
  }
  simd::gemm(m, n, k, ap, k, bp, n, c, n, accumulate);
}

Tensor make(Shape shape) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.resize(shape_numel(shape));
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) fail(ErrorKind::kShape, std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_mismatch("matmul", a, b);
  require_finite(a, "matmul");
  require_finite(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = make({m, n});
  mm(m, n, k, a.data().data(), false, b.data().data(), false, out.data().data(), false);
  if (wants_grad({&a, &b})) {
    Impl *ai = a.impl(), *bi = b.impl(), *oi = out.impl();
    record("matmul", out, {&a, &b}, [ai, bi, oi, m, n, k] {
      const real* g = oi->grad.data();
      if (real* ga = grad_of(ai)) mm(m, k, n, g, false, bi->data.data(), true, ga, true);
      if (real* gb = grad_of(bi)) mm(k, n, m, ai->data.data(), true, g, false, gb, true);
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_defined(x, "linear");
  require_defined(w, "linear");
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0)) shape_mismatch("linear", x, w);
  if (bias.defined() && bias.numel() != w.dim(1)) shape_mismatch("linear", w, bias);
  require_finite(x, "linear");
  require_finite(w, "linear");
  if (bias.defined()) require_finite(bias, "linear");
  const std::size_t t = x.dim(0), in = x.dim(1), outd = w.dim(1);
  Tensor out = make({t, outd});
  real* o = out.data().data();
  if (bias.defined()) {
    const real* bd = bias.data().data();
    for (std::size_t r = 0; r < t; ++r) std::copy(bd, bd + outd, o + r * outd);
  }
  mm(t, outd, in, x.data().data(), false, w.data().data(), false, o, bias.defined());
  if (wants_grad({&x, &w, &bias})) {
    Impl *xi = x.impl(), *wi = w.impl(), *bi = bias.defined() ? bias.impl() : nullptr, *oi = out.impl();
    record("linear", out, {&x, &w, &bias}, [xi, wi, bi, oi, t, in, outd] {
      const real* g = oi->grad.data();
      if (real* gx = grad_of(xi)) mm(t, in, outd, g, false, wi->data.data(), true, gx, true);
      if (real* gw = grad_of(wi)) mm(in, outd, t, xi->data.data(), true, g, false, gw, true);
      if (real* gb = grad_of(bi)) {
        for (std::size_t r = 0; r < t; ++r) simd::axpy(outd, real(1), g + r * outd, gb);
      }
    });
  }
  return out;
}

namespace {

Tensor add_scaled(const Tensor& a, const Tensor& b, real sign, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) shape_mismatch(op, a, b);
  require_finite(a, op);
  require_finite(b, op);
  Tensor out = a.detach();
  simd::axpy(out.numel(), sign, b.data().data(), out.data().data());
  if (wants_grad({&a, &b})) {
    Impl *ai = a.impl(), *bi = b.impl(), *oi = out.impl();
    record(op, out, {&a, &b}, [ai, bi, oi, sign] {
      const std::size_t n = oi->data.size();
      if (real* ga = grad_of(ai)) simd::axpy(n, real(1), oi->grad.data(), ga);
      if (real* gb = grad_of(bi)) simd::axpy(n, sign, oi->grad.data(), gb);
    });
  }
  return out;
}

std::size_t row_width(const Tensor& x, const Tensor& row, const char* op) {
  require_defined(x, op);
  require_defined(row, op);
  const std::size_t d = x.shape().back();
  if (row.numel() != d) shape_mismatch(op, x, row);
  return d;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_scaled(a, b, real(1), "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_scaled(a, b, real(-1), "sub"); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_defined(a, "mul");
  require_defined(b, "mul");
  if (a.shape() != b.shape()) shape_mismatch("mul", a, b);
  require_finite(a, "mul");
  require_finite(b, "mul");
  Tensor out = make(a.shape());
  simd::mul(out.numel(), a.data().data(), b.data().data(), out.data().data());
  if (wants_grad({&a, &b})) {
    Impl *ai = a.impl(), *bi = b.impl(), *oi = out.impl();
    record("mul", out, {&a, &b}, [ai, bi, oi] {
      const std::size_t n = oi->data.size();
      const real* g = oi->grad.data();
      if (real* ga = grad_of(ai)) {
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bi->data[i];
      }
      if (real* gb = grad_of(bi)) {
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * ai->data[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  require_defined(a, "scale");
  require_finite(a, "scale");
  Tensor out = a.detach();
  const real sr = static_cast<real>(s);
  for (real& v : out.data()) v *= sr;
  if (wants_grad({&a})) {
    Impl *ai = a.impl(), *oi = out.impl();
    record("scale", out, {&a}, [ai, oi, sr] {
      if (real* ga = grad_of(ai)) simd::axpy(oi->data.size(), sr, oi->grad.data(), ga);
    });
  }
  return out;
}

Tensor add_rows(const Tensor& x, const Tensor& row) {
  const std::size_t d = row_width(x, row, "add_rows");
  require_finite(x, "add_rows");
  require_finite(row, "add_rows");
  Tensor out = x.detach();
  const std::size_t rows = x.numel() / d;
  for (std::size_t r = 0; r < rows; ++r) simd::axpy(d, real(1), row.data().data(), out.data().data() + r * d);
  if (wants_grad({&x, &row})) {
    Impl *xi = x.impl(), *ri = row.impl(), *oi = out.impl();
    record("add_rows", out, {&x, &row}, [xi, ri, oi, d, rows] {
      const real* g = oi->grad.data();
      if (real* gx = grad_of(xi)) simd::axpy(rows * d, real(1), g, gx);
      if (real* gr = grad_of(ri)) {
        for (std::size_t r = 0; r < rows; ++r) simd::axpy(d, real(1), g + r * d, gr);
      }
    });
  }
  return out;
}

Tensor mul_rows(const Tensor& x, const Tensor& row) {
  const std::size_t d = row_width(x, row, "mul_rows");
  require_finite(x, "mul_rows");
  require_finite(row, "mul_rows");
  Tensor out = make(x.shape());
  const std::size_t rows = x.numel() / d;
  for (std::size_t r = 0; r < rows; ++r) {
    simd::mul(d, x.data().data() + r * d, row.data().data(), out.data().data() + r * d);
  }
  if (wants_grad({&x, &row})) {
    Impl *xi = x.impl(), *ri = row.impl(), *oi = out.impl();
    record("mul_rows", out, {&x, &row}, [xi, ri, oi, d, rows] {
      const real* g = oi->grad.data();
      real* gx = grad_of(xi);
      real* gr = grad_of(ri);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
          if (gx) gx[r * d + j] += g[r * d + j] * ri->data[j];
          if (gr) gr[j] += g[r * d + j] * xi->data[r * d + j];
        }
      }
    });
  }
  return out;
}

Tensor modulate(const Tensor& x, const Tensor& shift, const Tensor& scl) {
  const std::size_t d = row_width(x, shift, "modulate");
  row_width(x, scl, "modulate");
  require_finite(x, "modulate");
  require_finite(shift, "modulate");
  require_finite(scl, "modulate");
  Tensor out = make(x.shape());
  const std::size_t rows = x.numel() / d;
  const real* xs = x.data().data();
  const real* sh = shift.data().data();
  const real* sc = scl.data().data();
  real* o = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < d; ++j) o[r * d + j] = xs[r * d + j] * (real(1) + sc[j]) + sh[j];
  }
  if (wants_grad({&x, &shift, &scl})) {
    Impl *xi = x.impl(), *hi = shift.impl(), *si = scl.impl(), *oi = out.impl();
    record("modulate", out, {&x, &shift, &scl}, [xi, hi, si, oi, d, rows] {
      const real* g = oi->grad.data();
      real* gx = grad_of(xi);
      real* gh = grad_of(hi);
      real* gs = grad_of(si);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
          const real gv = g[r * d + j];
          if (gx) gx[r * d + j] += gv * (real(1) + si->data[j]);
          if (gh) gh[j] += gv;
          if (gs) gs[j] += gv * xi->data[r * d + j];
        }
      }
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  require_defined(x, "gelu");
  require_finite(x, "gelu");
  Tensor out = make(x.shape());
  simd::gelu(x.numel(), x.data().data(), out.data().data());
  if (wants_grad({&x})) {
    Impl *xi = x.impl(), *oi = out.impl();
    record("gelu", out, {&x}, [xi, oi] {
      if (real* gx = grad_of(xi)) simd::gelu_backward(xi->data.size(), xi->data.data(), oi->grad.data(), gx);
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  require_defined(x, "softmax");
  require_finite(x, "softmax");
  const AxisSplit s = split_at(x.shape(), norm_axis(x, axis, "softmax"));
  Tensor out = x.detach();
  real* o = out.data().data();
  if (s.inner == 1) {
    simd::softmax_rows(s.outer, s.len, o);
  } else {
    for (std::size_t a = 0; a < s.outer; ++a) {
      for (std::size_t c = 0; c < s.inner; ++c) {
        real* base = o + a * s.len * s.inner + c;
        real mx = base[0];
        for (std::size_t j = 1; j < s.len; ++j) mx = std::max(mx, base[j * s.inner]);
        double total = 0.0;
        for (std::size_t j = 0; j < s.len; ++j) {
          base[j * s.inner] = static_cast<real>(std::exp(static_cast<double>(base[j * s.inner] - mx)));
          total += base[j * s.inner];
        }
        for (std::size_t j = 0; j < s.len; ++j) base[j * s.inner] = static_cast<real>(base[j * s.inner] / total);
      }
    }
  }
  if (wants_grad({&x})) {
    Impl *xi = x.impl(), *oi = out.impl();
    record("softmax", out, {&x}, [xi, oi, s] {
      real* gx = grad_of(xi);
      if (!gx) return;
      const real* y = oi->data.data();
      const real* g = oi->grad.data();
      for (std::size_t a = 0; a < s.outer; ++a) {
        for (std::size_t c = 0; c < s.inner; ++c) {
          const std::size_t base = a * s.len * s.inner + c;
          double dotv = 0.0;
          for (std::size_t j = 0; j < s.len; ++j) dotv += static_cast<double>(g[base + j * s.inner]) * y[base + j * s.inner];
          for (std::size_t j = 0; j < s.len; ++j) {
            const std::size_t idx = base + j * s.inner;
            gx[idx] += static_cast<real>(y[idx] * (g[idx] - dotv));
          }
        }
      }
    });
  }
  return out;
}

Tensor rms_norm(const Tensor& x, int axis, const Tensor& gain) {
  require_defined(x, "rms_norm");
  require_finite(x, "rms_norm");
  const AxisSplit s = split_at(x.shape(), norm_axis(x, axis, "rms_norm"));
  if (gain.defined()) {
    if (gain.numel() != s.len) shape_mismatch("rms_norm", x, gain);
    require_finite(gain, "rms_norm");
  }
  Tensor out = make(x.shape());
  auto inv = std::make_shared<std::vector<real>>(s.outer * s.inner);
  const real* xs = x.data().data();
  const real* gs = gain.defined() ? gain.data().data() : nullptr;
  real* o = out.data().data();
  if (s.inner == 1) {
    simd::rms_norm_rows(s.outer, s.len, xs, gs, o, inv->data(), static_cast<real>(kNormEps));
  } else {
    for (std::size_t a = 0; a < s.outer; ++a) {
      for (std::size_t c = 0; c < s.inner; ++c) {
        const std::size_t base = a * s.len * s.inner + c;
        double ss = 0.0;
        for (std::size_t j = 0; j < s.len; ++j) ss += static_cast<double>(xs[base + j * s.inner]) * xs[base + j * s.inner];
        const double r = 1.0 / std::sqrt(ss / static_cast<double>(s.len) + kNormEps);
        (*inv)[a * s.inner + c] = static_cast<real>(r);
        for (std::size_t j = 0; j < s.len; ++j) {
          o[base + j * s.inner] = static_cast<real>(xs[base + j * s.inner] * r * (gs ? gs[j] : real(1)));
        }
      }
    }
  }
  if (wants_grad({&x, &gain})) {
    Impl *xi = x.impl(), *gi = gain.defined() ? gain.impl() : nullptr, *oi = out.impl();
    record("rms_norm", out, {&x, &gain}, [xi, gi, oi, s, inv] {
      real* gx = grad_of(xi);
      real* gg = grad_of(gi);
      const real* xv = xi->data.data();
      const real* g = oi->grad.data();
      const double n = static_cast<double>(s.len);
      for (std::size_t a = 0; a < s.outer; ++a) {
        for (std::size_t c = 0; c < s.inner; ++c) {
          const std::size_t base = a * s.len * s.inner + c;
          const double r = (*inv)[a * s.inner + c];
          double acc = 0.0;
          for (std::size_t j = 0; j < s.len; ++j) {
            const std::size_t idx = base + j * s.inner;
            const double gj = gi ? gi->data[j] : 1.0;
            acc += static_cast<double>(g[idx]) * gj * xv[idx];
            if (gg) gg[j] += static_cast<real>(g[idx] * xv[idx] * r);
          }
          if (!gx) continue;
          const double coef = r * r * r * acc / n;
          for (std::size_t j = 0; j < s.len; ++j) {
            const std::size_t idx = base + j * s.inner;
            const double gj = gi ? gi->data[j] : 1.0;
            gx[idx] += static_cast<real>(r * gj * g[idx] - coef * xv[idx]);
          }
        }
      }
    });
  }
  return out;
}

Tensor mean_pool2d(const Tensor& x, std::size_t window) {
  require_defined(x, "mean_pool2d");
  if (x.rank() != 3) fail(ErrorKind::kShape, "mean_pool2d: expected [H,W,C], got " + shape_str(x.shape()));
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (window == 0 || h % window != 0 || w % window != 0) {
    fail(ErrorKind::kShape, "mean_pool2d: window " + std::to_string(window) + " does not divide " + shape_str(x.shape()));
  }
  require_finite(x, "mean_pool2d");
  const std::size_t oh = h / window, ow = w / window;
  Tensor out = make({oh, ow, c});
  const real* xs = x.data().data();
  real* o = out.data().data();
  const double norm = 1.0 / static_cast<double>(window * window);
  std::vector<double> acc(c);
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t di = 0; di < window; ++di) {
        for (std::size_t dj = 0; dj < window; ++dj) {
          const real* px = xs + ((i * window + di) * w + (j * window + dj)) * c;
          for (std::size_t k = 0; k < c; ++k) acc[k] += px[k];
        }
      }
      for (std::size_t k = 0; k < c; ++k) o[(i * ow + j) * c + k] = static_cast<real>(acc[k] * norm);
    }
  }
  if (wants_grad({&x})) {
    Impl *xi = x.impl(), *oi = out.impl();
    record("mean_pool2d", out, {&x}, [xi, oi, window, w, c, oh, ow, norm] {
      real* gx = grad_of(xi);
      if (!gx) return;
      const real* g = oi->grad.data();
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          for (std::size_t di = 0; di < window; ++di) {
            for (std::size_t dj = 0; dj < window; ++dj) {
              real* px = gx + ((i * window + di) * w + (j * window + dj)) * c;
              for (std::size_t k = 0; k < c; ++k) px[k] += static_cast<real>(g[(i * ow + j) * c + k] * norm);
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) fail(ErrorKind::kShape, "concat: no operands");
  for (const Tensor& p : parts) require_defined(p, "concat");
  const std::size_t ax = norm_axis(parts[0], axis, "concat");
  Shape shape = parts[0].shape();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != shape.size()) shape_mismatch("concat", parts[0], p);
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i != ax && p.shape()[i] != shape[i]) shape_mismatch("concat", parts[0], p);
    }
    require_finite(p, "concat");
    total += p.shape()[ax];
  }
  shape[ax] = total;
  const AxisSplit s = split_at(shape, ax);
  Tensor out = make(shape);
  real* o = out.data().data();
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const Tensor& p : parts) {
    offsets.push_back(offset);
    const std::size_t chunk = p.shape()[ax] * s.inner;
    const real* src = p.data().data();
    for (std::size_t a = 0; a < s.outer; ++a) {
      std::copy(src + a * chunk, src + (a + 1) * chunk, o + a * s.len * s.inner + offset);
    }
    offset += chunk;
  }
  bool any = false;
  if (grad_enabled()) {
    for (const Tensor& p : parts) any = any || p.requires_grad();
  }
  if (any) {
    std::vector<Impl*> impls;
    std::vector<std::size_t> chunks;
    for (const Tensor& p : parts) {
      impls.push_back(p.impl());
      chunks.push_back(p.shape()[ax] * s.inner);
    }
    Impl* oi = out.impl();
    out.impl()->requires_grad = true;
    out.impl()->is_leaf = false;
    TapeNode node;
    node.op = "concat";
    for (const Tensor& p : parts) node.inputs.push_back(p.impl_ptr());
    node.output = out.impl_ptr();
    node.backward = [impls, chunks, offsets, oi, s] {
      const real* g = oi->grad.data();
      for (std::size_t i = 0; i < impls.size(); ++i) {
        real* gp = grad_of(impls[i]);
        if (!gp) continue;
        for (std::size_t a = 0; a < s.outer; ++a) {
          simd::axpy(chunks[i], real(1), g + a * s.len * s.inner + offsets[i], gp + a * chunks[i]);
        }
      }
    };
    active_tape().record(std::move(node));
  }
  return out;
}

Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
  require_defined(x, "slice");
  const std::size_t ax = norm_axis(x, axis, "slice");
  if (begin >= end || end > x.shape()[ax]) {
    fail(ErrorKind::kShape, "slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                                shape_str(x.shape()));
  }
  require_finite(x, "slice");
  const AxisSplit s = split_at(x.shape(), ax);
  Shape shape = x.shape();
  shape[ax] = end - begin;
  Tensor out = make(shape);
  const std::size_t chunk = (end - begin) * s.inner;
  const std::size_t off = begin * s.inner;
  const real* src = x.data().data();
  real* o = out.data().data();
  for (std::size_t a = 0; a < s.outer; ++a) {
    std::copy(src + a * s.len * s.inner + off, src + a * s.len * s.inner + off + chunk, o + a * chunk);
  }
  if (wants_grad({&x})) {
    Impl *xi = x.impl(), *oi = out.impl();
    record("slice", out, {&x}, [xi, oi, s, chunk, off] {
      real* gx = grad_of(xi);
      if (!gx) return;
      for (std::size_t a = 0; a < s.outer; ++a) {
        simd::axpy(chunk, real(1), oi->grad.data() + a * chunk, gx + a * s.len * s.inner + off);
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  require_defined(x, "transpose");
  require_matrix(x, "transpose");
  require_finite(x, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor out = make({c, r});
  const real* xs = x.data().data();
  real* o = out.data().data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) o[j * r + i] = xs[i * c + j];
  }
  if (wants_grad({&x})) {
    Impl *xi = x.impl(), *oi = out.impl();
    record("transpose", out, {&x}, [xi, oi, r, c] {
      real* gx = grad_of(xi);
      if (!gx) return;
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += oi->grad[j * r + i];
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (shape_numel(shape) != x.numel()) {
    fail(ErrorKind::kShape, "reshape: " + shape_str(x.shape()) + " vs " + shape_str(shape));
  }
  Tensor out = make(std::move(shape));
  std::copy(x.data().begin(), x.data().end(), out.data().begin());
  if (wants_grad({&x})) {
    Impl *xi = x.impl(), *oi = out.impl();
    record("reshape", out, {&x}, [xi, oi] {
      if (real* gx = grad_of(xi)) simd::axpy(oi->data.size(), real(1), oi->grad.data(), gx);
    });
  }
  return out;
}

Tensor gather(const Tensor& x, std::span<const std::size_t> index, Shape shape) {
  require_defined(x, "gather");
  if (shape_numel(shape) != index.size()) {
    fail(ErrorKind::kShape, "gather: index count does not match " + shape_str(shape));
  }
  require_finite(x, "gather");
  Tensor out = make(std::move(shape));
  const std::size_t n = x.numel();
  const real* xs = x.data().data();
  real* o = out.data().data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= n) fail(ErrorKind::kShape, "gather: index out of range");
    o[i] = xs[index[i]];
  }
  if (wants_grad({&x})) {
    Impl *xi = x.impl(), *oi = out.impl();
    auto idx = std::make_shared<std::vector<std::size_t>>(index.begin(), index.end());
    record("gather", out, {&x}, [xi, oi, idx] {
      real* gx = grad_of(xi);
      if (!gx) return;
      for (std::size_t i = 0; i < idx->size(); ++i) gx[(*idx)[i]] += oi->grad[i];
    });
  }
  return out;
}

Tensor embed_lookup(const Tensor& table, std::span<const int> ids) {
  require_defined(table, "embed_lookup");
  require_matrix(table, "embed_lookup");
  if (ids.empty()) fail(ErrorKind::kShape, "embed_lookup: empty id sequence");
  require_finite(table, "embed_lookup");
  const std::size_t v = table.dim(0), d = table.dim(1);
  Tensor out = make({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      fail(ErrorKind::kShape, "embed_lookup: id " + std::to_string(ids[i]) + " outside vocabulary of " + std::to_string(v));
    }
    const real* row = table.data().data() + static_cast<std::size_t>(ids[i]) * d;
    std::copy(row, row + d, out.data().data() + i * d);
  }
  if (wants_grad({&table})) {
    Impl *ti = table.impl(), *oi = out.impl();
    auto idv = std::make_shared<std::vector<int>>(ids.begin(), ids.end());
    record("embed_lookup", out, {&table}, [ti, oi, idv, d] {
      real* gt = grad_of(ti);
      if (!gt) return;
      for (std::size_t i = 0; i < idv->size(); ++i) {
        simd::axpy(d, real(1), oi->grad.data() + i * d, gt + static_cast<std::size_t>((*idv)[i]) * d);
      }
    });
  }
  return out;
}

namespace {

void pack_head(const real* src, std::size_t rows, std::size_t width, std::size_t col0, std::size_t dh, real* dst) {
  for (std::size_t r = 0; r < rows; ++r) std::copy(src + r * width + col0, src + r * width + col0 + dh, dst + r * dh);
}

void unpack_head_add(const real* src, std::size_t rows, std::size_t width, std::size_t col0, std::size_t dh, real* dst) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < dh; ++j) dst[r * width + col0 + j] += src[r * dh + j];
  }
}

}  // namespace

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  require_defined(q, "scaled_dot_attention");
  require_defined(k, "scaled_dot_attention");
  require_defined(v, "scaled_dot_attention");
  require_matrix(q, "scaled_dot_attention");
  require_matrix(k, "scaled_dot_attention");
  require_matrix(v, "scaled_dot_attention");
  if (k.shape() != v.shape()) shape_mismatch("scaled_dot_attention", k, v);
  if (q.dim(1) != k.dim(1)) shape_mismatch("scaled_dot_attention", q, k);
  const std::size_t tq = q.dim(0), tk = k.dim(0), d = q.dim(1);
  if (heads == 0 || d % heads != 0) {
    fail(ErrorKind::kShape, "scaled_dot_attention: width " + std::to_string(d) + " not divisible by " +
                                std::to_string(heads) + " heads");
  }
  require_finite(q, "scaled_dot_attention");
  require_finite(k, "scaled_dot_attention");
  require_finite(v, "scaled_dot_attention");
  const std::size_t dh = d / heads;
  const real sc = static_cast<real>(1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor out = make({tq, d});
  auto probs = std::make_shared<std::vector<real>>(heads * tq * tk);
  std::vector<real> qh(tq * dh), kh(tk * dh), vh(tk * dh), oh(tq * dh);
  for (std::size_t h = 0; h < heads; ++h) {
    pack_head(q.data().data(), tq, d, h * dh, dh, qh.data());
    pack_head(k.data().data(), tk, d, h * dh, dh, kh.data());
    pack_head(v.data().data(), tk, d, h * dh, dh, vh.data());
    real* p = probs->data() + h * tq * tk;
    mm(tq, tk, dh, qh.data(), false, kh.data(), true, p, false);
    for (std::size_t i = 0; i < tq * tk; ++i) p[i] *= sc;
    simd::softmax_rows(tq, tk, p);
    mm(tq, dh, tk, p, false, vh.data(), false, oh.data(), false);
    for (std::size_t r = 0; r < tq; ++r) std::copy(oh.data() + r * dh, oh.data() + (r + 1) * dh, out.data().data() + r * d + h * dh);
  }
  if (wants_grad({&q, &k, &v})) {
    Impl *qi = q.impl(), *ki = k.impl(), *vi = v.impl(), *oi = out.impl();
    record("scaled_dot_attention", out, {&q, &k, &v}, [qi, ki, vi, oi, probs, heads, tq, tk, d, dh, sc] {
      real* gq = grad_of(qi);
      real* gk = grad_of(ki);
      real* gv = grad_of(vi);
      std::vector<real> qh(tq * dh), kh(tk * dh), vh(tk * dh), go(tq * dh), dp(tq * tk), tmpq(tq * dh), tmpk(tk * dh);
      for (std::size_t h = 0; h < heads; ++h) {
        const real* p = probs->data() + h * tq * tk;
        pack_head(qi->data.data(), tq, d, h * dh, dh, qh.data());
        pack_head(ki->data.data(), tk, d, h * dh, dh, kh.data());
        pack_head(vi->data.data(), tk, d, h * dh, dh, vh.data());
        pack_head(oi->grad.data(), tq, d, h * dh, dh, go.data());
        if (gv) {
          mm(tk, dh, tq, p, true, go.data(), false, tmpk.data(), false);
          unpack_head_add(tmpk.data(), tk, d, h * dh, dh, gv);
        }
        if (!gq && !gk) continue;
        mm(tq, tk, dh, go.data(), false, vh.data(), true, dp.data(), false);
        for (std::size_t r = 0; r < tq; ++r) {
          const real* pr = p + r * tk;
          real* dr = dp.data() + r * tk;
          const double dotv = simd::dot(tk, pr, dr);
          for (std::size_t j = 0; j < tk; ++j) dr[j] = static_cast<real>(pr[j] * (dr[j] - dotv) * sc);
        }
        if (gq) {
          mm(tq, dh, tk, dp.data(), false, kh.data(), false, tmpq.data(), false);
          unpack_head_add(tmpq.data(), tq, d, h * dh, dh, gq);
        }
        if (gk) {
          mm(tk, dh, tq, dp.data(), true, qh.data(), false, tmpk.data(), false);
          unpack_head_add(tmpk.data(), tk, d, h * dh, dh, gk);
        }
      }
    });
  }
  return out;
}

Tensor rope(const Tensor& x, std::size_t heads, std::span<const int> positions, double base) {
  require_defined(x, "rope");
  require_matrix(x, "rope");
  const std::size_t t = x.dim(0), d = x.dim(1);
  if (heads == 0 || d % heads != 0 || (d / heads) % 2 != 0) {
    fail(ErrorKind::kShape, "rope: head width must be even, got width " + std::to_string(d) + " with " +
                                std::to_string(heads) + " heads");
  }
  if (positions.size() != t) fail(ErrorKind::kShape, "rope: one position per row required");
  require_finite(x, "rope");
  const std::size_t dh = d / heads, half = dh / 2;
  auto cs = std::make_shared<std::vector<real>>(t * half * 2);
  for (std::size_t r = 0; r < t; ++r) {
    for (std::size_t i = 0; i < half; ++i) {
      const double theta = positions[r] * std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(dh));
      (*cs)[(r * half + i) * 2] = static_cast<real>(std::cos(theta));
      (*cs)[(r * half + i) * 2 + 1] = static_cast<real>(std::sin(theta));
    }
  }
  Tensor out = make(x.shape());
  const real* xs = x.data().data();
  real* o = out.data().data();
  for (std::size_t r = 0; r < t; ++r) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t b = r * d + h * dh;
      for (std::size_t i = 0; i < half; ++i) {
        const real c = (*cs)[(r * half + i) * 2], s = (*cs)[(r * half + i) * 2 + 1];
        const real x1 = xs[b + i], x2 = xs[b + i + half];
        o[b + i] = x1 * c - x2 * s;
        o[b + i + half] = x1 * s + x2 * c;
      }
    }
  }
  if (wants_grad({&x})) {
    Impl *xi = x.impl(), *oi = out.impl();
    record("rope", out, {&x}, [xi, oi, cs, t, d, heads, dh, half] {
      real* gx = grad_of(xi);
      if (!gx) return;
      const real* g = oi->grad.data();
      for (std::size_t r = 0; r < t; ++r) {
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t b = r * d + h * dh;
          for (std::size_t i = 0; i < half; ++i) {
            const real c = (*cs)[(r * half + i) * 2], s = (*cs)[(r * half + i) * 2 + 1];
            const real g1 = g[b + i], g2 = g[b + i + half];
            gx[b + i] += g1 * c + g2 * s;
            gx[b + i + half] += -g1 * s + g2 * c;
          }
        }
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  require_finite(x, "sum");
  Tensor out = make({1});
  out.data()[0] = static_cast<real>(simd::sum(x.numel(), x.data().data()));
  if (wants_grad({&x})) {
    Impl *xi = x.impl(), *oi = out.impl();
    record("sum", out, {&x}, [xi, oi] {
      real* gx = grad_of(xi);
      if (!gx) return;
      const real g = oi->grad[0];
      for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  require_defined(x, "mean");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mse(const Tensor& a, const Tensor& b) {
  require_defined(a, "mse");
  require_defined(b, "mse");
  if (a.shape() != b.shape()) shape_mismatch("mse", a, b);
  require_finite(a, "mse");
  require_finite(b, "mse");
  const std::size_t n = a.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = static_cast<double>(a.data()[i]) - b.data()[i];
    acc += diff * diff;
  }
  Tensor out = make({1});
  out.data()[0] = static_cast<real>(acc / static_cast<double>(n));
  if (wants_grad({&a, &b})) {
    Impl *ai = a.impl(), *bi = b.impl(), *oi = out.impl();
    record("mse", out, {&a, &b}, [ai, bi, oi, n] {
      const double g = oi->grad[0] * 2.0 / static_cast<double>(n);
      real* ga = grad_of(ai);
      real* gb = grad_of(bi);
      for (std::size_t i = 0; i < n; ++i) {
        const real dv = static_cast<real>(g * (static_cast<double>(ai->data[i]) - bi->data[i]));
        if (ga) ga[i] += dv;
        if (gb) gb[i] -= dv;
      }
    });
  }
  return out;
}

}  // namespace rdit::ops
