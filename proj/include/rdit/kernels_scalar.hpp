// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

// Scalar reference kernels. Every SIMD variant is tested against these.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace rdit::simd::scalar {

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;

template <class T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
          std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    T* __restrict crow = c + i * ldc;
    if (!accumulate) std::fill(crow, crow + n, T(0));
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * lda + p];
      const T* __restrict brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
double dot(std::size_t n, const T* a, const T* b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

template <class T>
double sum(std::size_t n, const T* x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]);
  return acc;
}

template <class T>
void mul(std::size_t n, const T* a, const T* b, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

template <class T>
void gelu(std::size_t n, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    const double u = kGeluC * (v + kGeluA * v * v * v);
    y[i] = static_cast<T>(0.5 * v * (1.0 + std::tanh(u)));
  }
}

template <class T>
void gelu_backward(std::size_t n, const T* x, const T* dy, T* dx) {
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    const double u = kGeluC * (v + kGeluA * v * v * v);
    const double th = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
    const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
    dx[i] += static_cast<T>(d * dy[i]);
  }
}

template <class T>
void softmax_rows(std::size_t rows, std::size_t n, T* x) {
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = x + r * n;
    const T mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = static_cast<T>(std::exp(static_cast<double>(row[j] - mx)));
      total += row[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < n; ++j) row[j] = static_cast<T>(row[j] * inv);
  }
}

template <class T>
void rms_norm_rows(std::size_t rows, std::size_t n, const T* x, const T* gain, T* y, T* inv_rms,
                   T eps) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x + r * n;
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += static_cast<double>(row[j]) * row[j];
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(n) + eps);
    inv_rms[r] = static_cast<T>(inv);
    T* out = y + r * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double g = gain ? static_cast<double>(gain[j]) : 1.0;
      out[j] = static_cast<T>(row[j] * inv * g);
    }
  }
}

}  // namespace rdit::simd::scalar
