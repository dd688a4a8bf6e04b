// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

// Inner-loop kernels behind the tensor ops. Each kernel has a scalar
// reference (kernels_scalar.hpp) and, on x86-64, an AVX2+FMA variant.
// The variant is picked once at startup from cpuid; setting the
// environment variable RDIT_FORCE_SCALAR=1 pins the scalar set.

#pragma once

#include <cstddef>
#include <type_traits>

#include "rdit/kernels_scalar.hpp"

namespace rdit::simd {

struct KernelSet {
  const char* name;
  // C[M,N] (+)= A[M,K] * B[K,N], all row-major with leading dimensions.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
               const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate);
  void (*axpy)(std::size_t n, float alpha, const float* x, float* y);
  double (*dot)(std::size_t n, const float* a, const float* b);
  double (*sum)(std::size_t n, const float* x);
  void (*mul)(std::size_t n, const float* a, const float* b, float* y);
  void (*gelu)(std::size_t n, const float* x, float* y);
  // dx (+)= gelu'(x) * dy
  void (*gelu_backward)(std::size_t n, const float* x, const float* dy, float* dx);
  // In-place max-subtracted softmax over each contiguous row.
  void (*softmax_rows)(std::size_t rows, std::size_t n, float* x);
  // y = x / rms(x) * gain per row; inv_rms receives one value per row. gain may be null.
  void (*rms_norm_rows)(std::size_t rows, std::size_t n, const float* x, const float* gain,
                        float* y, float* inv_rms, float eps);
};

const KernelSet& scalar_kernels();
// Null when the binary was built without AVX2 support.
const KernelSet* avx2_kernels();
bool cpu_supports_avx2_fma();
// Kernel set selected for this process.
const KernelSet& active_kernels();

// Typed front-ends used by the tensor ops. Doubles always take the scalar path.
template <class T>
inline void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                 const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  if constexpr (std::is_same_v<T, float>) {
    active_kernels().gemm(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
  } else {
    scalar::gemm(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
  }
}

template <class T>
inline void axpy(std::size_t n, T alpha, const T* x, T* y) {
  if constexpr (std::is_same_v<T, float>) {
    active_kernels().axpy(n, alpha, x, y);
  } else {
    scalar::axpy(n, alpha, x, y);
  }
}

template <class T>
inline double dot(std::size_t n, const T* a, const T* b) {
  if constexpr (std::is_same_v<T, float>) {
    return active_kernels().dot(n, a, b);
  } else {
    return scalar::dot(n, a, b);
  }
}

template <class T>
inline double sum(std::size_t n, const T* x) {
  if constexpr (std::is_same_v<T, float>) {
    return active_kernels().sum(n, x);
  } else {
    return scalar::sum(n, x);
  }
}

template <class T>
inline void mul(std::size_t n, const T* a, const T* b, T* y) {
  if constexpr (std::is_same_v<T, float>) {
    active_kernels().mul(n, a, b, y);
  } else {
    scalar::mul(n, a, b, y);
  }
}

template <class T>
inline void gelu(std::size_t n, const T* x, T* y) {
  if constexpr (std::is_same_v<T, float>) {
    active_kernels().gelu(n, x, y);
  } else {
    scalar::gelu(n, x, y);
  }
}

template <class T>
inline void gelu_backward(std::size_t n, const T* x, const T* dy, T* dx) {
  if constexpr (std::is_same_v<T, float>) {
    active_kernels().gelu_backward(n, x, dy, dx);
  } else {
    scalar::gelu_backward(n, x, dy, dx);
  }
}

template <class T>
inline void softmax_rows(std::size_t rows, std::size_t n, T* x) {
  if constexpr (std::is_same_v<T, float>) {
    active_kernels().softmax_rows(rows, n, x);
  } else {
    scalar::softmax_rows(rows, n, x);
  }
}

template <class T>
inline void rms_norm_rows(std::size_t rows, std::size_t n, const T* x, const T* gain, T* y,
                          T* inv_rms, T eps) {
  if constexpr (std::is_same_v<T, float>) {
    active_kernels().rms_norm_rows(rows, n, x, gain, y, inv_rms, eps);
  } else {
    scalar::rms_norm_rows(rows, n, x, gain, y, inv_rms, eps);
  }
}

}  // namespace rdit::simd
