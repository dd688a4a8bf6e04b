// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <cstring>

#include "rdit/simd.hpp"

namespace rdit::simd {

#ifdef RDIT_HAVE_AVX2
const KernelSet& avx2_kernel_set();
#endif

namespace {

void gemm_ref(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
              const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
  scalar::gemm(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
void axpy_ref(std::size_t n, float alpha, const float* x, float* y) { scalar::axpy(n, alpha, x, y); }
double dot_ref(std::size_t n, const float* a, const float* b) { return scalar::dot(n, a, b); }
double sum_ref(std::size_t n, const float* x) { return scalar::sum(n, x); }
void mul_ref(std::size_t n, const float* a, const float* b, float* y) { scalar::mul(n, a, b, y); }
void gelu_ref(std::size_t n, const float* x, float* y) { scalar::gelu(n, x, y); }
void gelu_backward_ref(std::size_t n, const float* x, const float* dy, float* dx) {
  scalar::gelu_backward(n, x, dy, dx);
}
void softmax_rows_ref(std::size_t rows, std::size_t n, float* x) { scalar::softmax_rows(rows, n, x); }
void rms_norm_rows_ref(std::size_t rows, std::size_t n, const float* x, const float* gain, float* y,
                       float* inv_rms, float eps) {
  scalar::rms_norm_rows(rows, n, x, gain, y, inv_rms, eps);
}

const KernelSet* select_kernels() {
  const char* force = std::getenv("RDIT_FORCE_SCALAR");
  if (force && std::strcmp(force, "0") != 0 && force[0] != '\0') return &scalar_kernels();
  if (const KernelSet* fast = avx2_kernels(); fast && cpu_supports_avx2_fma()) return fast;
  return &scalar_kernels();
}

}  // namespace

const KernelSet& scalar_kernels() {
  static const KernelSet set{"scalar", gemm_ref,         axpy_ref,         dot_ref,
                             sum_ref,  mul_ref,          gelu_ref,         gelu_backward_ref,
                             softmax_rows_ref, rms_norm_rows_ref};
  return set;
}

const KernelSet* avx2_kernels() {
#ifdef RDIT_HAVE_AVX2
  return &avx2_kernel_set();
#else
  return nullptr;
#endif
}

bool cpu_supports_avx2_fma() {
#if defined(__GNUC__) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelSet& active_kernels() {
  static const KernelSet* selected = select_kernels();
  return *selected;
}

}  // namespace rdit::simd
