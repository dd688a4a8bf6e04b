// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

// AVX2 + FMA kernel set. This translation unit is the only one compiled
// with -mavx2 -mfma; it is only entered after the cpuid check passes.

#include <immintrin.h>

#include <cmath>
#include <cstddef>
#include <cstdint>

#include "rdit/simd.hpp"

namespace rdit::simd {
namespace {

inline __m256i tail_mask(std::size_t rem) {
  const __m256i idx = _mm256_setr_epi32(0, 1, 2, 3, 4, 5, 6, 7);
  return _mm256_cmpgt_epi32(_mm256_set1_epi32(static_cast<int>(rem)), idx);
}

// Cephes-style exp, relative error ~2e-7 on [-88, 88].
inline __m256 exp256(__m256 x) {
  x = _mm256_min_ps(x, _mm256_set1_ps(88.3762626647949f));
  x = _mm256_max_ps(x, _mm256_set1_ps(-88.3762626647949f));
  __m256 fx = _mm256_fmadd_ps(x, _mm256_set1_ps(1.44269504088896341f), _mm256_set1_ps(0.5f));
  fx = _mm256_floor_ps(fx);
  x = _mm256_fnmadd_ps(fx, _mm256_set1_ps(0.693359375f), x);
  x = _mm256_fnmadd_ps(fx, _mm256_set1_ps(-2.12194440e-4f), x);
  __m256 y = _mm256_set1_ps(1.9875691500E-4f);
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.3981999507E-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(8.3334519073E-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(4.1665795894E-2f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.6666665459E-1f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(5.0000001201E-1f));
  const __m256 x2 = _mm256_mul_ps(x, x);
  y = _mm256_fmadd_ps(y, x2, _mm256_add_ps(x, _mm256_set1_ps(1.0f)));
  __m256i e = _mm256_cvttps_epi32(fx);
  e = _mm256_add_epi32(e, _mm256_set1_epi32(127));
  e = _mm256_slli_epi32(e, 23);
  return _mm256_mul_ps(y, _mm256_castsi256_ps(e));
}

inline __m256 tanh256(__m256 u) {
  const __m256 e2 = exp256(_mm256_add_ps(u, u));
  const __m256 one = _mm256_set1_ps(1.0f);
  return _mm256_sub_ps(one, _mm256_div_ps(_mm256_set1_ps(2.0f), _mm256_add_ps(e2, one)));
}

inline double hsum_pd(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline float hmax_ps(__m256 v) {
  __m128 m = _mm_max_ps(_mm256_castps256_ps128(v), _mm256_extractf128_ps(v, 1));
  m = _mm_max_ps(m, _mm_movehl_ps(m, m));
  m = _mm_max_ss(m, _mm_shuffle_ps(m, m, 1));
  return _mm_cvtss_f32(m);
}

// Accumulates the 8 lanes of v into two double accumulators.
inline void acc_pd(__m256d& lo, __m256d& hi, __m256 v) {
  lo = _mm256_add_pd(lo, _mm256_cvtps_pd(_mm256_castps256_ps128(v)));
  hi = _mm256_add_pd(hi, _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)));
}

void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
               const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const float* a0 = a + (i + 0) * lda;
    const float* a1 = a + (i + 1) * lda;
    const float* a2 = a + (i + 2) * lda;
    const float* a3 = a + (i + 3) * lda;
    float* c0 = c + (i + 0) * ldc;
    float* c1 = c + (i + 1) * ldc;
    float* c2 = c + (i + 2) * ldc;
    float* c3 = c + (i + 3) * ldc;
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) {
      __m256 r00, r01, r10, r11, r20, r21, r30, r31;
      if (accumulate) {
        r00 = _mm256_loadu_ps(c0 + j), r01 = _mm256_loadu_ps(c0 + j + 8);
        r10 = _mm256_loadu_ps(c1 + j), r11 = _mm256_loadu_ps(c1 + j + 8);
        r20 = _mm256_loadu_ps(c2 + j), r21 = _mm256_loadu_ps(c2 + j + 8);
        r30 = _mm256_loadu_ps(c3 + j), r31 = _mm256_loadu_ps(c3 + j + 8);
      } else {
        r00 = r01 = r10 = r11 = r20 = r21 = r30 = r31 = _mm256_setzero_ps();
      }
      for (std::size_t p = 0; p < k; ++p) {
        const float* brow = b + p * ldb + j;
        const __m256 b0 = _mm256_loadu_ps(brow);
        const __m256 b1 = _mm256_loadu_ps(brow + 8);
        __m256 av = _mm256_broadcast_ss(a0 + p);
        r00 = _mm256_fmadd_ps(av, b0, r00);
        r01 = _mm256_fmadd_ps(av, b1, r01);
        av = _mm256_broadcast_ss(a1 + p);
        r10 = _mm256_fmadd_ps(av, b0, r10);
        r11 = _mm256_fmadd_ps(av, b1, r11);
        av = _mm256_broadcast_ss(a2 + p);
        r20 = _mm256_fmadd_ps(av, b0, r20);
        r21 = _mm256_fmadd_ps(av, b1, r21);
        av = _mm256_broadcast_ss(a3 + p);
        r30 = _mm256_fmadd_ps(av, b0, r30);
        r31 = _mm256_fmadd_ps(av, b1, r31);
      }
      _mm256_storeu_ps(c0 + j, r00), _mm256_storeu_ps(c0 + j + 8, r01);
      _mm256_storeu_ps(c1 + j, r10), _mm256_storeu_ps(c1 + j + 8, r11);
      _mm256_storeu_ps(c2 + j, r20), _mm256_storeu_ps(c2 + j + 8, r21);
      _mm256_storeu_ps(c3 + j, r30), _mm256_storeu_ps(c3 + j + 8, r31);
    }
    for (; j < n; j += 8) {
      const std::size_t rem = n - j < 8 ? n - j : 8;
      const __m256i mask = tail_mask(rem);
      __m256 r0, r1, r2, r3;
      if (accumulate) {
        r0 = _mm256_maskload_ps(c0 + j, mask);
        r1 = _mm256_maskload_ps(c1 + j, mask);
        r2 = _mm256_maskload_ps(c2 + j, mask);
        r3 = _mm256_maskload_ps(c3 + j, mask);
      } else {
        r0 = r1 = r2 = r3 = _mm256_setzero_ps();
      }
      for (std::size_t p = 0; p < k; ++p) {
        const __m256 bv = _mm256_maskload_ps(b + p * ldb + j, mask);
        r0 = _mm256_fmadd_ps(_mm256_broadcast_ss(a0 + p), bv, r0);
        r1 = _mm256_fmadd_ps(_mm256_broadcast_ss(a1 + p), bv, r1);
        r2 = _mm256_fmadd_ps(_mm256_broadcast_ss(a2 + p), bv, r2);
        r3 = _mm256_fmadd_ps(_mm256_broadcast_ss(a3 + p), bv, r3);
      }
      _mm256_maskstore_ps(c0 + j, mask, r0);
      _mm256_maskstore_ps(c1 + j, mask, r1);
      _mm256_maskstore_ps(c2 + j, mask, r2);
      _mm256_maskstore_ps(c3 + j, mask, r3);
    }
  }
  for (; i < m; ++i) {
    const float* arow = a + i * lda;
    float* crow = c + i * ldc;
    for (std::size_t j = 0; j < n; j += 8) {
      const std::size_t rem = n - j < 8 ? n - j : 8;
      const __m256i mask = tail_mask(rem);
      __m256 r = accumulate ? _mm256_maskload_ps(crow + j, mask) : _mm256_setzero_ps();
      for (std::size_t p = 0; p < k; ++p) {
        r = _mm256_fmadd_ps(_mm256_broadcast_ss(arow + p), _mm256_maskload_ps(b + p * ldb + j, mask), r);
      }
      _mm256_maskstore_ps(crow + j, mask, r);
    }
  }
}

void axpy_avx2(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double dot_avx2(std::size_t n, const float* a, const float* b) {
  __m256d lo = _mm256_setzero_pd(), hi = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 va = _mm256_loadu_ps(a + i);
    const __m256 vb = _mm256_loadu_ps(b + i);
    lo = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(va)),
                         _mm256_cvtps_pd(_mm256_castps256_ps128(vb)), lo);
    hi = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(va, 1)),
                         _mm256_cvtps_pd(_mm256_extractf128_ps(vb, 1)), hi);
  }
  double acc = hsum_pd(_mm256_add_pd(lo, hi));
  for (; i < n; ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

double sum_avx2(std::size_t n, const float* x) {
  __m256d lo = _mm256_setzero_pd(), hi = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) acc_pd(lo, hi, _mm256_loadu_ps(x + i));
  double acc = hsum_pd(_mm256_add_pd(lo, hi));
  for (; i < n; ++i) acc += x[i];
  return acc;
}

void mul_avx2(std::size_t n, const float* a, const float* b, float* y) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  }
  for (; i < n; ++i) y[i] = a[i] * b[i];
}

void gelu_avx2(std::size_t n, const float* x, float* y) {
  const __m256 c = _mm256_set1_ps(static_cast<float>(scalar::kGeluC));
  const __m256 ca = _mm256_set1_ps(static_cast<float>(scalar::kGeluC * scalar::kGeluA));
  const __m256 half = _mm256_set1_ps(0.5f);
  const __m256 one = _mm256_set1_ps(1.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256 v3 = _mm256_mul_ps(_mm256_mul_ps(v, v), v);
    const __m256 u = _mm256_fmadd_ps(ca, v3, _mm256_mul_ps(c, v));
    const __m256 th = tanh256(u);
    _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_mul_ps(half, v), _mm256_add_ps(one, th)));
  }
  if (i < n) scalar::gelu(n - i, x + i, y + i);
}

void gelu_backward_avx2(std::size_t n, const float* x, const float* dy, float* dx) {
  const __m256 c = _mm256_set1_ps(static_cast<float>(scalar::kGeluC));
  const __m256 ca = _mm256_set1_ps(static_cast<float>(scalar::kGeluC * scalar::kGeluA));
  const __m256 ca3 = _mm256_set1_ps(static_cast<float>(3.0 * scalar::kGeluC * scalar::kGeluA));
  const __m256 half = _mm256_set1_ps(0.5f);
  const __m256 one = _mm256_set1_ps(1.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256 v2 = _mm256_mul_ps(v, v);
    const __m256 u = _mm256_fmadd_ps(ca, _mm256_mul_ps(v2, v), _mm256_mul_ps(c, v));
    const __m256 th = tanh256(u);
    const __m256 du = _mm256_fmadd_ps(ca3, v2, c);
    const __m256 sech2 = _mm256_fnmadd_ps(th, th, one);
    // 0.5 * (1 + th) + 0.5 * v * sech2 * du
    const __m256 d = _mm256_mul_ps(half, _mm256_fmadd_ps(_mm256_mul_ps(v, sech2), du, _mm256_add_ps(one, th)));
    _mm256_storeu_ps(dx + i, _mm256_fmadd_ps(d, _mm256_loadu_ps(dy + i), _mm256_loadu_ps(dx + i)));
  }
  if (i < n) scalar::gelu_backward(n - i, x + i, dy + i, dx + i);
}

void softmax_rows_avx2(std::size_t rows, std::size_t n, float* x) {
  for (std::size_t r = 0; r < rows; ++r) {
    float* row = x + r * n;
    std::size_t j = 0;
    __m256 vmax = _mm256_set1_ps(-INFINITY);
    for (; j + 8 <= n; j += 8) vmax = _mm256_max_ps(vmax, _mm256_loadu_ps(row + j));
    float mx = hmax_ps(vmax);
    for (; j < n; ++j) mx = row[j] > mx ? row[j] : mx;
    const __m256 vm = _mm256_set1_ps(mx);
    __m256d lo = _mm256_setzero_pd(), hi = _mm256_setzero_pd();
    j = 0;
    for (; j + 8 <= n; j += 8) {
      const __m256 e = exp256(_mm256_sub_ps(_mm256_loadu_ps(row + j), vm));
      _mm256_storeu_ps(row + j, e);
      acc_pd(lo, hi, e);
    }
    double total = hsum_pd(_mm256_add_pd(lo, hi));
    for (; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      total += row[j];
    }
    const __m256 inv = _mm256_set1_ps(static_cast<float>(1.0 / total));
    j = 0;
    for (; j + 8 <= n; j += 8) _mm256_storeu_ps(row + j, _mm256_mul_ps(_mm256_loadu_ps(row + j), inv));
    const float finv = static_cast<float>(1.0 / total);
    for (; j < n; ++j) row[j] *= finv;
  }
}

void rms_norm_rows_avx2(std::size_t rows, std::size_t n, const float* x, const float* gain,
                        float* y, float* inv_rms, float eps) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = x + r * n;
    float* out = y + r * n;
    const double ss = dot_avx2(n, row, row);
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(n) + eps);
    inv_rms[r] = static_cast<float>(inv);
    const __m256 vinv = _mm256_set1_ps(static_cast<float>(inv));
    std::size_t j = 0;
    if (gain) {
      for (; j + 8 <= n; j += 8) {
        _mm256_storeu_ps(out + j, _mm256_mul_ps(_mm256_mul_ps(_mm256_loadu_ps(row + j), vinv),
                                                _mm256_loadu_ps(gain + j)));
      }
      for (; j < n; ++j) out[j] = static_cast<float>(row[j] * inv * gain[j]);
    } else {
      for (; j + 8 <= n; j += 8) _mm256_storeu_ps(out + j, _mm256_mul_ps(_mm256_loadu_ps(row + j), vinv));
      for (; j < n; ++j) out[j] = static_cast<float>(row[j] * inv);
    }
  }
}

}  // namespace

const KernelSet& avx2_kernel_set() {
  static const KernelSet set{"avx2",           gemm_avx2, axpy_avx2,         dot_avx2,
                             sum_avx2,         mul_avx2,  gelu_avx2,         gelu_backward_avx2,
                             softmax_rows_avx2, rms_norm_rows_avx2};
  return set;
}

}  // namespace rdit::simd
