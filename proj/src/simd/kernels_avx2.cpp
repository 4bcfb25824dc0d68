// Compiled with -mavx2 (and without -mfma). Only reached after a runtime CPU check.

#include <cmath>
#include <cstdint>

#include "qnn/kernels.hpp"

#if defined(__AVX2__)
#include <immintrin.h>

namespace qnn::simd {
namespace {

double hsum_lanes(__m256d v) {
  alignas(32) double l[4];
  _mm256_store_pd(l, v);
  return (l[0] + l[1]) + (l[2] + l[3]);
}

void gemm_acc(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * n;
    const float* arow = a + i * k;
    std::size_t j = 0;
    for (; j + 32 <= n; j += 32) {
      __m256 c0 = _mm256_loadu_ps(crow + j);
      __m256 c1 = _mm256_loadu_ps(crow + j + 8);
      __m256 c2 = _mm256_loadu_ps(crow + j + 16);
      __m256 c3 = _mm256_loadu_ps(crow + j + 24);
      for (std::size_t p = 0; p < k; ++p) {
        const __m256 av = _mm256_set1_ps(arow[p]);
        const float* brow = b + p * n + j;
        c0 = _mm256_add_ps(c0, _mm256_mul_ps(av, _mm256_loadu_ps(brow)));
        c1 = _mm256_add_ps(c1, _mm256_mul_ps(av, _mm256_loadu_ps(brow + 8)));
        c2 = _mm256_add_ps(c2, _mm256_mul_ps(av, _mm256_loadu_ps(brow + 16)));
        c3 = _mm256_add_ps(c3, _mm256_mul_ps(av, _mm256_loadu_ps(brow + 24)));
      }
      _mm256_storeu_ps(crow + j, c0);
      _mm256_storeu_ps(crow + j + 8, c1);
      _mm256_storeu_ps(crow + j + 16, c2);
      _mm256_storeu_ps(crow + j + 24, c3);
    }
    for (; j + 8 <= n; j += 8) {
      __m256 c0 = _mm256_loadu_ps(crow + j);
      for (std::size_t p = 0; p < k; ++p) {
        c0 = _mm256_add_ps(c0, _mm256_mul_ps(_mm256_set1_ps(arow[p]), _mm256_loadu_ps(b + p * n + j)));
      }
      _mm256_storeu_ps(crow + j, c0);
    }
    for (; j < n; ++j) {
      float acc = crow[j];
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * b[p * n + j];
      crow[j] = acc;
    }
  }
}

void add_inplace(const float* x, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), _mm256_loadu_ps(x + i)));
  }
  for (; i < n; ++i) y[i] += x[i];
}

void clip(const float* x, float* y, std::size_t n, float alpha) {
  const __m256 zero = _mm256_setzero_ps();
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 xv = _mm256_loadu_ps(x + i);
    const __m256 v = _mm256_blendv_ps(xv, zero, _mm256_cmp_ps(xv, zero, _CMP_LT_OQ));
    _mm256_storeu_ps(y + i, _mm256_blendv_ps(v, av, _mm256_cmp_ps(v, av, _CMP_GT_OQ)));
  }
  for (; i < n; ++i) {
    const float v = x[i] < 0.0f ? 0.0f : x[i];
    y[i] = v > alpha ? alpha : v;
  }
}

// round half away from zero, identical to std::round for every double
__m256d round_half_away(__m256d t) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  const __m256d mag = _mm256_andnot_pd(sign_mask, t);
  const __m256d fl = _mm256_floor_pd(mag);
  const __m256d bump = _mm256_and_pd(_mm256_cmp_pd(_mm256_sub_pd(mag, fl), _mm256_set1_pd(0.5), _CMP_GE_OQ),
                                     _mm256_set1_pd(1.0));
  return _mm256_or_pd(_mm256_add_pd(fl, bump), _mm256_and_pd(sign_mask, t));
}

void uniform_quantize(const float* y, float* out, std::size_t n, float alpha, double levels) {
  const double a = alpha;
  const __m256d lv = _mm256_set1_pd(levels);
  const __m256d avd = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d t = _mm256_div_pd(_mm256_mul_pd(_mm256_cvtps_pd(_mm_loadu_ps(y + i)), lv), avd);
    const __m256d q = _mm256_div_pd(_mm256_mul_pd(round_half_away(t), avd), lv);
    _mm_storeu_ps(out + i, _mm256_cvtpd_ps(q));
  }
  for (; i < n; ++i) {
    const double t = static_cast<double>(y[i]) * levels / a;
    out[i] = static_cast<float>(std::round(t) * a / levels);
  }
}

double clip_backward(const float* x, const float* g, float* gx, std::size_t n, float alpha) {
  const __m128 zero = _mm_setzero_ps();
  const __m128 av = _mm_set1_ps(alpha);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m128 xv = _mm_loadu_ps(x + i);
    const __m128 gv = _mm_loadu_ps(g + i);
    const __m128 pass = _mm_and_ps(_mm_cmpge_ps(xv, zero), _mm_cmplt_ps(xv, av));
    _mm_storeu_ps(gx + i, _mm_and_ps(pass, gv));
    const __m128 clipped = _mm_and_ps(_mm_cmpge_ps(xv, av), gv);
    acc = _mm256_add_pd(acc, _mm256_cvtps_pd(clipped));
  }
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc);
  for (std::size_t r = 0; i < n; ++i, ++r) {
    const bool pass = x[i] >= 0.0f && x[i] < alpha;
    gx[i] = pass ? g[i] : 0.0f;
    lane[r] += x[i] >= alpha ? static_cast<double>(g[i]) : 0.0;
  }
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

void quantize_levels(const float* w, float* out, std::size_t n, const LevelTable& table) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  std::size_t i = 0;
  alignas(32) std::int64_t idx[4];
  for (; i + 4 <= n; i += 4) {
    const __m256d mag = _mm256_andnot_pd(sign_mask, _mm256_cvtps_pd(_mm_loadu_ps(w + i)));
    __m256i count = _mm256_setzero_si256();
    for (std::size_t j = 0; j + 1 < table.n_levels; ++j) {
      const __m256d ge = _mm256_cmp_pd(mag, _mm256_set1_pd(table.thresholds[j]), _CMP_GE_OQ);
      count = _mm256_sub_epi64(count, _mm256_castpd_si256(ge));
    }
    _mm256_store_si256(reinterpret_cast<__m256i*>(idx), count);
    for (int l = 0; l < 4; ++l) out[i + l] = std::copysign(table.levels[idx[l]], w[i + l]);
  }
  for (; i < n; ++i) {
    const double mag = std::fabs(static_cast<double>(w[i]));
    std::size_t k = 0;
    for (std::size_t j = 0; j + 1 < table.n_levels; ++j) k += mag >= table.thresholds[j] ? 1 : 0;
    out[i] = std::copysign(table.levels[k], w[i]);
  }
}

Sums abs_sq_sums(const float* x, std::size_t n) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  __m256d sa = _mm256_setzero_pd();
  __m256d ss = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
    sa = _mm256_add_pd(sa, _mm256_andnot_pd(sign_mask, v));
    ss = _mm256_add_pd(ss, _mm256_mul_pd(v, v));
  }
  alignas(32) double la[4];
  alignas(32) double ls[4];
  _mm256_store_pd(la, sa);
  _mm256_store_pd(ls, ss);
  for (std::size_t r = 0; i < n; ++i, ++r) {
    const double v = x[i];
    la[r] += std::fabs(v);
    ls[r] += v * v;
  }
  return {(la[0] + la[1]) + (la[2] + la[3]), (ls[0] + ls[1]) + (ls[2] + ls[3])};
}

double sq_diff_sum(const float* a, const float* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_cvtps_pd(_mm_loadu_ps(a + i)), _mm256_cvtps_pd(_mm_loadu_ps(b + i)));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
  }
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc);
  for (std::size_t r = 0; i < n; ++i, ++r) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    lane[r] += d * d;
  }
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

double sum(const float* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_cvtps_pd(_mm_loadu_ps(x + i)));
  if (i == n) return hsum_lanes(acc);
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc);
  for (std::size_t r = 0; i < n; ++i, ++r) lane[r] += x[i];
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

constexpr KernelTable kAvx2{
    Isa::avx2,       "avx2",      gemm_acc,    add_inplace, clip, uniform_quantize, clip_backward,
    quantize_levels, abs_sq_sums, sq_diff_sum, sum,
};

}  // namespace

const KernelTable* avx2_kernels() { return &kAvx2; }

}  // namespace qnn::simd

#else

namespace qnn::simd {
const KernelTable* avx2_kernels() { return nullptr; }
}  // namespace qnn::simd

#endif
