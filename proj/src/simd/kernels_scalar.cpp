#include <cmath>

#include "qnn/kernels.hpp"

namespace qnn::simd {
namespace {

void gemm_acc(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = a[i * k + p];
      const float* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void add_inplace(const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

void clip(const float* x, float* y, std::size_t n, float alpha) {
  for (std::size_t i = 0; i < n; ++i) {
    const float v = x[i] < 0.0f ? 0.0f : x[i];
    y[i] = v > alpha ? alpha : v;
  }
}

void uniform_quantize(const float* y, float* out, std::size_t n, float alpha, double levels) {
  const double a = alpha;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(y[i]) * levels / a;
    out[i] = static_cast<float>(std::round(t) * a / levels);
  }
}

double clip_backward(const float* x, const float* g, float* gx, std::size_t n, float alpha) {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    const bool pass = x[i] >= 0.0f && x[i] < alpha;
    gx[i] = pass ? g[i] : 0.0f;
    lane[i % 4] += x[i] >= alpha ? static_cast<double>(g[i]) : 0.0;
  }
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

void quantize_levels(const float* w, float* out, std::size_t n, const LevelTable& table) {
  for (std::size_t i = 0; i < n; ++i) {
    const double mag = std::fabs(static_cast<double>(w[i]));
    std::size_t idx = 0;
    for (std::size_t j = 0; j + 1 < table.n_levels; ++j) idx += mag >= table.thresholds[j] ? 1 : 0;
    out[i] = std::copysign(table.levels[idx], w[i]);
  }
}

Sums abs_sq_sums(const float* x, std::size_t n) {
  double la[4] = {0.0, 0.0, 0.0, 0.0};
  double ls[4] = {0.0, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    la[i % 4] += std::fabs(v);
    ls[i % 4] += v * v;
  }
  return {(la[0] + la[1]) + (la[2] + la[3]), (ls[0] + ls[1]) + (ls[2] + ls[3])};
}

double sq_diff_sum(const float* a, const float* b, std::size_t n) {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    lane[i % 4] += d * d;
  }
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

double sum(const float* x, std::size_t n) {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) lane[i % 4] += x[i];
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

constexpr KernelTable kScalar{
    Isa::scalar, "scalar",    gemm_acc,    add_inplace, clip, uniform_quantize, clip_backward,
    quantize_levels, abs_sq_sums, sq_diff_sum, sum,
};

}  // namespace

const KernelTable& scalar_kernels() { return kScalar; }

}  // namespace qnn::simd
