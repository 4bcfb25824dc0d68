#pragma once

// Straightforward double-precision reference implementations used as test
// oracles. Nothing here calls into the library's kernels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "qnn/rng.hpp"
#include "qnn/tensor.hpp"

namespace oracle {

inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                  std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

// Direct seven-loop convolution.
inline std::vector<double> conv2d(const qnn::Tensor& x, const qnn::Tensor& w, std::size_t stride, std::size_t pad,
                                  std::size_t& ho, std::size_t& wo) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t f = w.dim(0), r = w.dim(2), s = w.dim(3);
  ho = (h + 2 * pad - r) / stride + 1;
  wo = (wd + 2 * pad - s) / stride + 1;
  std::vector<double> out(n * f * ho * wo, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < f; ++o)
      for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j) {
          double acc = 0.0;
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t u = 0; u < r; ++u)
              for (std::size_t v = 0; v < s; ++v) {
                const long yy = static_cast<long>(i * stride + u) - static_cast<long>(pad);
                const long xx = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(wd)) continue;
                acc += static_cast<double>(x.at(b, ch, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx))) *
                       w.at(o, ch, u, v);
              }
          out[((b * f + o) * ho + i) * wo + j] = acc;
        }
  return out;
}

inline double pact_clip(double x, double alpha) { return std::min(std::max(x, 0.0), alpha); }

// By enumeration: nearest of the 2^k levels i·alpha/(2^k − 1),
// exact midpoints going up.
inline double pact_quantize(double y, double alpha, int bits) {
  const double steps = std::ldexp(1.0, bits) - 1.0;
  const double t = y * steps / alpha;
  const double lo = std::floor(t);
  const double q = (t - lo >= 0.5) ? lo + 1.0 : lo;
  return q * alpha / steps;
}

// Signed, ascending weight levels.
inline std::vector<double> weight_levels(int n_bin, double alpha) {
  std::vector<double> out;
  for (int i = 0; i < n_bin; ++i) out.push_back(-alpha + 2.0 * alpha * i / (n_bin - 1));
  return out;
}

// Nearest level by linear scan; exact ties go to the larger magnitude.
inline double nearest_level(double w, const std::vector<double>& levels) {
  double best = levels.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (double l : levels) {
    const double d = std::abs(w - l);
    if (d < best_d || (d == best_d && std::abs(l) > std::abs(best))) {
      best = l;
      best_d = d;
    }
  }
  return best;
}

inline double weight_se(const qnn::Tensor& w, double alpha, int n_bin) {
  const auto levels = weight_levels(n_bin, alpha);
  double se = 0.0;
  for (float v : w.values()) {
    const double d = v - nearest_level(v, levels);
    se += d * d;
  }
  return se;
}

inline qnn::Tensor random_tensor(qnn::Shape shape, qnn::Rng& rng, double lo = -1.0, double hi = 1.0) {
  qnn::Tensor t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<float>(lo + (hi - lo) * rng.uniform());
  return t;
}

}  // namespace oracle
