#include "qnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qnn/error.hpp"
#include "qnn/kernels.hpp"

namespace qnn {

Tensor transpose2d(const Tensor& a) {
  if (a.ndim() != 2) throw DimensionError("transpose2d expects a 2-D tensor, got " + shape_str(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor t({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
  return t;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  Tensor c({a.dim(0), b.dim(1)});
  simd::kernels().gemm_acc(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1));
  return c;
}

std::pair<Tensor, Tensor> matmul_backward(const Tensor& a, const Tensor& b, const Tensor& g) {
  if (g.ndim() != 2 || g.dim(0) != a.dim(0) || g.dim(1) != b.dim(1)) {
    throw DimensionError("matmul_backward: gradient shape " + shape_str(g.shape()) + " does not match output of " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  return {matmul(g, transpose2d(b)), matmul(transpose2d(a), g)};
}

// ---- convolution -----------------------------------------------------------

Shape conv2d_output_shape(const Shape& x, const Shape& w, Conv2dGeometry geom) {
  if (x.size() != 4 || w.size() != 4) {
    throw DimensionError("conv2d expects 4-D input and weight, got " + shape_str(x) + " and " + shape_str(w));
  }
  if (x[1] != w[1]) {
    throw DimensionError("conv2d: input channels " + shape_str(x) + " do not match weight " + shape_str(w));
  }
  if (geom.stride == 0) throw DimensionError("conv2d: stride must be >= 1");
  const std::size_t hp = x[2] + 2 * geom.pad, wp = x[3] + 2 * geom.pad;
  if (w[2] > hp || w[3] > wp) {
    throw DimensionError("conv2d: kernel " + shape_str(w) + " larger than padded input " + shape_str(x));
  }
  return {x[0], w[0], (hp - w[2]) / geom.stride + 1, (wp - w[3]) / geom.stride + 1};
}

namespace {

struct ConvDims {
  std::size_t c, h, w, f, r, s, oh, ow;
  std::size_t patch() const { return c * r * s; }
  std::size_t pixels() const { return oh * ow; }
};

ConvDims conv_dims(const Shape& x, const Shape& w, Conv2dGeometry geom) {
  const Shape out = conv2d_output_shape(x, w, geom);
  return {x[1], x[2], x[3], w[0], w[2], w[3], out[2], out[3]};
}

// col[(c·R + r)·S + s][oy·OW + ox] = x[c][oy·stride + r − pad][ox·stride + s − pad]
void im2col(const float* img, const ConvDims& d, Conv2dGeometry g, float* col) {
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t r = 0; r < d.r; ++r)
      for (std::size_t s = 0; s < d.s; ++s) {
        float* row = col + ((c * d.r + r) * d.s + s) * d.pixels();
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + r) - static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + s) - static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(d.h) &&
                                ix < static_cast<std::ptrdiff_t>(d.w);
            row[oy * d.ow + ox] = inside ? img[(c * d.h + iy) * d.w + ix] : 0.0f;
          }
        }
      }
}

void col2im_add(const float* col, const ConvDims& d, Conv2dGeometry g, float* img) {
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t r = 0; r < d.r; ++r)
      for (std::size_t s = 0; s < d.s; ++s) {
        const float* row = col + ((c * d.r + r) * d.s + s) * d.pixels();
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + r) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
          for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + s) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) continue;
            img[(c * d.h + iy) * d.w + ix] += row[oy * d.ow + ox];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, Conv2dGeometry geom) {
  const ConvDims d = conv_dims(x.shape(), w.shape(), geom);
  const std::size_t n = x.dim(0);
  Tensor out({n, d.f, d.oh, d.ow});
  std::vector<float> col(d.patch() * d.pixels());
  const auto& k = simd::kernels();
  for (std::size_t i = 0; i < n; ++i) {
    im2col(x.data() + i * d.c * d.h * d.w, d, geom, col.data());
    k.gemm_acc(w.data(), col.data(), out.data() + i * d.f * d.pixels(), d.f, d.patch(), d.pixels());
  }
  return out;
}

std::pair<Tensor, Tensor> conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& g, Conv2dGeometry geom) {
  const ConvDims d = conv_dims(x.shape(), w.shape(), geom);
  const std::size_t n = x.dim(0);
  if (g.shape() != Shape{n, d.f, d.oh, d.ow}) {
    throw DimensionError("conv2d_backward: gradient shape " + shape_str(g.shape()) + " does not match output " +
                         shape_str({n, d.f, d.oh, d.ow}));
  }
  Tensor gx(x.shape());
  Tensor gw(w.shape());
  const Tensor wt = transpose2d(w.reshaped({d.f, d.patch()}));
  std::vector<float> col(d.patch() * d.pixels());
  std::vector<float> col_t(d.patch() * d.pixels());
  std::vector<float> gcol(d.patch() * d.pixels());
  const auto& k = simd::kernels();
  for (std::size_t i = 0; i < n; ++i) {
    const float* gi = g.data() + i * d.f * d.pixels();
    im2col(x.data() + i * d.c * d.h * d.w, d, geom, col.data());
    for (std::size_t a = 0; a < d.patch(); ++a)
      for (std::size_t b = 0; b < d.pixels(); ++b) col_t[b * d.patch() + a] = col[a * d.pixels() + b];
    k.gemm_acc(gi, col_t.data(), gw.data(), d.f, d.pixels(), d.patch());
    std::fill(gcol.begin(), gcol.end(), 0.0f);
    k.gemm_acc(wt.data(), gi, gcol.data(), d.patch(), d.f, d.pixels());
    col2im_add(gcol.data(), d, geom, gx.data() + i * d.c * d.h * d.w);
  }
  return {std::move(gx), std::move(gw)};
}

// ---- batch normalization ---------------------------------------------------

namespace {

struct ChannelLayout {
  std::size_t outer, channels, inner;
};

ChannelLayout channel_layout(const Tensor& x) {
  if (x.ndim() < 2) throw DimensionError("batchnorm expects at least 2-D input, got " + shape_str(x.shape()));
  std::size_t inner = 1;
  for (std::size_t i = 2; i < x.ndim(); ++i) inner *= x.dim(i);
  return {x.dim(0), x.dim(1), inner};
}

}  // namespace

Tensor batchnorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                         Tensor& running_var, Mode mode, BatchNormConfig cfg, BatchNormCache* cache) {
  const ChannelLayout L = channel_layout(x);
  if (gamma.size() != L.channels || beta.size() != L.channels || running_mean.size() != L.channels ||
      running_var.size() != L.channels) {
    throw DimensionError("batchnorm: channel count " + std::to_string(L.channels) + " of input " +
                         shape_str(x.shape()) + " does not match parameters of size " + std::to_string(gamma.size()));
  }
  if (!(cfg.eps > 0.0f)) throw ParameterError("batchnorm: eps must be positive");
  Tensor y(x.shape());
  Tensor xhat(x.shape());
  std::vector<float> inv_std(L.channels);
  const auto& k = simd::kernels();
  const double count = static_cast<double>(L.outer * L.inner);
  for (std::size_t c = 0; c < L.channels; ++c) {
    double mean, var;
    if (mode == Mode::train) {
      double s = 0.0;
      for (std::size_t o = 0; o < L.outer; ++o) s += k.sum(x.data() + (o * L.channels + c) * L.inner, L.inner);
      mean = s / count;
      double sq = 0.0;
      for (std::size_t o = 0; o < L.outer; ++o) {
        const float* p = x.data() + (o * L.channels + c) * L.inner;
        for (std::size_t i = 0; i < L.inner; ++i) {
          const double dv = p[i] - mean;
          sq += dv * dv;
        }
      }
      var = sq / count;
      const double unbiased = count > 1.0 ? var * count / (count - 1.0) : var;
      running_mean[c] = static_cast<float>(cfg.momentum * running_mean[c] + (1.0 - cfg.momentum) * mean);
      running_var[c] = static_cast<float>(cfg.momentum * running_var[c] + (1.0 - cfg.momentum) * unbiased);
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const float istd = static_cast<float>(1.0 / std::sqrt(var + cfg.eps));
    const float m = static_cast<float>(mean);
    inv_std[c] = istd;
    for (std::size_t o = 0; o < L.outer; ++o) {
      const std::size_t base = (o * L.channels + c) * L.inner;
      for (std::size_t i = 0; i < L.inner; ++i) {
        const float xh = (x[base + i] - m) * istd;
        xhat[base + i] = xh;
        y[base + i] = gamma[c] * xh + beta[c];
      }
    }
  }
  if (cache != nullptr) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const Tensor& gamma, const Tensor& g) {
  require_same_shape(cache.xhat, g, "batchnorm_backward");
  const ChannelLayout L = channel_layout(g);
  BatchNormGrads out{Tensor(g.shape()), Tensor({L.channels}), Tensor({L.channels})};
  const double count = static_cast<double>(L.outer * L.inner);
  for (std::size_t c = 0; c < L.channels; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t o = 0; o < L.outer; ++o) {
      const std::size_t base = (o * L.channels + c) * L.inner;
      for (std::size_t i = 0; i < L.inner; ++i) {
        sum_g += g[base + i];
        sum_gx += static_cast<double>(g[base + i]) * cache.xhat[base + i];
      }
    }
    out.beta[c] = static_cast<float>(sum_g);
    out.gamma[c] = static_cast<float>(sum_gx);
    const double mean_g = sum_g / count, mean_gx = sum_gx / count;
    const double scale = static_cast<double>(gamma[c]) * cache.inv_std[c];
    for (std::size_t o = 0; o < L.outer; ++o) {
      const std::size_t base = (o * L.channels + c) * L.inner;
      for (std::size_t i = 0; i < L.inner; ++i) {
        out.x[base + i] = static_cast<float>(scale * (g[base + i] - mean_g - cache.xhat[base + i] * mean_gx));
      }
    }
  }
  return out;
}

// ---- pooling / loss --------------------------------------------------------

Tensor global_avgpool(const Tensor& x) {
  if (x.ndim() != 4) throw DimensionError("global_avgpool expects N×C×H×W, got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor y({n, c});
  const auto& k = simd::kernels();
  for (std::size_t i = 0; i < n * c; ++i) y[i] = static_cast<float>(k.sum(x.data() + i * hw, hw) / hw);
  return y;
}

Tensor global_avgpool_backward(const Shape& x_shape, const Tensor& g) {
  Tensor gx(x_shape);
  const std::size_t hw = x_shape[2] * x_shape[3];
  const float inv = 1.0f / static_cast<float>(hw);
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < hw; ++j) gx[i * hw + j] = g[i] * inv;
  return gx;
}

LossAndGrad softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.ndim() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("softmax_cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  LossAndGrad out{0.0f, Tensor(logits.shape())};
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw InputError("label " + std::to_string(labels[i]) + " out of range [0, " + std::to_string(c) + ")");
    }
    const float* row = logits.data() + i * c;
    const float mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
    const double log_z = std::log(z) + mx;
    total += log_z - row[labels[i]];
    for (std::size_t j = 0; j < c; ++j) {
      const double p = std::exp(static_cast<double>(row[j]) - log_z);
      const double onehot = static_cast<std::size_t>(labels[i]) == j ? 1.0 : 0.0;
      out.grad[i * c + j] = static_cast<float>((p - onehot) / static_cast<double>(n));
    }
  }
  out.loss = static_cast<float>(total / static_cast<double>(n));
  return out;
}

// ---- optimizer -------------------------------------------------------------

void sgd_momentum_step(Param& p, float lr, float momentum, float weight_decay) {
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    p.velocity[i] = momentum * p.velocity[i] + p.grad[i] + weight_decay * p.value[i];
    p.value[i] -= lr * p.velocity[i];
  }
  p.zero_grad();
}

// ---- gradient checking -----------------------------------------------------

float default_fd_step(const Tensor& x) {
  float m = 0.0f;
  for (float v : x.values()) m = std::max(m, std::fabs(v));
  return 1e-2f * (1.0f + m);
}

double finite_diff_check(const std::function<double(const Tensor&)>& f, const Tensor& x, const Tensor& analytic,
                         float h) {
  require_same_shape(x, analytic, "finite_diff_check");
  Tensor probe = x;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    // the step actually taken, after f32 rounding of x ± h
    const double span = static_cast<double>(orig + h) - static_cast<double>(orig - h);
    const double numeric = (up - down) / span;
    worst = std::max(worst, std::fabs(analytic[i] - numeric) / std::max(1.0, std::fabs(numeric)));
  }
  return worst;
}

}  // namespace qnn
