#include "qnn/pact.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qnn/error.hpp"
#include "qnn/kernels.hpp"

namespace qnn::pact {

double level_count(int bits) {
  if (bits < 1 || bits > 30) throw ParameterError("activation bit-width must be in [1, 30], got " + std::to_string(bits));
  return std::ldexp(1.0, bits) - 1.0;
}

Tensor forward(const Tensor& x, float alpha) {
  if (!(alpha > 0.0f)) throw ParameterError("PACT clipping level must be positive, got " + std::to_string(alpha));
  Tensor y(x.shape());
  simd::kernels().clip(x.data(), y.data(), x.size(), alpha);
  return y;
}

Tensor quantize(const Tensor& y, float alpha, int bits) {
  if (!(alpha > 0.0f)) throw ParameterError("PACT clipping level must be positive, got " + std::to_string(alpha));
  const double levels = level_count(bits);
#ifdef QNN_CHECKED
  for (float v : y.values()) {
    if (!(v >= 0.0f && v <= alpha)) throw InputError("pact::quantize input outside [0, alpha]: " + std::to_string(v));
  }
#endif
  Tensor out(y.shape());
  simd::kernels().uniform_quantize(y.data(), out.data(), y.size(), alpha, levels);
  return out;
}

Gradients backward(const Tensor& x, float alpha, const Tensor& g_out) {
  require_same_shape(x, g_out, "pact::backward");
  Gradients out{Tensor(x.shape()), 0.0f};
  out.alpha = static_cast<float>(simd::kernels().clip_backward(x.data(), g_out.data(), out.x.data(), x.size(), alpha));
  return out;
}

Activation::Activation(Options opts) : opts_(opts), alpha_(Tensor::scalar(opts.alpha_init)) {
  if (!(opts.alpha_init > 0.0f)) throw ParameterError("PACT alpha init must be positive");
  if (opts.reg_lambda < 0.0f) throw ParameterError("PACT reg_lambda must be >= 0");
  if (opts.quantize) level_count(opts.bits);
}

Tensor Activation::forward(const Tensor& x) {
  input_ = x;
  Tensor y = pact::forward(x, alpha_value());
  if (quantize_enabled()) return pact::quantize(y, alpha_value(), opts_.bits);
  return y;
}

Tensor Activation::backward(const Tensor& g_out) {
  Gradients g = pact::backward(input_, alpha_value(), g_out);
  if (opts_.trainable) alpha_.grad[0] += g.alpha + alpha_reg_grad(alpha_value(), opts_.reg_lambda);
  return std::move(g.x);
}

void Activation::clamp_alpha() { alpha_.value[0] = std::max(alpha_.value[0], kAlphaFloor); }

}  // namespace qnn::pact
