#pragma once

#include "qnn/tensor.hpp"

namespace qnn::pact {

// Smallest clipping level the optimizer may leave behind.
inline constexpr float kAlphaFloor = 1e-3f;

// y = min(max(x, 0), alpha), i.e. 0.5(|x| − |x − alpha| + alpha).
Tensor forward(const Tensor& x, float alpha);

// y_q = round(y·(2^k − 1)/alpha)·alpha/(2^k − 1), round half away from zero.
// Expects y in [0, alpha]; builds with QNN_CHECKED verify it.
Tensor quantize(const Tensor& y, float alpha, int bits);

struct Gradients {
  Tensor x;
  float alpha = 0.0f;
};

// Straight-through backward shared by the clipped and the quantized output:
// dx = g·[0 <= x < alpha], dalpha = Σ g·[x >= alpha].
Gradients backward(const Tensor& x, float alpha, const Tensor& g_out);

// d(λ·alpha²)/dalpha
inline float alpha_reg_grad(float alpha, float reg_lambda) { return 2.0f * reg_lambda * alpha; }

// Number of non-zero quantization steps, 2^k − 1.
double level_count(int bits);

// Trainable clipping activation for one layer: one scalar alpha shared by
// every element, optional k-bit output quantization.
class Activation {
 public:
  struct Options {
    float alpha_init = 8.0f;
    int bits = 2;
    float reg_lambda = 2e-4f;
    bool quantize = true;
    bool trainable = true;
  };

  explicit Activation(Options opts);

  Tensor forward(const Tensor& x);
  // Accumulates into alpha().grad (including the regularizer when trainable).
  Tensor backward(const Tensor& g_out);

  Param& alpha() { return alpha_; }
  const Param& alpha() const { return alpha_; }
  float alpha_value() const { return alpha_.value[0]; }
  int bits() const { return opts_.bits; }
  float reg_lambda() const { return opts_.reg_lambda; }
  bool quantize_enabled() const { return opts_.quantize && quantize_active_; }
  bool trainable() const { return opts_.trainable; }
  // Runtime switch used to compare against an unquantized network.
  void set_quantize_active(bool on) { quantize_active_ = on; }

  // Applied after every optimizer step.
  void clamp_alpha();

 private:
  Options opts_;
  Param alpha_;
  Tensor input_;
  bool quantize_active_ = true;
};

}  // namespace qnn::pact
