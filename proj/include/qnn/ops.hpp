#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "qnn/tensor.hpp"

namespace qnn {

// ---- dense ------------------------------------------------------------------

// a[M×K] · b[K×N]
Tensor matmul(const Tensor& a, const Tensor& b);
// Returns (g·bᵀ, aᵀ·g) for upstream gradient g[M×N].
std::pair<Tensor, Tensor> matmul_backward(const Tensor& a, const Tensor& b, const Tensor& g);
Tensor transpose2d(const Tensor& a);

// ---- convolution -----------------------------------------------------------

struct Conv2dGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

// x[N×C×H×W] * w[F×C×R×S] -> [N×F×H'×W'], zero padding, no bias.
Tensor conv2d(const Tensor& x, const Tensor& w, Conv2dGeometry geom);
// Returns (grad_x, grad_w).
std::pair<Tensor, Tensor> conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& g, Conv2dGeometry geom);
Shape conv2d_output_shape(const Shape& x, const Shape& w, Conv2dGeometry geom);

// ---- batch normalization ---------------------------------------------------

enum class Mode { train, eval };

struct BatchNormConfig {
  float momentum = 0.9f;  // running = momentum·running + (1 − momentum)·batch
  float eps = 1e-5f;
};

struct BatchNormCache {
  Tensor xhat;
  std::vector<float> inv_std;
};

// Per-channel normalization over every axis except 1. In train mode the batch
// statistics are used and the running estimates updated; eval mode reads the
// running estimates. `cache` may be null when no backward pass follows.
Tensor batchnorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                         Tensor& running_var, Mode mode, BatchNormConfig cfg, BatchNormCache* cache);

struct BatchNormGrads {
  Tensor x;
  Tensor gamma;
  Tensor beta;
};
// Train-mode backward, differentiating through the batch statistics.
BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const Tensor& gamma, const Tensor& g);

// ---- pooling / loss --------------------------------------------------------

// Global average pool: [N×C×H×W] -> [N×C].
Tensor global_avgpool(const Tensor& x);
Tensor global_avgpool_backward(const Shape& x_shape, const Tensor& g);

struct LossAndGrad {
  float loss = 0.0f;
  Tensor grad;
};
// Mean cross-entropy of softmax(logits[N×C]) against integer labels.
LossAndGrad softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// ---- optimizer -------------------------------------------------------------

// v ← momentum·v + grad + weight_decay·value; value ← value − lr·v; grad ← 0.
void sgd_momentum_step(Param& p, float lr, float momentum, float weight_decay);

// ---- gradient checking -----------------------------------------------------

// Max over elements of |analytic − numeric| / max(1, |numeric|), where numeric
// is the central difference (f(x + h e_i) − f(x − h e_i)) / 2h.
double finite_diff_check(const std::function<double(const Tensor&)>& f, const Tensor& x, const Tensor& analytic,
                         float h);
// h = 1e-2 · (1 + max|x|)
float default_fd_step(const Tensor& x);

}  // namespace qnn
