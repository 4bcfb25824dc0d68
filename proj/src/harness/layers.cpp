#include <utility>

#include "qnn/error.hpp"
#include "qnn/kernels.hpp"
#include "qnn/model.hpp"

namespace qnn {

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::dense: return "dense";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::pact: return "pact";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::residual_block: return "residual_block";
  }
  return "?";
}

// ---- conv ------------------------------------------------------------------

ConvLayer::ConvLayer(std::string name, Tensor weight, Conv2dGeometry geom, std::optional<sawb::Quantizer> quantizer)
    : Layer(std::move(name)), weight_(std::move(weight)), geom_(geom), quantizer_(std::move(quantizer)) {}

Tensor ConvLayer::effective_weight() const {
  return quantizing() ? quantizer_->quantize(weight_.value) : weight_.value;
}

Tensor ConvLayer::forward(const Tensor& x, Mode) {
  input_ = x;
  if (quantizing()) {
    last_scale_ = quantizer_->scale_for(weight_.value);
    used_weight_ = quantizer_->quantize(weight_.value);
  } else {
    used_weight_ = weight_.value;
  }
  return conv2d(x, used_weight_, geom_);
}

Tensor ConvLayer::backward(const Tensor& g) {
  auto [gx, gw] = conv2d_backward(input_, used_weight_, g, geom_);
  const Tensor latent = sawb::weight_quant_backward(gw);
  simd::kernels().add_inplace(latent.data(), weight_.grad.data(), latent.size());
  return std::move(gx);
}

void ConvLayer::collect_params(std::vector<NamedParam>& out) {
  out.push_back({name() + ".weight", &weight_, ParamKind::weight});
}

void ConvLayer::describe(std::vector<GraphNode>& out, const std::string& path) const {
  out.push_back({name(), "conv", path, quantizing()});
}

// ---- dense -----------------------------------------------------------------

DenseLayer::DenseLayer(std::string name, Tensor weight, std::optional<sawb::Quantizer> quantizer)
    : Layer(std::move(name)),
      weight_(std::move(weight)),
      bias_(Tensor({weight_.value.dim(1)})),
      quantizer_(std::move(quantizer)) {}

Tensor DenseLayer::forward(const Tensor& x, Mode) {
  const std::size_t in = weight_.value.dim(0);
  if (x.size() % in != 0 || x.dim(0) * in != x.size()) {
    throw DimensionError(name() + ": input " + shape_str(x.shape()) + " does not flatten to " + std::to_string(in) +
                         " features");
  }
  input_ = x.reshaped({x.dim(0), in});
  used_weight_ = quantizer_ && quant_active_ ? quantizer_->quantize(weight_.value) : weight_.value;
  Tensor y = matmul(input_, used_weight_);
  const std::size_t out = y.dim(1);
  for (std::size_t i = 0; i < y.dim(0); ++i)
    for (std::size_t j = 0; j < out; ++j) y[i * out + j] += bias_.value[j];
  return y;
}

Tensor DenseLayer::backward(const Tensor& g) {
  auto [gx, gw] = matmul_backward(input_, used_weight_, g);
  const Tensor latent = sawb::weight_quant_backward(gw);
  simd::kernels().add_inplace(latent.data(), weight_.grad.data(), latent.size());
  const std::size_t out = g.dim(1);
  for (std::size_t j = 0; j < out; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.dim(0); ++i) s += g[i * out + j];
    bias_.grad[j] += static_cast<float>(s);
  }
  return gx;
}

void DenseLayer::collect_params(std::vector<NamedParam>& out) {
  out.push_back({name() + ".weight", &weight_, ParamKind::weight});
  out.push_back({name() + ".bias", &bias_, ParamKind::bias});
}

void DenseLayer::describe(std::vector<GraphNode>& out, const std::string& path) const {
  out.push_back({name(), "dense", path, quantizer_.has_value() && quant_active_});
}

// ---- batchnorm -------------------------------------------------------------

BatchNormLayer::BatchNormLayer(std::string name, std::size_t channels, BatchNormConfig cfg)
    : Layer(std::move(name)),
      gamma_(Tensor({channels}, 1.0f)),
      beta_(Tensor({channels})),
      running_mean_({channels}),
      running_var_({channels}, 1.0f),
      cfg_(cfg) {}

Tensor BatchNormLayer::forward(const Tensor& x, Mode mode) {
  return batchnorm_forward(x, gamma_.value, beta_.value, running_mean_, running_var_, mode, cfg_,
                           mode == Mode::train ? &cache_ : nullptr);
}

Tensor BatchNormLayer::backward(const Tensor& g) {
  BatchNormGrads grads = batchnorm_backward(cache_, gamma_.value, g);
  simd::kernels().add_inplace(grads.gamma.data(), gamma_.grad.data(), grads.gamma.size());
  simd::kernels().add_inplace(grads.beta.data(), beta_.grad.data(), grads.beta.size());
  return std::move(grads.x);
}

void BatchNormLayer::collect_params(std::vector<NamedParam>& out) {
  out.push_back({name() + ".gamma", &gamma_, ParamKind::norm});
  out.push_back({name() + ".beta", &beta_, ParamKind::norm});
}

void BatchNormLayer::collect_buffers(std::vector<NamedTensor>& out) {
  out.push_back({name() + ".running_mean", &running_mean_});
  out.push_back({name() + ".running_var", &running_var_});
}

void BatchNormLayer::describe(std::vector<GraphNode>& out, const std::string& path) const {
  out.push_back({name(), "batchnorm", path, false});
}

// ---- pact ------------------------------------------------------------------

PactLayer::PactLayer(std::string name, pact::Activation::Options opts) : Layer(std::move(name)), act_(opts) {}

Tensor PactLayer::forward(const Tensor& x, Mode) { return act_.forward(x); }

Tensor PactLayer::backward(const Tensor& g) { return act_.backward(g); }

void PactLayer::collect_params(std::vector<NamedParam>& out) {
  out.push_back({name() + ".alpha", &act_.alpha(), ParamKind::alpha});
}

void PactLayer::collect_activations(std::vector<pact::Activation*>& out) { out.push_back(&act_); }

void PactLayer::describe(std::vector<GraphNode>& out, const std::string& path) const {
  out.push_back({name(), "pact", path, act_.quantize_enabled()});
}

// ---- avgpool ---------------------------------------------------------------

Tensor AvgPoolLayer::forward(const Tensor& x, Mode) {
  input_shape_ = x.shape();
  return global_avgpool(x);
}

Tensor AvgPoolLayer::backward(const Tensor& g) { return global_avgpool_backward(input_shape_, g); }

void AvgPoolLayer::describe(std::vector<GraphNode>& out, const std::string& path) const {
  out.push_back({name(), "avgpool", path, false});
}

// ---- residual block --------------------------------------------------------

ResidualBlock::ResidualBlock(std::string name, std::unique_ptr<BatchNormLayer> bn1, std::unique_ptr<PactLayer> act1,
                             std::unique_ptr<ConvLayer> conv1, std::unique_ptr<BatchNormLayer> bn2,
                             std::unique_ptr<PactLayer> act2, std::unique_ptr<ConvLayer> conv2,
                             std::unique_ptr<ConvLayer> projection, bool full_precision_shortcut)
    : Layer(std::move(name)),
      bn1_(std::move(bn1)),
      act1_(std::move(act1)),
      conv1_(std::move(conv1)),
      bn2_(std::move(bn2)),
      act2_(std::move(act2)),
      conv2_(std::move(conv2)),
      proj_(std::move(projection)),
      fpsc_(full_precision_shortcut) {}

Tensor ResidualBlock::forward(const Tensor& x, Mode mode) {
  const Tensor h1 = bn1_->forward(x, mode);
  const Tensor a1 = act1_->forward(h1, mode);
  Tensor out = conv2_->forward(act2_->forward(bn2_->forward(conv1_->forward(a1, mode), mode), mode), mode);

  Tensor shortcut;
  if (proj_) {
    shortcut = fpsc_ ? proj_->forward(pact::forward(h1, act1_->activation().alpha_value()), mode)
                     : proj_->forward(a1, mode);
  } else {
    shortcut = fpsc_ ? x : a1;
  }
  require_same_shape(out, shortcut, name().c_str());
  simd::kernels().add_inplace(shortcut.data(), out.data(), out.size());
  return out;
}

Tensor ResidualBlock::backward(const Tensor& g) {
  Tensor g_a1 = conv1_->backward(bn2_->backward(act2_->backward(conv2_->backward(g))));
  const auto& k = simd::kernels();
  if (proj_) {
    // The clipped and the quantized activation share the straight-through
    // gradient, so both shortcut variants feed back through act1.
    const Tensor g_sc = proj_->backward(g);
    k.add_inplace(g_sc.data(), g_a1.data(), g_sc.size());
  } else if (!fpsc_) {
    k.add_inplace(g.data(), g_a1.data(), g.size());
  }
  Tensor gx = bn1_->backward(act1_->backward(g_a1));
  if (!proj_ && fpsc_) k.add_inplace(g.data(), gx.data(), g.size());
  return gx;
}

void ResidualBlock::collect_params(std::vector<NamedParam>& out) {
  bn1_->collect_params(out);
  act1_->collect_params(out);
  conv1_->collect_params(out);
  bn2_->collect_params(out);
  act2_->collect_params(out);
  conv2_->collect_params(out);
  if (proj_) proj_->collect_params(out);
}

void ResidualBlock::collect_buffers(std::vector<NamedTensor>& out) {
  bn1_->collect_buffers(out);
  bn2_->collect_buffers(out);
}

void ResidualBlock::collect_activations(std::vector<pact::Activation*>& out) {
  act1_->collect_activations(out);
  act2_->collect_activations(out);
}

void ResidualBlock::collect_convs(std::vector<std::pair<std::string, ConvLayer*>>& out) {
  out.emplace_back(conv1_->name(), conv1_.get());
  out.emplace_back(conv2_->name(), conv2_.get());
  if (proj_) out.emplace_back(proj_->name(), proj_.get());
}

void ResidualBlock::describe(std::vector<GraphNode>& out, const std::string& path) const {
  bn1_->describe(out, path);
  act1_->describe(out, path);
  conv1_->describe(out, path);
  bn2_->describe(out, path);
  act2_->describe(out, path);
  conv2_->describe(out, path);
  if (fpsc_) {
    if (proj_) {
      out.push_back({act1_->name() + ".clipped", "pact_clip", "shortcut", false});
      proj_->describe(out, "shortcut");
    } else {
      out.push_back({name() + ".identity", "identity", "shortcut", false});
    }
  } else {
    // the shortcut consumes act1's (possibly quantized) output
    out.push_back({act1_->name() + ".output", "pact", "shortcut", act1_->activation().quantize_enabled()});
    if (proj_) proj_->describe(out, "shortcut");
  }
  out.push_back({name() + ".add", "add", path, false});
}

void ResidualBlock::set_quantization_active(bool on) {
  act1_->set_quantization_active(on);
  conv1_->set_quantization_active(on);
  act2_->set_quantization_active(on);
  conv2_->set_quantization_active(on);
  if (proj_) proj_->set_quantization_active(on);
}

}  // namespace qnn
