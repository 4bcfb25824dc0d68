#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qnn/calibration.hpp"
#include "qnn/ops.hpp"
#include "qnn/pact.hpp"
#include "qnn/sawb.hpp"

namespace qnn {

enum class LayerKind { conv, dense, batchnorm, pact, avgpool, residual_block };

std::string_view layer_kind_name(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  std::string name;

  // conv / residual_block output channels, dense output features
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;
  // 0 means inferred from the incoming shape; non-zero values are checked
  std::size_t in_features = 0;  // dense
  std::size_t channels = 0;     // batchnorm
  bool scale_with_width = true;

  // weight quantization (conv, dense, residual_block convs)
  bool quantize_weights = false;
  int n_bin = 0;
  // activation quantization (pact, residual_block activations); 0 = off
  int activation_bits = 0;
  bool shortcut_full_precision = true;  // residual_block only

  float alpha_init = 8.0f;
  float reg_lambda = 2e-4f;
  bool alpha_trainable = true;
};

struct ModelSpec {
  std::string name = "model";
  std::size_t input_channels = 3;
  std::size_t input_size = 32;
  std::vector<LayerSpec> layers;
  float width_multiplier = 1.0f;
};

struct ResNetOptions {
  std::size_t blocks_per_stage = 1;  // 1 -> 8 layers, 3 -> ResNet20
  std::size_t base_channels = 16;    // stages use base, 2·base, 4·base
  float width_multiplier = 1.0f;
  std::size_t input_channels = 3;
  std::size_t input_size = 32;
  std::size_t classes = 10;
  int activation_bits = 0;
  int weight_n_bin = 0;
  bool full_precision_shortcut = true;
  float alpha_init = 8.0f;
  float reg_lambda = 2e-4f;
  bool alpha_trainable = true;

  bool operator==(const ResNetOptions&) const = default;
};

// Pre-activation ResNet: full-precision stem conv, three stages of residual
// blocks (stride 2 between stages), final BatchNorm + unquantized clipping
// activation, global average pool, full-precision dense classifier.
ModelSpec preact_resnet_spec(const ResNetOptions& opts);

// Every clipping activation uses a fixed, non-trainable level.
ModelSpec with_fixed_alpha(ModelSpec spec, float alpha);
// Activation quantization switched off everywhere (weights untouched).
ModelSpec without_activation_quantization(ModelSpec spec);

enum class ParamKind { weight, bias, norm, alpha };

struct NamedParam {
  std::string name;
  Param* param;
  ParamKind kind;
};

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

// One data-path operation, for structural inspection.
struct GraphNode {
  std::string name;
  std::string op;
  std::string path;  // "main" or "shortcut"
  bool quantizes = false;
};

class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  const std::string& name() const { return name_; }

  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& g) = 0;
  virtual void collect_params(std::vector<NamedParam>&) {}
  virtual void collect_buffers(std::vector<NamedTensor>&) {}
  virtual void collect_activations(std::vector<pact::Activation*>&) {}
  virtual void describe(std::vector<GraphNode>& out, const std::string& path) const = 0;
  virtual void set_quantization_active(bool) {}

 private:
  std::string name_;
};

class ConvLayer;

class Model {
 public:
  Model(ModelSpec spec, std::vector<std::unique_ptr<Layer>> layers);
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelSpec& spec() const { return spec_; }

  Tensor forward(const Tensor& x, Mode mode);
  void backward(const Tensor& g);

  // Runs the forward pass layer by layer and returns the name of the first
  // layer whose output is not finite, if any.
  std::optional<std::string> first_nonfinite_layer(const Tensor& x, Mode mode);

  std::vector<NamedParam> params();
  std::vector<NamedTensor> buffers();
  std::vector<pact::Activation*> activations();
  std::vector<std::pair<std::string, ConvLayer*>> quantized_convs();
  std::vector<GraphNode> graph() const;
  std::size_t parameter_count();

  // Turns every weight and activation quantizer on or off without rebuilding.
  void set_quantization_active(bool on);
  void zero_grad();

  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }

 private:
  ModelSpec spec_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Validates the model spec and instantiates it with He (fan-in) initialization.
// Layer i draws its initial weights from Rng(seed).split(i).
Model build_model(const ModelSpec& spec, std::uint64_t seed,
                  const sawb::CalibrationTable& calibration = sawb::default_table());

// ---- layers ----------------------------------------------------------------

class ConvLayer : public Layer {
 public:
  ConvLayer(std::string name, Tensor weight, Conv2dGeometry geom, std::optional<sawb::Quantizer> quantizer);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& g) override;
  void collect_params(std::vector<NamedParam>& out) override;
  void describe(std::vector<GraphNode>& out, const std::string& path) const override;
  void set_quantization_active(bool on) override { quant_active_ = on; }

  Param& weight() { return weight_; }
  const std::optional<sawb::Quantizer>& quantizer() const { return quantizer_; }
  bool quantizing() const { return quantizer_.has_value() && quant_active_; }
  // Scale used by the most recent quantized forward pass.
  float last_scale() const { return last_scale_; }
  // The weights the next forward pass would use.
  Tensor effective_weight() const;

 private:
  Param weight_;
  Conv2dGeometry geom_;
  std::optional<sawb::Quantizer> quantizer_;
  bool quant_active_ = true;
  Tensor input_;
  Tensor used_weight_;
  float last_scale_ = 0.0f;
};

class DenseLayer : public Layer {
 public:
  DenseLayer(std::string name, Tensor weight, std::optional<sawb::Quantizer> quantizer);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& g) override;
  void collect_params(std::vector<NamedParam>& out) override;
  void describe(std::vector<GraphNode>& out, const std::string& path) const override;
  void set_quantization_active(bool on) override { quant_active_ = on; }

 private:
  Param weight_;  // [in × out]
  Param bias_;
  std::optional<sawb::Quantizer> quantizer_;
  bool quant_active_ = true;
  Tensor input_;
  Tensor used_weight_;
};

class BatchNormLayer : public Layer {
 public:
  BatchNormLayer(std::string name, std::size_t channels, BatchNormConfig cfg = {});

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& g) override;
  void collect_params(std::vector<NamedParam>& out) override;
  void collect_buffers(std::vector<NamedTensor>& out) override;
  void describe(std::vector<GraphNode>& out, const std::string& path) const override;

 private:
  Param gamma_;
  Param beta_;
  Tensor running_mean_;
  Tensor running_var_;
  BatchNormConfig cfg_;
  BatchNormCache cache_;
};

class PactLayer : public Layer {
 public:
  PactLayer(std::string name, pact::Activation::Options opts);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& g) override;
  void collect_params(std::vector<NamedParam>& out) override;
  void collect_activations(std::vector<pact::Activation*>& out) override;
  void describe(std::vector<GraphNode>& out, const std::string& path) const override;
  void set_quantization_active(bool on) override { act_.set_quantize_active(on); }

  pact::Activation& activation() { return act_; }

 private:
  pact::Activation act_;
};

class AvgPoolLayer : public Layer {
 public:
  using Layer::Layer;

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& g) override;
  void describe(std::vector<GraphNode>& out, const std::string& path) const override;

 private:
  Shape input_shape_;
};

// Pre-activation block: BN → act → conv(stride) → BN → act → conv, plus the
// shortcut. With a full-precision shortcut the identity path carries the
// block input and a projection (when the shape changes) reads the clipped
// but unquantized activation with full-precision weights. Otherwise the
// shortcut reads the quantized activation and the projection weights are
// quantized like the main path.
class ResidualBlock : public Layer {
 public:
  ResidualBlock(std::string name, std::unique_ptr<BatchNormLayer> bn1, std::unique_ptr<PactLayer> act1,
                std::unique_ptr<ConvLayer> conv1, std::unique_ptr<BatchNormLayer> bn2,
                std::unique_ptr<PactLayer> act2, std::unique_ptr<ConvLayer> conv2,
                std::unique_ptr<ConvLayer> projection, bool full_precision_shortcut);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& g) override;
  void collect_params(std::vector<NamedParam>& out) override;
  void collect_buffers(std::vector<NamedTensor>& out) override;
  void collect_activations(std::vector<pact::Activation*>& out) override;
  void describe(std::vector<GraphNode>& out, const std::string& path) const override;
  void set_quantization_active(bool on) override;

  bool full_precision_shortcut() const { return fpsc_; }
  void collect_convs(std::vector<std::pair<std::string, ConvLayer*>>& out);

 private:
  std::unique_ptr<BatchNormLayer> bn1_;
  std::unique_ptr<PactLayer> act1_;
  std::unique_ptr<ConvLayer> conv1_;
  std::unique_ptr<BatchNormLayer> bn2_;
  std::unique_ptr<PactLayer> act2_;
  std::unique_ptr<ConvLayer> conv2_;
  std::unique_ptr<ConvLayer> proj_;
  bool fpsc_;
};

}  // namespace qnn
