#include <algorithm>
#include <cmath>

#include "qnn/error.hpp"
#include "qnn/model.hpp"

namespace qnn {

// ---- specs -----------------------------------------------------------------

ModelSpec preact_resnet_spec(const ResNetOptions& o) {
  ModelSpec spec;
  spec.name = "preact-resnet" + std::to_string(6 * o.blocks_per_stage + 2);
  spec.input_channels = o.input_channels;
  spec.input_size = o.input_size;
  spec.width_multiplier = o.width_multiplier;

  LayerSpec stem;
  stem.kind = LayerKind::conv;
  stem.name = "stem";
  stem.out_channels = o.base_channels;
  spec.layers.push_back(stem);

  for (std::size_t stage = 0; stage < 3; ++stage) {
    for (std::size_t b = 0; b < o.blocks_per_stage; ++b) {
      LayerSpec blk;
      blk.kind = LayerKind::residual_block;
      blk.name = "stage" + std::to_string(stage + 1) + ".block" + std::to_string(b);
      blk.out_channels = o.base_channels << stage;
      blk.stride = (stage > 0 && b == 0) ? 2 : 1;
      blk.quantize_weights = o.weight_n_bin != 0;
      blk.n_bin = o.weight_n_bin;
      blk.activation_bits = o.activation_bits;
      blk.shortcut_full_precision = o.full_precision_shortcut;
      blk.alpha_init = o.alpha_init;
      blk.reg_lambda = o.reg_lambda;
      blk.alpha_trainable = o.alpha_trainable;
      spec.layers.push_back(blk);
    }
  }

  LayerSpec bn;
  bn.kind = LayerKind::batchnorm;
  bn.name = "final_bn";
  spec.layers.push_back(bn);

  LayerSpec act;
  act.kind = LayerKind::pact;
  act.name = "final_act";
  act.activation_bits = 0;
  act.alpha_init = o.alpha_init;
  act.reg_lambda = o.reg_lambda;
  act.alpha_trainable = o.alpha_trainable;
  spec.layers.push_back(act);

  LayerSpec pool;
  pool.kind = LayerKind::avgpool;
  pool.name = "pool";
  spec.layers.push_back(pool);

  LayerSpec fc;
  fc.kind = LayerKind::dense;
  fc.name = "fc";
  fc.out_channels = o.classes;
  fc.scale_with_width = false;
  spec.layers.push_back(fc);
  return spec;
}

ModelSpec with_fixed_alpha(ModelSpec spec, float alpha) {
  for (auto& l : spec.layers) {
    if (l.kind == LayerKind::pact || l.kind == LayerKind::residual_block) {
      l.alpha_init = alpha;
      l.alpha_trainable = false;
    }
  }
  return spec;
}

ModelSpec without_activation_quantization(ModelSpec spec) {
  for (auto& l : spec.layers) l.activation_bits = 0;
  return spec;
}

// ---- model -----------------------------------------------------------------

Model::Model(ModelSpec spec, std::vector<std::unique_ptr<Layer>> layers)
    : spec_(std::move(spec)), layers_(std::move(layers)) {}

Tensor Model::forward(const Tensor& x, Mode mode) {
  Tensor h = x;
  for (auto& l : layers_) h = l->forward(h, mode);
  return h;
}

void Model::backward(const Tensor& g) {
  Tensor h = g;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) h = (*it)->backward(h);
}

std::optional<std::string> Model::first_nonfinite_layer(const Tensor& x, Mode mode) {
  if (!x.all_finite()) return std::string("input");
  Tensor h = x;
  for (auto& l : layers_) {
    h = l->forward(h, mode);
    if (!h.all_finite()) return l->name();
  }
  return std::nullopt;
}

std::vector<NamedParam> Model::params() {
  std::vector<NamedParam> out;
  for (auto& l : layers_) l->collect_params(out);
  return out;
}

std::vector<NamedTensor> Model::buffers() {
  std::vector<NamedTensor> out;
  for (auto& l : layers_) l->collect_buffers(out);
  return out;
}

std::vector<pact::Activation*> Model::activations() {
  std::vector<pact::Activation*> out;
  for (auto& l : layers_) l->collect_activations(out);
  return out;
}

std::vector<std::pair<std::string, ConvLayer*>> Model::quantized_convs() {
  std::vector<std::pair<std::string, ConvLayer*>> all;
  for (auto& l : layers_) {
    if (auto* c = dynamic_cast<ConvLayer*>(l.get())) all.emplace_back(c->name(), c);
    if (auto* b = dynamic_cast<ResidualBlock*>(l.get())) b->collect_convs(all);
  }
  std::vector<std::pair<std::string, ConvLayer*>> out;
  for (auto& p : all) {
    if (p.second->quantizer().has_value()) out.push_back(p);
  }
  return out;
}

std::vector<GraphNode> Model::graph() const {
  std::vector<GraphNode> out;
  for (const auto& l : layers_) l->describe(out, "main");
  return out;
}

std::size_t Model::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : params()) n += p.param->value.size();
  return n;
}

void Model::set_quantization_active(bool on) {
  for (auto& l : layers_) l->set_quantization_active(on);
}

void Model::zero_grad() {
  for (auto& p : params()) p.param->zero_grad();
}

// ---- build -----------------------------------------------------------------

namespace {

struct ShapeState {
  std::size_t c = 0, h = 0, w = 0;
  bool flat = false;
  std::size_t features() const { return flat ? c : c * h * w; }
};

std::size_t scaled(std::size_t channels, const LayerSpec& l, float multiplier) {
  if (!l.scale_with_width) return channels;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(channels * static_cast<double>(multiplier))));
}

Tensor he_init(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : t.values()) v = static_cast<float>(rng.normal() * std_dev);
  return t;
}

std::optional<sawb::Quantizer> make_quantizer(const LayerSpec& l, const sawb::CalibrationTable& table) {
  if (!l.quantize_weights) return std::nullopt;
  if (!sawb::is_supported(l.n_bin)) {
    throw BuildError("layer '" + l.name + "': unsupported n_bin " + std::to_string(l.n_bin));
  }
  return sawb::Quantizer(l.n_bin, table.coefficients(l.n_bin));
}

pact::Activation::Options act_options(const LayerSpec& l) {
  return {l.alpha_init, l.activation_bits > 0 ? l.activation_bits : 1, l.reg_lambda, l.activation_bits > 0,
          l.alpha_trainable};
}

std::unique_ptr<ConvLayer> make_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
                                     Conv2dGeometry geom, ShapeState& s, const LayerSpec& l,
                                     const sawb::CalibrationTable& table, Rng& rng) {
  if (s.flat) throw BuildError("layer '" + name + "': conv after a flattening layer");
  if (kernel > s.h + 2 * geom.pad || kernel > s.w + 2 * geom.pad || geom.stride == 0) {
    throw BuildError("layer '" + name + "': kernel " + std::to_string(kernel) + " does not fit input " +
                     std::to_string(s.h) + "x" + std::to_string(s.w));
  }
  auto conv = std::make_unique<ConvLayer>(name, he_init({out, in, kernel, kernel}, in * kernel * kernel, rng), geom,
                                          make_quantizer(l, table));
  s.c = out;
  s.h = (s.h + 2 * geom.pad - kernel) / geom.stride + 1;
  s.w = (s.w + 2 * geom.pad - kernel) / geom.stride + 1;
  return conv;
}

void validate_precision_boundaries(const ModelSpec& spec) {
  std::size_t first_weight = spec.layers.size(), last_dense = spec.layers.size();
  std::size_t last_block = 0;
  bool any_block = false;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const bool weighted = l.kind == LayerKind::conv || l.kind == LayerKind::dense || l.kind == LayerKind::residual_block;
    if (weighted && first_weight == spec.layers.size()) first_weight = i;
    if (l.kind == LayerKind::dense) last_dense = i;
    if (l.kind == LayerKind::residual_block) {
      last_block = i;
      any_block = true;
    }
  }
  if (first_weight == spec.layers.size()) throw BuildError("model '" + spec.name + "' has no weight layer");
  const auto& first = spec.layers[first_weight];
  if (first.kind == LayerKind::residual_block || first.quantize_weights) {
    throw BuildError("layer '" + first.name + "': the first layer must be a full-precision conv or dense layer");
  }
  for (std::size_t i = 0; i < first_weight; ++i) {
    if (spec.layers[i].activation_bits > 0) {
      throw BuildError("layer '" + spec.layers[i].name + "': the network input must not be quantized");
    }
  }
  if (last_dense == spec.layers.size() || last_dense + 1 != spec.layers.size()) {
    throw BuildError("model '" + spec.name + "' must end with a dense layer");
  }
  if (spec.layers[last_dense].quantize_weights) {
    throw BuildError("layer '" + spec.layers[last_dense].name + "': the last layer must keep full-precision weights");
  }
  const std::size_t tail_start = any_block ? last_block + 1 : first_weight + 1;
  for (std::size_t i = tail_start; i < last_dense; ++i) {
    if (spec.layers[i].activation_bits > 0) {
      throw BuildError("layer '" + spec.layers[i].name + "': activations feeding the last layer must not be quantized");
    }
  }
}

}  // namespace

Model build_model(const ModelSpec& spec, std::uint64_t seed, const sawb::CalibrationTable& table) {
  if (!(spec.width_multiplier >= 1.0f)) throw BuildError("width_multiplier must be >= 1");
  if (spec.layers.empty()) throw BuildError("model '" + spec.name + "' has no layers");
  validate_precision_boundaries(spec);

  const Rng root(seed);
  const float m = spec.width_multiplier;
  ShapeState s{spec.input_channels, spec.input_size, spec.input_size, false};
  std::vector<std::unique_ptr<Layer>> layers;

  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    Rng rng = root.split(i);
    switch (l.kind) {
      case LayerKind::conv: {
        const std::size_t out = scaled(l.out_channels, l, m);
        layers.push_back(make_conv(l.name, s.c, out, l.kernel, {l.stride, l.pad}, s, l, table, rng));
        break;
      }
      case LayerKind::dense: {
        const std::size_t in = s.features();
        if (l.in_features != 0 && l.in_features != in) {
          throw BuildError("layer '" + l.name + "': declared " + std::to_string(l.in_features) +
                           " input features but the previous layer produces " + std::to_string(in));
        }
        const std::size_t out = scaled(l.out_channels, l, m);
        layers.push_back(std::make_unique<DenseLayer>(l.name, he_init({in, out}, in, rng), make_quantizer(l, table)));
        s = {out, 1, 1, true};
        break;
      }
      case LayerKind::batchnorm: {
        if (l.channels != 0 && scaled(l.channels, l, m) != s.c) {
          throw BuildError("layer '" + l.name + "': declared " + std::to_string(scaled(l.channels, l, m)) +
                           " channels but the previous layer produces " + std::to_string(s.c));
        }
        layers.push_back(std::make_unique<BatchNormLayer>(l.name, s.c));
        break;
      }
      case LayerKind::pact:
        layers.push_back(std::make_unique<PactLayer>(l.name, act_options(l)));
        break;
      case LayerKind::avgpool:
        if (s.flat) throw BuildError("layer '" + l.name + "': pooling needs a spatial input");
        layers.push_back(std::make_unique<AvgPoolLayer>(l.name));
        s = {s.c, 1, 1, true};
        break;
      case LayerKind::residual_block: {
        if (s.flat) throw BuildError("layer '" + l.name + "': residual block after a flattening layer");
        const std::size_t in = s.c;
        const std::size_t out = scaled(l.out_channels, l, m);
        ShapeState main = s;
        auto bn1 = std::make_unique<BatchNormLayer>(l.name + ".bn1", in);
        auto act1 = std::make_unique<PactLayer>(l.name + ".act1", act_options(l));
        Rng r1 = rng.split(1), r2 = rng.split(2), r3 = rng.split(3);
        auto conv1 = make_conv(l.name + ".conv1", in, out, l.kernel, {l.stride, l.kernel / 2}, main, l, table, r1);
        auto bn2 = std::make_unique<BatchNormLayer>(l.name + ".bn2", out);
        auto act2 = std::make_unique<PactLayer>(l.name + ".act2", act_options(l));
        auto conv2 = make_conv(l.name + ".conv2", out, out, l.kernel, {1, l.kernel / 2}, main, l, table, r2);
        std::unique_ptr<ConvLayer> proj;
        if (l.stride != 1 || in != out) {
          ShapeState sc = s;
          LayerSpec proj_spec = l;
          proj_spec.quantize_weights = l.quantize_weights && !l.shortcut_full_precision;
          proj = make_conv(l.name + ".proj", in, out, 1, {l.stride, 0}, sc, proj_spec, table, r3);
          if (sc.h != main.h || sc.w != main.w) {
            throw BuildError("layer '" + l.name + "': shortcut shape does not match the residual branch");
          }
        }
        layers.push_back(std::make_unique<ResidualBlock>(l.name, std::move(bn1), std::move(act1), std::move(conv1),
                                                         std::move(bn2), std::move(act2), std::move(conv2),
                                                         std::move(proj), l.shortcut_full_precision));
        s = main;
        break;
      }
    }
  }
  return Model(spec, std::move(layers));
}

}  // namespace qnn
