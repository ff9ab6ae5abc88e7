#pragma once

// ResNet family built from basic blocks (3x3 conv - BN - ReLU - 3x3 conv - BN,
// residual add, ReLU), with a 1x1 strided downsample path on the first block
// of every later stage. Layer names follow the usual dotted scheme
// (conv1, layer2.0.conv1, layer2.0.downsample.0, fc, ...).

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cabp/autograd.hpp"
#include "cabp/compression.hpp"

namespace cabp {

enum class LayerKind { Conv, BatchNorm, Linear };

/// Shell-style match supporting '*' (any run) and '?' (one character).
inline bool glob_match(std::string_view pattern, std::string_view text) {
  std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
  while (t < text.size()) {
    if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == text[t])) {
      ++p;
      ++t;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = t;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      t = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

/// Which convolution inputs are stored pooled. The stem convolution, the
/// classifier, and batch norm layers always keep full activations.
struct CompressionPolicy {
  std::optional<PoolKernel> default_k;
  std::vector<std::string> exempt;
  /// (pattern, kernel or nullopt for full); the last matching entry wins.
  std::vector<std::pair<std::string, std::optional<PoolKernel>>> overrides;

  static CompressionPolicy off() { return {}; }
  static CompressionPolicy uniform(PoolKernel k) { return {k, {}, {}}; }

  static bool always_exempt(const std::string& layer, LayerKind kind) {
    return kind != LayerKind::Conv || layer == "conv1";
  }

  SavePolicy resolve(const std::string& layer, LayerKind kind) const {
    if (always_exempt(layer, kind)) return SavePolicy::full();
    for (const auto& pattern : exempt) {
      if (glob_match(pattern, layer)) return SavePolicy::full();
    }
    std::optional<PoolKernel> k = default_k;
    for (const auto& [pattern, kernel] : overrides) {
      if (glob_match(pattern, layer)) k = kernel;
    }
    return k ? SavePolicy::pooled(*k) : SavePolicy::full();
  }

  std::string str() const {
    std::string s = default_k ? default_k->str() : "off";
    for (const auto& e : exempt) s += " exempt:" + e;
    for (const auto& [p, k] : overrides) s += " " + p + "=" + (k ? k->str() : "off");
    return s;
  }
};

struct ResNetConfig {
  std::vector<std::size_t> widths{64, 128, 256, 512};
  std::vector<std::size_t> blocks{2, 2, 2, 2};
  std::size_t in_channels = 3;
  std::size_t input_h = 224, input_w = 224;
  std::size_t classes = 1000;
  std::size_t stem_kernel = 7;
  std::size_t stem_stride = 2;
  bool stem_maxpool = true;
  bool zero_init_residual = false;
  CompressionPolicy policy;

  void validate() const {
    if (widths.empty() || widths.size() != blocks.size()) {
      throw ShapeError("resnet: need one block count per stage width");
    }
    for (std::size_t i = 0; i < widths.size(); ++i) {
      if (widths[i] == 0 || blocks[i] == 0) throw ShapeError("resnet: empty stage " + std::to_string(i + 1));
      if (i > 0 && widths[i] != 2 * widths[i - 1]) {
        throw ShapeError("resnet: stage widths must double (stage " + std::to_string(i + 1) + ")");
      }
    }
    if (classes == 0 || in_channels == 0) throw ShapeError("resnet: zero classes or input channels");
    if (stem_kernel == 0 || stem_stride == 0) throw ShapeError("resnet: invalid stem");
  }
};

/// ImageNet-style ResNet-18: 7x7/2 stem, 3x3/2 max pool, four stages.
inline ResNetConfig resnet18_config(std::size_t classes = 1000, std::size_t h = 224, std::size_t w = 224) {
  ResNetConfig c;
  c.classes = classes;
  c.input_h = h;
  c.input_w = w;
  return c;
}

/// CIFAR-scale variants: 3x3/1 stem, no max pool, 32x32 input, 10 classes.
/// depth 8 is one block per stage at widths 16/32/64; depth 18 is the
/// four-stage 64..512 network with two blocks per stage.
inline ResNetConfig resnet_cifar_config(std::size_t depth, std::size_t classes = 10) {
  ResNetConfig c;
  if (depth == 8) {
    c.widths = {16, 32, 64};
    c.blocks = {1, 1, 1};
  } else if (depth == 18) {
    c.widths = {64, 128, 256, 512};
    c.blocks = {2, 2, 2, 2};
  } else {
    throw ShapeError("resnet_cifar: unsupported depth " + std::to_string(depth) + " (use 8 or 18)");
  }
  c.input_h = c.input_w = 32;
  c.classes = classes;
  c.stem_kernel = 3;
  c.stem_stride = 1;
  c.stem_maxpool = false;
  return c;
}

struct ConvLayerInfo {
  std::string name;
  Conv2dSpec spec;
  Shape input_shape;  // NCHW at the requested batch size
};

inline MaxPool2dSpec stem_maxpool_spec() { return {3, 2, 1}; }

/// Shape inference over the architecture: every convolution with its input
/// shape, in forward order, without allocating any tensors.
inline std::vector<ConvLayerInfo> describe_convs(const ResNetConfig& cfg, std::size_t batch) {
  cfg.validate();
  std::vector<ConvLayerInfo> out;
  const std::size_t pad = cfg.stem_kernel / 2;
  Conv2dSpec stem{cfg.in_channels, cfg.widths[0], cfg.stem_kernel, cfg.stem_kernel,
                  cfg.stem_stride, cfg.stem_stride, pad, pad, false};
  Shape x{batch, cfg.in_channels, cfg.input_h, cfg.input_w};
  out.push_back({"conv1", stem, x});
  x = stem.output_shape(x);
  if (cfg.stem_maxpool) {
    const auto mp = stem_maxpool_spec();
    x = {x[0], x[1], mp.out_dim(x[2]), mp.out_dim(x[3])};
  }
  std::size_t channels = cfg.widths[0];
  for (std::size_t s = 0; s < cfg.widths.size(); ++s) {
    for (std::size_t b = 0; b < cfg.blocks[s]; ++b) {
      const std::string prefix = "layer" + std::to_string(s + 1) + "." + std::to_string(b) + ".";
      const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
      const std::size_t width = cfg.widths[s];
      Conv2dSpec c1{channels, width, 3, 3, stride, stride, 1, 1, false};
      Conv2dSpec c2{width, width, 3, 3, 1, 1, 1, 1, false};
      out.push_back({prefix + "conv1", c1, x});
      const Shape mid = c1.output_shape(x);
      out.push_back({prefix + "conv2", c2, mid});
      if (stride != 1 || channels != width) {
        Conv2dSpec ds{channels, width, 1, 1, stride, stride, 0, 0, false};
        out.push_back({prefix + "downsample.0", ds, x});
        if (ds.output_shape(x) != mid) throw ShapeError("resnet: downsample path shape mismatch at " + prefix);
      }
      x = c2.output_shape(mid);
      channels = width;
    }
  }
  return out;
}

template <class T>
struct ConvLayer {
  std::string name;
  Conv2dSpec spec;
  Parameter<T> weight;
  SavePolicy policy;

  Var<T> forward(Tape<T>* tape, const Var<T>& x) {
    return ag::conv2d(tape, x, weight, static_cast<Parameter<T>*>(nullptr), spec, policy, name);
  }
};

template <class T>
struct BatchNormLayer {
  std::string name;
  Parameter<T> gamma;
  Parameter<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;

  Var<T> forward(Tape<T>* tape, const Var<T>& x, bool training) {
    if (!training) {
      return Var<T>{batchnorm2d_forward_eval(x.value, gamma.value, beta.value, running_mean, running_var)};
    }
    auto [y, stats] = ag::batchnorm2d(tape, x, gamma, beta, name);
    batchnorm2d_update_running(running_mean, running_var, stats.mean, stats.var_unbiased);
    return std::move(y);
  }
};

template <class T>
struct BasicBlock {
  std::string prefix;
  ConvLayer<T> conv1;
  BatchNormLayer<T> bn1;
  ConvLayer<T> conv2;
  BatchNormLayer<T> bn2;
  std::optional<ConvLayer<T>> downsample_conv;
  std::optional<BatchNormLayer<T>> downsample_bn;

  Var<T> forward(Tape<T>* tape, const Var<T>& x, bool training) {
    Var<T> h = conv1.forward(tape, x);
    h = bn1.forward(tape, h, training);
    h = ag::relu(tape, h, prefix + "relu1");
    h = conv2.forward(tape, h);
    h = bn2.forward(tape, h, training);
    Var<T> skip = x;
    if (downsample_conv) {
      skip = downsample_conv->forward(tape, x);
      skip = downsample_bn->forward(tape, skip, training);
    }
    if (h.shape() != skip.shape()) {
      throw ShapeError("resnet: residual operands differ at " + prefix + ": " + shape_str(h.shape()) +
                       " vs " + shape_str(skip.shape()));
    }
    h = ag::add(tape, h, skip, prefix + "add");
    return ag::relu(tape, h, prefix + "relu2");
  }
};

template <class T>
class ResNet {
 public:
  ResNet(ResNetConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    for (const auto& [pattern, k] : config_.policy.overrides) {
      if (k && (pattern == "conv1" || pattern == "fc")) {
        throw ConfigError("compression override for " + pattern + ": layer is always exempt");
      }
    }
    std::mt19937_64 rng(seed);
    const auto convs = describe_convs(config_, 1);
    std::size_t next = 0;
    auto make_conv = [&](const std::string& expected) {
      const ConvLayerInfo& info = convs.at(next++);
      if (info.name != expected) throw ShapeError("resnet: layer order mismatch at " + expected);
      return make_conv_layer(info, rng);
    };
    stem_ = make_conv("conv1");
    stem_bn_ = make_bn("bn1", config_.widths[0], false);
    std::size_t channels = config_.widths[0];
    for (std::size_t s = 0; s < config_.widths.size(); ++s) {
      for (std::size_t b = 0; b < config_.blocks[s]; ++b) {
        const std::string prefix = "layer" + std::to_string(s + 1) + "." + std::to_string(b) + ".";
        const std::size_t width = config_.widths[s];
        BasicBlock<T> blk;
        blk.prefix = prefix;
        blk.conv1 = make_conv(prefix + "conv1");
        blk.bn1 = make_bn(prefix + "bn1", width, false);
        blk.conv2 = make_conv(prefix + "conv2");
        blk.bn2 = make_bn(prefix + "bn2", width, config_.zero_init_residual);
        const bool downsample = (s > 0 && b == 0) || channels != width;
        if (downsample) {
          blk.downsample_conv = make_conv(prefix + "downsample.0");
          blk.downsample_bn = make_bn(prefix + "downsample.1", width, false);
        }
        blocks_.push_back(std::move(blk));
        channels = width;
      }
    }
    const std::size_t in = config_.widths.back();
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor<T> w({config_.classes, in});
    for (auto& v : w.data()) v = static_cast<T>(u(rng));
    Tensor<T> b({config_.classes});
    for (auto& v : b.data()) v = static_cast<T>(u(rng));
    fc_weight_ = Parameter<T>("fc.weight", std::move(w));
    fc_bias_ = Parameter<T>("fc.bias", std::move(b));
    for (auto* c : conv_layers()) {
      if (!c->policy.is_full()) pooled_shape(conv_input_shape(c->name), *c->policy.pool);
    }
  }

  /// Logits for an NCHW batch. In training mode batch norm uses batch
  /// statistics and updates its running estimates; otherwise running stats.
  Var<T> forward(Tape<T>* tape, const Tensor<T>& input, bool training) {
    Var<T> x = ag::input(tape, input);
    x = stem_.forward(tape, x);
    x = stem_bn_.forward(tape, x, training);
    x = ag::relu(tape, x, "relu");
    if (config_.stem_maxpool) x = ag::maxpool2d(tape, x, stem_maxpool_spec(), "maxpool");
    for (auto& blk : blocks_) x = blk.forward(tape, x, training);
    x = ag::global_avgpool(tape, x, "avgpool");
    return ag::linear(tape, x, fc_weight_, &fc_bias_, "fc");
  }

  /// Trainable parameters in registration order.
  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> ps;
    ps.push_back(&stem_.weight);
    ps.push_back(&stem_bn_.gamma);
    ps.push_back(&stem_bn_.beta);
    for (auto& b : blocks_) {
      for (Parameter<T>* p : {&b.conv1.weight, &b.bn1.gamma, &b.bn1.beta, &b.conv2.weight,
                              &b.bn2.gamma, &b.bn2.beta}) {
        ps.push_back(p);
      }
      if (b.downsample_conv) {
        ps.push_back(&b.downsample_conv->weight);
        ps.push_back(&b.downsample_bn->gamma);
        ps.push_back(&b.downsample_bn->beta);
      }
    }
    ps.push_back(&fc_weight_);
    ps.push_back(&fc_bias_);
    return ps;
  }

  /// Every persistent tensor (parameters and batch-norm running statistics), by name.
  std::vector<std::pair<std::string, Tensor<T>*>> state() {
    std::vector<std::pair<std::string, Tensor<T>*>> s;
    for (Parameter<T>* p : parameters()) s.emplace_back(p->name, &p->value);
    for (BatchNormLayer<T>* bn : bn_layers()) {
      s.emplace_back(bn->name + ".running_mean", &bn->running_mean);
      s.emplace_back(bn->name + ".running_var", &bn->running_var);
    }
    return s;
  }

  std::vector<ConvLayer<T>*> conv_layers() {
    std::vector<ConvLayer<T>*> cs{&stem_};
    for (auto& b : blocks_) {
      cs.push_back(&b.conv1);
      cs.push_back(&b.conv2);
      if (b.downsample_conv) cs.push_back(&*b.downsample_conv);
    }
    return cs;
  }

  std::vector<BatchNormLayer<T>*> bn_layers() {
    std::vector<BatchNormLayer<T>*> bs{&stem_bn_};
    for (auto& b : blocks_) {
      bs.push_back(&b.bn1);
      bs.push_back(&b.bn2);
      if (b.downsample_bn) bs.push_back(&*b.downsample_bn);
    }
    return bs;
  }

  /// Weight parameters compared by the sensitivity analysis: every conv and the classifier.
  std::vector<Parameter<T>*> weight_parameters() {
    std::vector<Parameter<T>*> ws;
    for (auto* c : conv_layers()) ws.push_back(&c->weight);
    ws.push_back(&fc_weight_);
    return ws;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->value.numel();
    return n;
  }

  std::size_t parameter_bytes() {
    std::size_t n = 0;
    for (const auto& [name, t] : state()) n += t->bytes();
    return n;
  }

  const ResNetConfig& config() const { return config_; }

  Shape conv_input_shape(const std::string& name, std::size_t batch = 1) const {
    for (const auto& info : describe_convs(config_, batch)) {
      if (info.name == name) return info.input_shape;
    }
    throw ShapeError("resnet: no convolution named " + name);
  }

 private:
  ConvLayer<T> make_conv_layer(const ConvLayerInfo& info, std::mt19937_64& rng) {
    // Kaiming normal, fan-out mode.
    const Conv2dSpec& s = info.spec;
    const double stddev = std::sqrt(2.0 / static_cast<double>(s.out_channels * s.kh * s.kw));
    std::normal_distribution<double> dist(0.0, stddev);
    Tensor<T> w(s.weight_shape());
    for (auto& v : w.data()) v = static_cast<T>(dist(rng));
    return ConvLayer<T>{info.name, s, Parameter<T>(info.name + ".weight", std::move(w)),
                        config_.policy.resolve(info.name, LayerKind::Conv)};
  }

  BatchNormLayer<T> make_bn(const std::string& name, std::size_t channels, bool zero_gamma) {
    return BatchNormLayer<T>{
        name,
        Parameter<T>(name + ".weight", Tensor<T>::full({channels}, zero_gamma ? T{0} : T{1})),
        Parameter<T>(name + ".bias", Tensor<T>({channels})),
        Tensor<T>({channels}, AllocCategory::Parameter),
        Tensor<T>::full({channels}, T{1}, AllocCategory::Parameter)};
  }

  ResNetConfig config_;
  ConvLayer<T> stem_;
  BatchNormLayer<T> stem_bn_;
  std::vector<BasicBlock<T>> blocks_;
  Parameter<T> fc_weight_;
  Parameter<T> fc_bias_;
};

}  // namespace cabp
