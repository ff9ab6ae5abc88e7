#pragma once

// Per-layer cosine similarity between the weight gradients of a baseline
// run and a compressed run that share seed, initialization and data order.

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "cabp/train.hpp"

namespace cabp {

inline double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw NumericError("cosine: undefined for a zero-norm operand");
  // sqrt(aa * bb) makes cosine(a, a) exactly 1; split only if the product leaves the normal range.
  const double prod = aa * bb;
  const bool normal = std::isfinite(prod) && prod >= std::numeric_limits<double>::min();
  return ab / (normal ? std::sqrt(prod) : std::sqrt(aa) * std::sqrt(bb));
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  return cosine(std::span<const double>(a), std::span<const double>(b));
}

/// Flattened weight gradients by layer name, in network order.
using GradientSnapshot = std::vector<std::pair<std::string, std::vector<double>>>;

struct LayerCosine {
  std::string layer;
  double cosine = 0;
};

struct GradSimilarityReport {
  std::vector<LayerCosine> entries;
  std::vector<std::pair<std::string, std::string>> metadata;

  double at(const std::string& layer) const {
    for (const auto& e : entries) {
      if (e.layer == layer) return e.cosine;
    }
    throw ShapeError("similarity report: no layer " + layer);
  }
};

inline GradSimilarityReport layer_similarity(const GradientSnapshot& a, const GradientSnapshot& b) {
  if (a.size() != b.size()) throw ShapeError("layer_similarity: runs have different layer counts");
  GradSimilarityReport r;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].first != b[i].first) {
      throw ShapeError("layer_similarity: layer mismatch " + a[i].first + " vs " + b[i].first);
    }
    r.entries.push_back({a[i].first, cosine(a[i].second, b[i].second)});
  }
  return r;
}

inline void write_similarity(std::ostream& os, const GradSimilarityReport& r) {
  for (const auto& [k, v] : r.metadata) os << "# " << k << ": " << v << '\n';
  os << "layer,cosine\n";
  char buf[64];
  for (const auto& e : r.entries) {
    std::snprintf(buf, sizeof buf, "%.17g", e.cosine);
    os << e.layer << ',' << buf << '\n';
  }
}

/// Layer name for a weight parameter ("layer1.0.conv1.weight" -> "layer1.0.conv1").
inline std::string weight_layer_name(const std::string& param) {
  constexpr std::string_view suffix = ".weight";
  if (param.size() > suffix.size() && param.ends_with(suffix)) return param.substr(0, param.size() - suffix.size());
  return param;
}

template <class T>
GradientSnapshot weight_gradients(ResNet<T>& net) {
  GradientSnapshot s;
  for (Parameter<T>* p : net.weight_parameters()) {
    std::vector<double> g(p->value.numel(), 0.0);
    if (!p->grad.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<double>(p->grad[i]);
    }
    s.emplace_back(weight_layer_name(p->name), std::move(g));
  }
  return s;
}

enum class SimilarityMode { FinalBatch, Accumulate };

inline std::string to_string(SimilarityMode m) { return m == SimilarityMode::FinalBatch ? "final-batch" : "accumulate"; }

/// Gradients of one forward/backward pass from freshly initialized weights.
template <class T>
GradientSnapshot first_step_gradients(const ResNetConfig& cfg, std::uint64_t seed, const Batch<T>& batch) {
  ResNet<T> net(cfg, seed);
  Tape<T> tape;
  Var<T> logits = net.forward(&tape, batch.images, true);
  Var<T> loss = ag::softmax_cross_entropy(&tape, logits, batch.labels);
  tape.backward(loss.id, Tensor<T>({1}, {T{1}}));
  return weight_gradients(net);
}

template <class T>
GradSimilarityReport first_step_similarity(ResNetConfig cfg, std::uint64_t seed, const Batch<T>& batch,
                                           const CompressionPolicy& baseline, const CompressionPolicy& compressed) {
  cfg.policy = baseline;
  const auto a = first_step_gradients<T>(cfg, seed, batch);
  cfg.policy = compressed;
  const auto b = first_step_gradients<T>(cfg, seed, batch);
  GradSimilarityReport r = layer_similarity(a, b);
  r.metadata = {{"mode", "first-step"},
                {"baseline", baseline.str()},
                {"compressed", compressed.str()},
                {"seed", std::to_string(seed)},
                {"epochs", "0"}};
  return r;
}

/// Weight gradients captured while training for `config.epochs` epochs:
/// either the final mini-batch of the last epoch or the sum over all steps.
template <class T>
GradientSnapshot epoch_gradients(const ResNetConfig& cfg, std::uint64_t seed, const Dataset& data,
                                 TrainConfig config, const Normalization& norm, SimilarityMode mode) {
  ResNet<T> net(cfg, seed);
  GradientSnapshot captured;
  StepHooks<T> hooks;
  hooks.after_backward = [&](const StepInfo& info, ResNet<T>& n) {
    if (mode == SimilarityMode::FinalBatch) {
      if (info.last_in_epoch && info.epoch + 1 == config.epochs) captured = weight_gradients(n);
      return;
    }
    auto g = weight_gradients(n);
    if (captured.empty()) {
      captured = std::move(g);
      return;
    }
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t j = 0; j < g[i].second.size(); ++j) captured[i].second[j] += g[i].second[j];
  };
  config.fixed_order = true;
  train(net, data, config, norm, nullptr, hooks);
  if (captured.empty()) throw ContractError("epoch_gradients: no training step ran");
  return captured;
}

template <class T>
GradSimilarityReport epoch_similarity(ResNetConfig cfg, std::uint64_t seed, const Dataset& data,
                                      const TrainConfig& config, const Normalization& norm,
                                      const CompressionPolicy& baseline, const CompressionPolicy& compressed,
                                      SimilarityMode mode) {
  cfg.policy = baseline;
  const auto a = epoch_gradients<T>(cfg, seed, data, config, norm, mode);
  cfg.policy = compressed;
  const auto b = epoch_gradients<T>(cfg, seed, data, config, norm, mode);
  GradSimilarityReport r = layer_similarity(a, b);
  r.metadata = {{"mode", "one-epoch"},
                {"gradient", to_string(mode)},
                {"baseline", baseline.str()},
                {"compressed", compressed.str()},
                {"seed", std::to_string(seed)},
                {"epochs", std::to_string(config.epochs)}};
  return r;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw ContractError("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct StageMedians {
  std::size_t stage = 0;
  double downsample = 0;
  double conv3x3 = 0;
};

/// Per stage with a downsample block: median cosine of 1x1 downsample
/// convolutions and of the 3x3 convolutions of that stage.
inline std::vector<StageMedians> stage_medians(const GradSimilarityReport& r) {
  std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>> by_stage;
  for (const auto& e : r.entries) {
    if (!e.layer.starts_with("layer")) continue;
    const std::size_t stage = std::stoul(e.layer.substr(5, e.layer.find('.') - 5));
    auto& [down, conv] = by_stage[stage];
    (e.layer.find("downsample") != std::string::npos ? down : conv).push_back(e.cosine);
  }
  std::vector<StageMedians> out;
  for (const auto& [stage, lists] : by_stage) {
    if (lists.first.empty() || lists.second.empty()) continue;
    out.push_back({stage, median(lists.first), median(lists.second)});
  }
  return out;
}

}  // namespace cabp
