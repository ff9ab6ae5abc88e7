#pragma once

// Randomized finite-difference cases, one generator per differentiable op.
// Each case draws its shapes and values from the given seed.

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "oracles.hpp"

namespace opcases {

using namespace cabp;
using gradcheck::bind;
using gradcheck::project;
using P = Parameter<double>;

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline Tensor<double> rand_t(const Shape& s, std::mt19937_64& rng) { return oracle::random_tensor<double>(s, rng); }

/// Values bounded away from zero so ReLU has no kink within the FD step.
inline Tensor<double> away_from_zero(const Shape& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.05, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor<double> t(s);
  for (auto& v : t.data()) v = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

/// Distinct values spaced 1e-2 apart in random order: no max-pool ties.
inline Tensor<double> distinct_values(const Shape& s, std::mt19937_64& rng) {
  Tensor<double> t(s);
  std::vector<std::size_t> perm(t.numel());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::size_t i = 0; i < perm.size(); ++i) t[i] = -1.0 + 0.01 * static_cast<double>(perm[i]);
  return t;
}

inline gradcheck::Result add(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Shape s{pick(rng, 1, 3), pick(rng, 2, 4), pick(rng, 1, 3)};
  const Shape b = seed % 2 ? Shape{1, s[1], s[2]} : s;
  P x("x", rand_t(s, rng)), y("y", rand_t(b, rng));
  const auto r = rand_t(s, rng);
  return gradcheck::check<double>({&x, &y}, [&](Tape<double>* t) {
    return project(t, ag::add(t, bind(t, x), bind(t, y)), r);
  });
}

inline gradcheck::Result mul(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Shape s{pick(rng, 1, 3), pick(rng, 2, 4), pick(rng, 1, 3)};
  const Shape b = seed % 2 ? Shape{1, 1, s[2]} : s;
  P x("x", rand_t(s, rng)), y("y", rand_t(b, rng));
  const auto r = rand_t(s, rng);
  return gradcheck::check<double>({&x, &y}, [&](Tape<double>* t) {
    return project(t, ag::mul(t, bind(t, x), bind(t, y)), r);
  });
}

inline gradcheck::Result scale(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  P x("x", rand_t({pick(rng, 1, 4), pick(rng, 1, 5)}, rng));
  const double k = std::uniform_real_distribution<double>(-2, 2)(rng);
  const auto r = rand_t(x.value.shape(), rng);
  return gradcheck::check<double>({&x}, [&](Tape<double>* t) { return project(t, ag::scale(t, bind(t, x), k), r); });
}

inline gradcheck::Result sum(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  P x("x", rand_t({pick(rng, 1, 4), pick(rng, 1, 5)}, rng));
  const auto r = rand_t({1}, rng);
  return gradcheck::check<double>({&x}, [&](Tape<double>* t) { return project(t, ag::sum(t, bind(t, x)), r); });
}

inline Conv2dSpec random_conv_spec(std::mt19937_64& rng, bool bias) {
  Conv2dSpec s;
  s.in_channels = pick(rng, 1, 3);
  s.out_channels = pick(rng, 1, 4);
  s.kh = pick(rng, 1, 3);
  s.kw = pick(rng, 1, 3);
  s.sh = pick(rng, 1, 2);
  s.sw = pick(rng, 1, 2);
  s.ph = pick(rng, 0, s.kh / 2 + 1);
  s.pw = pick(rng, 0, s.kw / 2 + 1);
  s.has_bias = bias;
  return s;
}

/// Convolution with every input differentiable; `policy` selects the save path.
inline gradcheck::Result conv2d(std::uint64_t seed, const SavePolicy& policy = SavePolicy::full()) {
  std::mt19937_64 rng(seed);
  const Conv2dSpec s = random_conv_spec(rng, true);
  const Shape xs{pick(rng, 1, 2), s.in_channels, pick(rng, 4, 7), pick(rng, 4, 7)};
  P x("x", rand_t(xs, rng)), w("w", rand_t(s.weight_shape(), rng)), b("b", rand_t({s.out_channels}, rng));
  const auto r = rand_t(s.output_shape(xs), rng);
  return gradcheck::check<double>({&x, &w, &b}, [&](Tape<double>* t) {
    return project(t, ag::conv2d(t, bind(t, x), w, &b, s, policy, "conv"), r);
  });
}

inline gradcheck::Result batchnorm(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Shape xs = seed == 0 ? Shape{4, 2, 3, 3} : Shape{pick(rng, 2, 4), pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 2, 3)};
  P x("x", rand_t(xs, rng)), g("g", rand_t({xs[1]}, rng)), b("b", rand_t({xs[1]}, rng));
  const auto r = rand_t(xs, rng);
  return gradcheck::check<double>({&x, &g, &b}, [&](Tape<double>* t) {
    return project(t, ag::batchnorm2d(t, bind(t, x), g, b, "bn").first, r);
  });
}

inline gradcheck::Result relu(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  P x("x", away_from_zero({pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 2, 4), pick(rng, 2, 4)}, rng));
  const auto r = rand_t(x.value.shape(), rng);
  return gradcheck::check<double>({&x}, [&](Tape<double>* t) { return project(t, ag::relu(t, bind(t, x), "relu"), r); });
}

inline gradcheck::Result maxpool(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const MaxPool2dSpec spec{pick(rng, 2, 3), pick(rng, 1, 2), pick(rng, 0, 1)};
  P x("x", distinct_values({pick(rng, 1, 2), pick(rng, 1, 2), pick(rng, 4, 7), pick(rng, 4, 7)}, rng));
  Tensor<double> probe = maxpool2d_forward(x.value, spec).y;
  const auto r = rand_t(probe.shape(), rng);
  return gradcheck::check<double>({&x}, [&](Tape<double>* t) {
    return project(t, ag::maxpool2d(t, bind(t, x), spec, "pool"), r);
  });
}

inline gradcheck::Result global_avgpool(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  P x("x", rand_t({pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4), pick(rng, 1, 4)}, rng));
  const auto r = rand_t({x.value.dim(0), x.value.dim(1)}, rng);
  return gradcheck::check<double>({&x}, [&](Tape<double>* t) {
    return project(t, ag::global_avgpool(t, bind(t, x), "gap"), r);
  });
}

inline gradcheck::Result linear(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t n = pick(rng, 1, 4), in = pick(rng, 1, 6), out = pick(rng, 1, 5);
  P x("x", rand_t({n, in}, rng)), w("w", rand_t({out, in}, rng)), b("b", rand_t({out}, rng));
  const auto r = rand_t({n, out}, rng);
  return gradcheck::check<double>({&x, &w, &b}, [&](Tape<double>* t) {
    return project(t, ag::linear(t, bind(t, x), w, &b, "fc"), r);
  });
}

inline gradcheck::Result cross_entropy(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t n = pick(rng, 1, 5), c = pick(rng, 2, 6);
  P z("z", rand_t({n, c}, rng));
  for (auto& v : z.value.data()) v *= 3;
  std::vector<std::size_t> labels(n);
  for (auto& l : labels) l = pick(rng, 0, c - 1);
  const auto r = rand_t({1}, rng);
  return gradcheck::check<double>({&z}, [&](Tape<double>* t) {
    return project(t, ag::softmax_cross_entropy(t, bind(t, z), labels), r);
  });
}

/// A tiny residual network end to end (conv, bn, relu, add, pool, linear, loss).
inline gradcheck::Result network(std::uint64_t seed, const std::optional<PoolKernel>& k = std::nullopt) {
  std::mt19937_64 rng(seed);
  ResNetConfig cfg;
  cfg.widths = {2, 4};
  cfg.blocks = {1, 1};
  cfg.in_channels = 1;
  cfg.input_h = cfg.input_w = 6;
  cfg.classes = 3;
  cfg.stem_kernel = 3;
  cfg.stem_stride = 1;
  cfg.stem_maxpool = false;
  cfg.policy.default_k = k;
  ResNet<double> net(cfg, seed);
  Tensor<double> x = rand_t({2, 1, 6, 6}, rng);
  std::vector<std::size_t> labels{pick(rng, 0, 2), pick(rng, 0, 2)};
  return gradcheck::check<double>(net.parameters(), [&](Tape<double>* t) {
    auto logits = net.forward(t, x, true);
    return ag::softmax_cross_entropy(t, logits, labels);
  });
}

struct Op {
  std::string name;
  gradcheck::Result (*run)(std::uint64_t);
};

inline const std::vector<Op>& all_ops() {
  static const std::vector<Op> ops = {
      {"add", add},
      {"mul", mul},
      {"scale", scale},
      {"sum", sum},
      {"conv2d", [](std::uint64_t s) { return conv2d(s); }},
      {"batchnorm2d", batchnorm},
      {"relu", relu},
      {"maxpool2d", maxpool},
      {"global_avgpool", global_avgpool},
      {"linear", linear},
      {"softmax_cross_entropy", cross_entropy},
  };
  return ops;
}

}  // namespace opcases
