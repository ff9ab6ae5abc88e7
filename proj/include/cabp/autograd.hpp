#pragma once

// Differentiable operations. Each function computes its forward result and,
// when given a tape, records a node carrying exactly what its backward rule
// needs. Passing a null tape runs the forward computation only.

#include <string>
#include <utility>
#include <vector>

#include "cabp/math.hpp"
#include "cabp/ops/activation.hpp"
#include "cabp/ops/batchnorm.hpp"
#include "cabp/ops/conv.hpp"
#include "cabp/ops/linear.hpp"
#include "cabp/ops/pool.hpp"
#include "cabp/tape.hpp"

namespace cabp {

template <class T>
struct Var {
  Tensor<T> value;
  typename Tape<T>::Id id = Tape<T>::kNone;

  const Shape& shape() const { return value.shape(); }
};

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(v.retagged(AllocCategory::Parameter)) {}

  void zero_grad() {
    if (!grad.empty()) grad.fill(T{0});
  }
};

namespace ag {

template <class T>
Var<T> input(Tape<T>* tape, Tensor<T> value, bool requires_grad = false, std::string label = "input") {
  Var<T> v{std::move(value)};
  if (tape) v.id = tape->leaf(v.value.shape(), requires_grad, std::move(label));
  return v;
}

namespace detail {

template <class T>
typename Tape<T>::Id param_id(Tape<T>& tape, Parameter<T>& p) {
  return tape.parameter(p.value.shape(), p.grad, p.name);
}

template <class T>
void ensure_rule(const char* op_id, BackwardRule<T> rule) {
  RuleRegistry<T>::global().add(op_id, std::move(rule));
}

// Registers the op's rule on first use.
#define CABP_REGISTER_RULE_ONCE(T, op_id, rule)                            \
  static const bool cabp_rule_registered_ = [] {                           \
    ::cabp::ag::detail::ensure_rule<T>(op_id, rule);                       \
    return true;                                                           \
  }();                                                                     \
  (void)cabp_rule_registered_

}  // namespace detail

// ---------------------------------------------------------------- conv2d

template <class T>
struct Conv2dContext {
  SavedActivation<T> saved;
  const Tensor<T>* weight;
  Conv2dSpec spec;
  SavePolicy policy;
  Shape input_shape;
};

template <class T>
std::vector<Tensor<T>> conv2d_rule(const std::any& context, const Tensor<T>& dy,
                                   const std::vector<bool>& needs) {
  const auto& c = std::any_cast<const Conv2dContext<T>&>(context);
  std::vector<Tensor<T>> g(needs.size());
  if (needs[0]) g[0] = conv2d_backward_input(dy, *c.weight, c.spec, c.input_shape);
  if (needs[1]) g[1] = conv2d_backward_weight(c.saved, dy, c.spec, c.policy);
  if (needs.size() > 2 && needs[2]) g[2] = conv2d_backward_bias(dy);
  return g;
}

/// Convolution whose stored input follows `policy`. The output is the exact
/// convolution regardless of the policy.
template <class T>
Var<T> conv2d(Tape<T>* tape, const Var<T>& x, Parameter<T>& weight, Parameter<T>* bias,
              const Conv2dSpec& spec, const SavePolicy& policy, const std::string& label) {
  CABP_REGISTER_RULE_ONCE(T, "conv2d", conv2d_rule<T>);
  Var<T> y{conv2d_forward(x.value, weight.value, bias ? &bias->value : nullptr, spec)};
  if (tape) {
    SavedActivation<T> saved = make_saved(x.value, policy);
    const std::size_t bytes = saved_bytes(saved);
    std::vector<typename Tape<T>::Id> inputs{x.id, detail::param_id(*tape, weight)};
    if (bias) inputs.push_back(detail::param_id(*tape, *bias));
    y.id = tape->record("conv2d", std::move(inputs),
                        {Conv2dContext<T>{std::move(saved), &weight.value, spec, policy, x.shape()}, bytes},
                        y.shape(), label);
  }
  return y;
}

// ----------------------------------------------------------- batchnorm2d

template <class T>
struct BatchNormContext {
  Tensor<T> x;
  const Tensor<T>* gamma;
  Tensor<T> mean;
  Tensor<T> invstd;
};

template <class T>
std::vector<Tensor<T>> batchnorm2d_rule(const std::any& context, const Tensor<T>& dy,
                                        const std::vector<bool>& needs) {
  const auto& c = std::any_cast<const BatchNormContext<T>&>(context);
  auto g = batchnorm2d_backward(dy, c.x, *c.gamma, c.mean, c.invstd);
  std::vector<Tensor<T>> out(3);
  if (needs[0]) out[0] = std::move(g.dx);
  if (needs[1]) out[1] = std::move(g.dgamma);
  if (needs[2]) out[2] = std::move(g.dbeta);
  return out;
}

/// Training-mode batch norm; returns the output and the batch statistics so the
/// caller can update its running estimates.
template <class T>
std::pair<Var<T>, BatchNormForward<T>> batchnorm2d(Tape<T>* tape, const Var<T>& x,
                                                   Parameter<T>& gamma, Parameter<T>& beta,
                                                   const std::string& label,
                                                   double eps = kBatchNormEps) {
  CABP_REGISTER_RULE_ONCE(T, "batchnorm2d", batchnorm2d_rule<T>);
  BatchNormForward<T> f = batchnorm2d_forward_train(x.value, gamma.value, beta.value, eps);
  Var<T> y{std::move(f.y)};
  if (tape) {
    BatchNormContext<T> c{x.value.retagged(AllocCategory::Activation), &gamma.value, f.mean, f.invstd};
    const std::size_t bytes = c.x.bytes() + c.mean.bytes() + c.invstd.bytes();
    y.id = tape->record("batchnorm2d",
                        {x.id, detail::param_id(*tape, gamma), detail::param_id(*tape, beta)},
                        {std::move(c), bytes}, y.shape(), label);
  }
  return {std::move(y), std::move(f)};
}

// ------------------------------------------------------------------ relu

template <class T>
std::vector<Tensor<T>> relu_rule(const std::any& context, const Tensor<T>& dy,
                                 const std::vector<bool>&) {
  std::vector<Tensor<T>> g;
  g.push_back(relu_backward(dy, std::any_cast<const ReluMask&>(context)));
  return g;
}

/// Stores a one-bit sign mask of the output for backward.
template <class T>
Var<T> relu(Tape<T>* tape, const Var<T>& x, const std::string& label) {
  CABP_REGISTER_RULE_ONCE(T, "relu", relu_rule<T>);
  Var<T> y{relu_forward(x.value)};
  if (tape) {
    ReluMask mask = relu_mask(y.value);
    const std::size_t bytes = mask.bytes();
    y.id = tape->record("relu", {x.id}, {std::move(mask), bytes}, y.shape(), label);
  }
  return y;
}

// -------------------------------------------------------------- maxpool2d

template <class T>
std::vector<Tensor<T>> maxpool2d_rule(const std::any& context, const Tensor<T>& dy,
                                      const std::vector<bool>&) {
  std::vector<Tensor<T>> g;
  g.push_back(maxpool2d_backward(dy, std::any_cast<const MaxPoolIndices&>(context)));
  return g;
}

template <class T>
Var<T> maxpool2d(Tape<T>* tape, const Var<T>& x, const MaxPool2dSpec& spec, const std::string& label) {
  CABP_REGISTER_RULE_ONCE(T, "maxpool2d", maxpool2d_rule<T>);
  auto f = maxpool2d_forward(x.value, spec);
  Var<T> y{std::move(f.y)};
  if (tape) {
    const std::size_t bytes = f.indices.bytes();
    y.id = tape->record("maxpool2d", {x.id}, {std::move(f.indices), bytes}, y.shape(), label);
  }
  return y;
}

// --------------------------------------------------------- global avgpool

template <class T>
std::vector<Tensor<T>> global_avgpool_rule(const std::any& context, const Tensor<T>& dy,
                                           const std::vector<bool>&) {
  std::vector<Tensor<T>> g;
  g.push_back(global_avgpool_backward(dy, std::any_cast<const Shape&>(context)));
  return g;
}

template <class T>
Var<T> global_avgpool(Tape<T>* tape, const Var<T>& x, const std::string& label) {
  CABP_REGISTER_RULE_ONCE(T, "global_avgpool", global_avgpool_rule<T>);
  Var<T> y{global_avgpool_forward(x.value)};
  if (tape) y.id = tape->record("global_avgpool", {x.id}, {x.shape(), 0}, y.shape(), label);
  return y;
}

// ----------------------------------------------------------------- linear

template <class T>
struct LinearContext {
  Tensor<T> x;
  const Tensor<T>* weight;
  bool has_bias;
};

template <class T>
std::vector<Tensor<T>> linear_rule(const std::any& context, const Tensor<T>& dy,
                                   const std::vector<bool>& needs) {
  const auto& c = std::any_cast<const LinearContext<T>&>(context);
  auto g = linear_backward(dy, c.x, *c.weight, c.has_bias);
  std::vector<Tensor<T>> out(needs.size());
  if (needs[0]) out[0] = std::move(g.dx);
  if (needs[1]) out[1] = std::move(g.dw);
  if (c.has_bias && needs[2]) out[2] = std::move(g.db);
  return out;
}

template <class T>
Var<T> linear(Tape<T>* tape, const Var<T>& x, Parameter<T>& weight, Parameter<T>* bias,
              const std::string& label) {
  CABP_REGISTER_RULE_ONCE(T, "linear", linear_rule<T>);
  Var<T> y{linear_forward(x.value, weight.value, bias ? &bias->value : nullptr)};
  if (tape) {
    LinearContext<T> c{x.value.retagged(AllocCategory::Activation), &weight.value, bias != nullptr};
    const std::size_t bytes = c.x.bytes();
    std::vector<typename Tape<T>::Id> inputs{x.id, detail::param_id(*tape, weight)};
    if (bias) inputs.push_back(detail::param_id(*tape, *bias));
    y.id = tape->record("linear", std::move(inputs), {std::move(c), bytes}, y.shape(), label);
  }
  return y;
}

// ------------------------------------------------------------ elementwise

namespace detail {

// Gradient of a broadcast operand: fold the repeated blocks back down.
template <class T>
Tensor<T> reduce_to(const Tensor<T>& g, const Shape& target) {
  if (g.shape() == target) return g;
  const std::size_t block = shape_numel(target);
  Tensor<T> out(target);
  for (std::size_t i = 0; i < g.numel(); ++i) out[i % block] += g[i];
  return out;
}

}  // namespace detail

template <class T>
std::vector<Tensor<T>> add_rule(const std::any& context, const Tensor<T>& dy,
                                const std::vector<bool>& needs) {
  const auto& shapes = std::any_cast<const std::pair<Shape, Shape>&>(context);
  std::vector<Tensor<T>> g(2);
  if (needs[0]) g[0] = detail::reduce_to(dy, shapes.first);
  if (needs[1]) g[1] = detail::reduce_to(dy, shapes.second);
  return g;
}

template <class T>
Var<T> add(Tape<T>* tape, const Var<T>& a, const Var<T>& b, const std::string& label = "add") {
  CABP_REGISTER_RULE_ONCE(T, "add", add_rule<T>);
  Var<T> y{cabp::add(a.value, b.value)};
  if (tape) {
    y.id = tape->record("add", {a.id, b.id}, {std::pair{a.shape(), b.shape()}, 0}, y.shape(), label);
  }
  return y;
}

template <class T>
std::vector<Tensor<T>> mul_rule(const std::any& context, const Tensor<T>& dy,
                                const std::vector<bool>& needs) {
  const auto& ab = std::any_cast<const std::pair<Tensor<T>, Tensor<T>>&>(context);
  std::vector<Tensor<T>> g(2);
  if (needs[0]) g[0] = detail::reduce_to(cabp::mul(dy, ab.second), ab.first.shape());
  if (needs[1]) g[1] = detail::reduce_to(cabp::mul(dy, ab.first), ab.second.shape());
  return g;
}

template <class T>
Var<T> mul(Tape<T>* tape, const Var<T>& a, const Var<T>& b, const std::string& label = "mul") {
  CABP_REGISTER_RULE_ONCE(T, "mul", mul_rule<T>);
  Var<T> y{cabp::mul(a.value, b.value)};
  if (tape) {
    const std::size_t bytes = a.value.bytes() + b.value.bytes();
    y.id = tape->record("mul", {a.id, b.id}, {std::pair{a.value, b.value}, bytes}, y.shape(), label);
  }
  return y;
}

template <class T>
std::vector<Tensor<T>> scale_rule(const std::any& context, const Tensor<T>& dy,
                                  const std::vector<bool>&) {
  std::vector<Tensor<T>> g;
  g.push_back(cabp::scale(dy, std::any_cast<T>(context)));
  return g;
}

template <class T>
Var<T> scale(Tape<T>* tape, const Var<T>& a, T s, const std::string& label = "scale") {
  CABP_REGISTER_RULE_ONCE(T, "scale", scale_rule<T>);
  Var<T> y{cabp::scale(a.value, s)};
  if (tape) y.id = tape->record("scale", {a.id}, {s, 0}, y.shape(), label);
  return y;
}

template <class T>
std::vector<Tensor<T>> sum_rule(const std::any& context, const Tensor<T>& dy,
                                const std::vector<bool>&) {
  std::vector<Tensor<T>> g;
  g.push_back(Tensor<T>::full(std::any_cast<const Shape&>(context), dy[0]));
  return g;
}

/// Sum of all elements as a shape-(1) value.
template <class T>
Var<T> sum(Tape<T>* tape, const Var<T>& a, const std::string& label = "sum") {
  CABP_REGISTER_RULE_ONCE(T, "sum", sum_rule<T>);
  Var<T> y{Tensor<T>({1}, {cabp::sum(a.value)})};
  if (tape) y.id = tape->record("sum", {a.id}, {a.shape(), 0}, y.shape(), label);
  return y;
}

// ------------------------------------------------------------------- loss

template <class T>
struct CrossEntropyContext {
  Tensor<T> probs;
  std::vector<std::size_t> labels;
};

template <class T>
std::vector<Tensor<T>> softmax_cross_entropy_rule(const std::any& context, const Tensor<T>& dy,
                                                  const std::vector<bool>&) {
  const auto& c = std::any_cast<const CrossEntropyContext<T>&>(context);
  std::vector<Tensor<T>> g;
  g.push_back(softmax_cross_entropy_backward(c.probs, c.labels, dy[0]));
  return g;
}

/// Mean cross-entropy as a shape-(1) value; `probs` receives the softmax.
template <class T>
Var<T> softmax_cross_entropy(Tape<T>* tape, const Var<T>& logits,
                             const std::vector<std::size_t>& labels, Tensor<T>* probs = nullptr,
                             const std::string& label = "loss") {
  CABP_REGISTER_RULE_ONCE(T, "softmax_cross_entropy", softmax_cross_entropy_rule<T>);
  auto f = cabp::softmax_cross_entropy(logits.value, labels);
  Var<T> y{Tensor<T>({1}, {f.loss})};
  if (probs) *probs = f.probs;
  if (tape) {
    const std::size_t bytes = f.probs.bytes() + labels.size() * sizeof(std::size_t);
    y.id = tape->record("softmax_cross_entropy", {logits.id},
                        {CrossEntropyContext<T>{std::move(f.probs), labels}, bytes}, y.shape(), label);
  }
  return y;
}

}  // namespace ag
}  // namespace cabp
