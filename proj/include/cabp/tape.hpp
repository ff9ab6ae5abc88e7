#pragma once

// Reverse-mode differentiation tape.
//
// Forward code records one node per operation: an op id, the value ids it
// consumed, and a type-erased payload saved for backward. backward() walks the
// nodes in exact reverse order, looks up the op's registered rule, and
// accumulates input gradients by addition. Each node's payload is released
// (and reported freed to the ledger) as soon as its rule has run.

#include <any>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "cabp/ledger.hpp"
#include "cabp/math.hpp"
#include "cabp/tensor.hpp"

namespace cabp {

struct SavedPayload {
  std::any context;
  std::size_t bytes = 0;
};

/// Computes input gradients from the saved context and the output gradient.
/// `needs[i]` tells whether input i wants a gradient; entries for inputs that
/// do not may be left empty.
template <class T>
using BackwardRule = std::function<std::vector<Tensor<T>>(
    const std::any& context, const Tensor<T>& grad_out, const std::vector<bool>& needs)>;

template <class T>
class RuleRegistry {
 public:
  static RuleRegistry& global() {
    static RuleRegistry instance;
    return instance;
  }

  void add(const std::string& op_id, BackwardRule<T> rule) {
    std::lock_guard lock(mu_);
    rules_[op_id] = std::move(rule);
  }

  const BackwardRule<T>* find(const std::string& op_id) const {
    std::lock_guard lock(mu_);
    auto it = rules_.find(op_id);
    return it == rules_.end() ? nullptr : &it->second;
  }

 private:
  mutable std::mutex mu_;
  std::map<std::string, BackwardRule<T>> rules_;
};

template <class T>
class Tape {
 public:
  using Id = std::size_t;
  static constexpr Id kNone = std::numeric_limits<Id>::max();

  explicit Tape(MemoryLedger* ledger = nullptr,
                const RuleRegistry<T>& rules = RuleRegistry<T>::global())
      : ledger_(ledger), rules_(&rules) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  ~Tape() {
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) release_payload(*it);
    for (auto& v : values_) {
      if (v.grad_tracked) untrack(v.grad.bytes(), v.grad_category, v.label + ".grad");
    }
  }

  /// A value with no producing node. Gradients reaching it are kept on the
  /// tape (`grad(id)`) or, with a sink, accumulated into that tensor.
  Id leaf(const Shape& shape, bool requires_grad, std::string label = {},
          Tensor<T>* sink = nullptr) {
    values_.push_back(Value{shape, requires_grad, true, sink, {}, false,
                            AllocCategory::Gradient, std::move(label)});
    return values_.size() - 1;
  }

  /// Leaf bound to a parameter's gradient tensor. Repeated calls with the same
  /// sink return the same id, so gradients from every use accumulate.
  Id parameter(const Shape& shape, Tensor<T>& sink, const std::string& label) {
    auto it = sinks_.find(&sink);
    if (it != sinks_.end()) return it->second;
    const Id id = leaf(shape, true, label, &sink);
    sinks_.emplace(&sink, id);
    return id;
  }

  Id record(std::string op_id, std::vector<Id> inputs, SavedPayload saved,
            const Shape& output_shape, std::string label = {}) {
    if (mode_ != Mode::Forward) {
      throw ContractError("tape: cannot record '" + op_id + "' outside forward mode");
    }
    bool requires_grad = false;
    for (Id i : inputs) {
      if (i >= values_.size()) throw ContractError("tape: unknown input id for '" + op_id + "'");
      requires_grad = requires_grad || values_[i].requires_grad;
    }
    values_.push_back(Value{output_shape, requires_grad, false, nullptr, {}, false,
                            AllocCategory::Scratch, label});
    const Id out = values_.size() - 1;
    track(saved.bytes, AllocCategory::Activation, label);
    nodes_.push_back(Node{std::move(op_id), std::move(inputs), out, std::move(saved),
                          std::move(label), false});
    return out;
  }

  /// Propagates `seed` (dL/d output) back through every recorded node.
  void backward(Id output, Tensor<T> seed) {
    if (mode_ != Mode::Forward) throw ContractError("tape: backward may only run once");
    if (output >= values_.size()) throw ContractError("tape: unknown output id");
    require_same_shape(seed.shape(), values_[output].shape, "backward seed");
    mode_ = Mode::Backward;
    accumulate(output, std::move(seed));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node& node = *it;
      Value& out = values_[node.output];
      if (out.has_grad && out.requires_grad) {
        const BackwardRule<T>* rule = rules_->find(node.op_id);
        if (!rule) throw ContractError("tape: no backward rule registered for op '" + node.op_id + "'");
        std::vector<bool> needs;
        needs.reserve(node.inputs.size());
        for (Id i : node.inputs) needs.push_back(values_[i].requires_grad);
        std::vector<Tensor<T>> grads = (*rule)(node.saved.context, out.grad, needs);
        if (grads.size() != node.inputs.size()) {
          throw ContractError("tape: rule for '" + node.op_id + "' returned " +
                              std::to_string(grads.size()) + " gradients for " +
                              std::to_string(node.inputs.size()) + " inputs");
        }
        release_grad(out);
        for (std::size_t k = 0; k < grads.size(); ++k) {
          if (needs[k] && !grads[k].empty()) accumulate(node.inputs[k], std::move(grads[k]));
        }
      } else {
        release_grad(out);
      }
      release_payload(node);
    }
    mode_ = Mode::Done;
  }

  /// Accumulated gradient of a sink-less leaf after backward, or nullptr.
  const Tensor<T>* grad(Id id) const {
    const Value& v = values_.at(id);
    return v.has_grad ? &v.grad : nullptr;
  }

  const Shape& shape(Id id) const { return values_.at(id).shape; }
  bool requires_grad(Id id) const { return values_.at(id).requires_grad; }
  std::size_t node_count() const { return nodes_.size(); }
  const std::string& op_id(std::size_t node) const { return nodes_.at(node).op_id; }
  /// Order in which backward released node payloads (node indices).
  const std::vector<std::size_t>& release_order() const { return release_order_; }
  bool backward_done() const { return mode_ == Mode::Done; }

 private:
  enum class Mode { Forward, Backward, Done };

  struct Value {
    Shape shape;
    bool requires_grad = false;
    bool is_leaf = false;
    Tensor<T>* sink = nullptr;
    Tensor<T> grad;
    bool has_grad = false;
    AllocCategory grad_category = AllocCategory::Scratch;
    std::string label;
    bool grad_tracked = false;
  };

  struct Node {
    std::string op_id;
    std::vector<Id> inputs;
    Id output;
    SavedPayload saved;
    std::string label;
    bool released = false;
  };

  void accumulate(Id id, Tensor<T> g) {
    Value& v = values_[id];
    require_same_shape(g.shape(), v.shape, "gradient accumulation");
    if (v.sink) {
      if (v.sink->empty()) {
        *v.sink = Tensor<T>(v.shape, AllocCategory::Gradient);
        track(v.sink->bytes(), AllocCategory::Gradient, v.label + ".grad");
      }
      add_inplace(*v.sink, g);
      return;
    }
    if (!v.has_grad) {
      v.grad = std::move(g);
      v.has_grad = true;
      v.grad_category = v.is_leaf ? AllocCategory::Gradient : AllocCategory::Scratch;
      track(v.grad.bytes(), v.grad_category, v.label + ".grad");
      v.grad_tracked = true;
    } else {
      add_inplace(v.grad, g);
    }
  }

  void release_grad(Value& v) {
    if (v.is_leaf || !v.has_grad) return;
    untrack(v.grad.bytes(), v.grad_category, v.label + ".grad");
    v.grad_tracked = false;
    v.grad = Tensor<T>();
    v.has_grad = false;
  }

  void release_payload(Node& node) {
    if (node.released) return;
    node.saved.context.reset();
    untrack(node.saved.bytes, AllocCategory::Activation, node.label);
    node.released = true;
    release_order_.push_back(static_cast<std::size_t>(&node - nodes_.data()));
  }

  void track(std::size_t bytes, AllocCategory c, std::string label) {
    if (ledger_ && bytes) ledger_->allocate(bytes, c, std::move(label));
  }
  void untrack(std::size_t bytes, AllocCategory c, std::string label) {
    if (ledger_ && bytes) ledger_->release(bytes, c, std::move(label));
  }

  MemoryLedger* ledger_;
  const RuleRegistry<T>* rules_;
  Mode mode_ = Mode::Forward;
  std::vector<Value> values_;
  std::vector<Node> nodes_;
  std::map<const Tensor<T>*, Id> sinks_;
  std::vector<std::size_t> release_order_;
};

}  // namespace cabp
