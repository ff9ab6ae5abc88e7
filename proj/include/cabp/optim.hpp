#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "cabp/autograd.hpp"
#include "cabp/ledger.hpp"

namespace cabp {

/// lr = base_lr * gamma^floor(epoch / interval)
inline double step_lr(std::size_t epoch, double base_lr, double gamma, std::size_t interval) {
  if (interval == 0) return base_lr;
  return base_lr * std::pow(gamma, static_cast<double>(epoch / interval));
}

/// v <- m v + g; w <- w - lr v
template <class T>
void sgd_momentum_step(Tensor<T>& w, const Tensor<T>& g, Tensor<T>& v, T lr, T m) {
  require_same_shape(g.shape(), w.shape(), "sgd gradient");
  require_same_shape(v.shape(), w.shape(), "sgd velocity");
  T* wp = w.ptr();
  T* vp = v.ptr();
  const T* gp = g.ptr();
  for (std::size_t i = 0; i < w.numel(); ++i) {
    vp[i] = m * vp[i] + gp[i];
    wp[i] -= lr * vp[i];
  }
}

/// SGD with (non-Nesterov) momentum. Velocity buffers exist only when
/// momentum > 0 and are tracked as OptimizerState on first use.
template <class T>
class Sgd {
 public:
  explicit Sgd(double momentum, MemoryLedger* ledger = nullptr) : momentum_(momentum), ledger_(ledger) {}

  Sgd(const Sgd&) = delete;
  Sgd& operator=(const Sgd&) = delete;

  ~Sgd() {
    if (!ledger_) return;
    for (const auto& [p, v] : velocity_) ledger_->release(v.bytes(), AllocCategory::OptimizerState, p->name + ".momentum");
  }

  void step(const std::vector<Parameter<T>*>& params, double lr) {
    for (Parameter<T>* p : params) {
      if (p->grad.empty()) continue;
      if (momentum_ == 0.0) {
        sgd_momentum_step(p->value, p->grad, scratch_for(*p), static_cast<T>(lr), T{0});
        continue;
      }
      auto it = velocity_.find(p);
      if (it == velocity_.end()) {
        it = velocity_.emplace(p, Tensor<T>(p->value.shape(), AllocCategory::OptimizerState)).first;
        if (ledger_) ledger_->allocate(it->second.bytes(), AllocCategory::OptimizerState, p->name + ".momentum");
      }
      sgd_momentum_step(p->value, p->grad, it->second, static_cast<T>(lr), static_cast<T>(momentum_));
    }
  }

  std::size_t state_bytes() const {
    std::size_t n = 0;
    for (const auto& [p, v] : velocity_) n += v.bytes();
    return n;
  }

 private:
  // Plain SGD keeps no state between steps; the buffer is reused untracked.
  Tensor<T>& scratch_for(const Parameter<T>& p) {
    if (scratch_.shape() != p.value.shape()) scratch_ = Tensor<T>(p.value.shape(), AllocCategory::Scratch);
    scratch_.fill(T{0});
    return scratch_;
  }

  double momentum_;
  MemoryLedger* ledger_;
  std::map<const Parameter<T>*, Tensor<T>> velocity_;
  Tensor<T> scratch_;
};

}  // namespace cabp
