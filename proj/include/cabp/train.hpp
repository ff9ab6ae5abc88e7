#pragma once

// Training loop: one Trainer step runs forward, backward and the optimizer
// under the memory ledger, taking the five point-of-interest snapshots.

#include <cstdio>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "cabp/autograd.hpp"
#include "cabp/checkpoint.hpp"
#include "cabp/data.hpp"
#include "cabp/ledger.hpp"
#include "cabp/model.hpp"
#include "cabp/optim.hpp"

namespace cabp {

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  double base_lr = 0.1;
  double momentum = 0.9;
  double lr_gamma = 0.1;
  std::size_t lr_interval = 30;
  std::uint64_t seed = 0;
  bool fixed_order = true;
  bool augment = false;
  std::size_t log_interval = 0;     // per-step records every n steps; 0 = epoch records only
  std::size_t steps_per_epoch = 0;  // 0 = the whole dataset

  void validate() const {
    if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
    if (!(lr_gamma > 0.0 && lr_gamma <= 1.0)) throw ConfigError("train: lr_gamma must be in (0, 1]");
    if (momentum < 0.0) throw ConfigError("train: momentum must be >= 0");
  }
};

struct MetricsRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::string split;
  double loss = 0;
  double acc = 0;
  double lr = 0;
  std::uint64_t forward_peak_bytes = 0;
};

inline void write_metrics(std::ostream& os, const std::vector<MetricsRecord>& records) {
  os << "epoch,step,split,loss,acc,lr,forward_peak_bytes\n";
  char buf[160];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%s,%.9g,%.6f,%.9g,%llu\n", r.epoch, r.step, r.split.c_str(), r.loss,
                  r.acc, r.lr, static_cast<unsigned long long>(r.forward_peak_bytes));
    os << buf;
  }
}

struct StepInfo {
  std::size_t epoch = 0;
  std::size_t step = 0;         // within the epoch
  std::size_t global_step = 0;
  bool last_in_epoch = false;
};

struct StepResult {
  double loss = 0;
  std::size_t correct = 0;
  std::size_t samples = 0;
};

template <class T>
struct StepHooks {
  /// Runs while every saved activation is still live.
  std::function<void(const MemoryLedger&)> after_forward;
  /// Runs with parameter gradients populated, before the update.
  std::function<void(const StepInfo&, ResNet<T>&)> after_backward;
};

/// Owns the optimizer state for one training run of `net` and accounts
/// parameters, inputs, gradients and optimizer state in `ledger`.
template <class T>
class Trainer {
 public:
  Trainer(ResNet<T>& net, TrainConfig config, MemoryLedger* ledger = nullptr)
      : net_(net), config_(std::move(config)), ledger_(ledger), sgd_(config_.momentum, ledger) {
    config_.validate();
    for (auto* p : net_.parameters()) p->grad = Tensor<T>();
    if (ledger_) {
      for (const auto& [name, t] : net_.state()) ledger_->allocate(t->bytes(), AllocCategory::Parameter, name);
      ledger_->snapshot(PointOfInterest::ModelInit);
    }
  }

  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  ~Trainer() {
    if (!ledger_) return;
    for (const auto& [name, t] : net_.state()) ledger_->release(t->bytes(), AllocCategory::Parameter, name);
  }

  StepResult step(Batch<T> batch, double lr, const StepInfo& info, const StepHooks<T>& hooks = {}) {
    track(batch.images.bytes(), AllocCategory::Input, "input");
    snapshot(PointOfInterest::InputInit);
    StepResult r;
    r.samples = batch.labels.size();
    {
      Tape<T> tape(ledger_);
      Var<T> logits = net_.forward(&tape, batch.images, true);
      Var<T> loss = ag::softmax_cross_entropy(&tape, logits, batch.labels);
      r.loss = static_cast<double>(loss.value[0]);
      if (!std::isfinite(r.loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(info.epoch) + " step " +
                           std::to_string(info.step) + " (global step " + std::to_string(info.global_step) + ")");
      }
      r.correct = count_correct(logits.value, batch.labels);
      snapshot(PointOfInterest::ForwardPeak);
      if (hooks.after_forward && ledger_) hooks.after_forward(*ledger_);
      tape.backward(loss.id, Tensor<T>({1}, {T{1}}));
    }
    snapshot(PointOfInterest::AfterBackward);
    if (hooks.after_backward) hooks.after_backward(info, net_);
    sgd_.step(net_.parameters(), lr);
    snapshot(PointOfInterest::OptimizerPeak);
    for (auto* p : net_.parameters()) {
      if (!p->grad.empty()) {
        track(p->grad.bytes(), AllocCategory::Gradient, p->name + ".grad", true);
        p->grad = Tensor<T>();
      }
    }
    track(batch.images.bytes(), AllocCategory::Input, "input", true);
    return r;
  }

  const TrainConfig& config() const { return config_; }
  std::size_t optimizer_state_bytes() const { return sgd_.state_bytes(); }

  static std::size_t count_correct(const Tensor<T>& logits, const std::vector<std::size_t>& labels) {
    const std::size_t C = logits.dim(1);
    std::size_t correct = 0;
    for (std::size_t n = 0; n < labels.size(); ++n) {
      const T* row = logits.ptr() + n * C;
      std::size_t best = 0;
      for (std::size_t c = 1; c < C; ++c) {
        if (row[c] > row[best]) best = c;
      }
      correct += best == labels[n];
    }
    return correct;
  }

 private:
  void track(std::size_t bytes, AllocCategory c, const std::string& label, bool release = false) {
    if (!ledger_) return;
    if (release) {
      ledger_->release(bytes, c, label);
    } else {
      ledger_->allocate(bytes, c, label);
    }
  }
  void snapshot(PointOfInterest p) {
    if (ledger_) ledger_->snapshot(p);
  }

  ResNet<T>& net_;
  TrainConfig config_;
  MemoryLedger* ledger_;
  Sgd<T> sgd_;
};

struct EpochSummary {
  std::size_t epoch = 0;
  double mean_loss = 0;
  double accuracy = 0;
  PointsOfInterest points;  // snapshots from the epoch's first step
};

struct TrainResult {
  std::vector<MetricsRecord> metrics;
  std::vector<EpochSummary> epochs;
};

inline void require_compatible(const ResNetConfig& model, const Dataset& data) {
  if (data.channels != model.in_channels || data.height != model.input_h || data.width != model.input_w) {
    throw ShapeError("dataset images are " + std::to_string(data.channels) + "x" + std::to_string(data.height) +
                     "x" + std::to_string(data.width) + " but the network expects " +
                     std::to_string(model.in_channels) + "x" + std::to_string(model.input_h) + "x" +
                     std::to_string(model.input_w));
  }
  for (auto l : data.labels) {
    if (l >= model.classes) throw ShapeError("dataset label " + std::to_string(l) + " exceeds class count");
  }
  if (data.size() == 0) throw FormatError("dataset is empty");
}

template <class T>
double evaluate(ResNet<T>& net, const Dataset& data, const Normalization& norm, std::size_t batch_size,
                double* mean_loss = nullptr) {
  std::size_t correct = 0;
  double loss = 0;
  const auto order = epoch_order(data.size(), true, 0, 0);
  for (std::size_t b = 0; b < data.size(); b += batch_size) {
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b),
                                 order.begin() + static_cast<std::ptrdiff_t>(std::min(b + batch_size, data.size())));
    Batch<T> batch = make_batch<T>(data, idx, norm);
    Var<T> logits = net.forward(nullptr, batch.images, false);
    correct += Trainer<T>::count_correct(logits.value, batch.labels);
    loss += static_cast<double>(softmax_cross_entropy(logits.value, batch.labels).loss) * static_cast<double>(idx.size());
  }
  if (mean_loss) *mean_loss = loss / static_cast<double>(data.size());
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Runs `config.epochs` epochs over `data`. With `test`, appends one "test"
/// record per epoch.
template <class T>
TrainResult train(ResNet<T>& net, const Dataset& data, const TrainConfig& config, const Normalization& norm,
                  MemoryLedger* ledger = nullptr, const StepHooks<T>& hooks = {},
                  const Dataset* test = nullptr) {
  require_compatible(net.config(), data);
  Trainer<T> trainer(net, config, ledger);
  TrainResult result;
  std::mt19937_64 aug_rng(config.seed ^ 0xA5A5A5A5ULL);
  const bool augment = config.augment && !config.fixed_order;
  std::size_t steps = (data.size() + config.batch_size - 1) / config.batch_size;
  if (config.steps_per_epoch) steps = std::min(steps, config.steps_per_epoch);
  std::size_t global = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = step_lr(epoch, config.base_lr, config.lr_gamma, config.lr_interval);
    const auto order = epoch_order(data.size(), config.fixed_order, config.seed, epoch);
    EpochSummary summary{epoch, 0, 0, {}};
    double loss_sum = 0;
    std::size_t correct = 0, seen = 0;
    std::uint64_t forward_peak = 0;
    for (std::size_t s = 0; s < steps; ++s) {
      const std::size_t begin = s * config.batch_size;
      const std::size_t end = std::min(begin + config.batch_size, data.size());
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      const StepInfo info{epoch, s, global, s + 1 == steps};
      StepResult r = trainer.step(make_batch<T>(data, idx, norm, augment ? &aug_rng : nullptr), lr, info, hooks);
      ++global;
      loss_sum += r.loss * static_cast<double>(r.samples);
      correct += r.correct;
      seen += r.samples;
      if (ledger) {
        forward_peak = std::max(forward_peak, ledger->points().forward_peak.total);
        if (s == 0) summary.points = ledger->points();
      }
      if (config.log_interval && (s + 1) % config.log_interval == 0) {
        result.metrics.push_back({epoch, global, "train", r.loss,
                                  static_cast<double>(r.correct) / static_cast<double>(r.samples), lr,
                                  ledger ? ledger->points().forward_peak.total : 0});
      }
    }
    summary.mean_loss = loss_sum / static_cast<double>(seen);
    summary.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    result.metrics.push_back({epoch, global, "train_epoch", summary.mean_loss, summary.accuracy, lr, forward_peak});
    if (test) {
      double test_loss = 0;
      const double acc = evaluate(net, *test, norm, config.batch_size, &test_loss);
      result.metrics.push_back({epoch, global, "test", test_loss, acc, lr, 0});
    }
    result.epochs.push_back(summary);
  }
  return result;
}

template <class T>
std::vector<std::pair<std::string, const Tensor<T>*>> checkpoint_tensors(ResNet<T>& net) {
  std::vector<std::pair<std::string, const Tensor<T>*>> out;
  for (const auto& [name, t] : net.state()) out.emplace_back(name, t);
  return out;
}

}  // namespace cabp
