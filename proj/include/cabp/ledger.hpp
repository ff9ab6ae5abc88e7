#pragma once

// Logical memory accounting. Owners of buffers report allocations and frees;
// the ledger keeps per-category running sums, an event trace, and the five
// snapshot points of a training step (model init, input init, forward peak,
// after backward, optimizer peak).

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cabp/tensor.hpp"

namespace cabp {

inline constexpr double kMiB = 1024.0 * 1024.0;
inline constexpr double kGiB = 1024.0 * kMiB;
inline constexpr double kGB = 1e9;

struct LedgerEvent {
  std::uint64_t seq = 0;
  std::int64_t delta_bytes = 0;
  AllocCategory category = AllocCategory::Scratch;
  std::string label;
};

struct MemorySnapshot {
  std::uint64_t total = 0;
  std::array<std::uint64_t, kAllocCategoryCount> by_category{};

  std::uint64_t operator[](AllocCategory c) const {
    return by_category[static_cast<std::size_t>(c)];
  }
};

enum class PointOfInterest { ModelInit, InputInit, ForwardPeak, AfterBackward, OptimizerPeak };

inline constexpr std::array<PointOfInterest, 5> kPointsInOrder = {
    PointOfInterest::ModelInit, PointOfInterest::InputInit, PointOfInterest::ForwardPeak,
    PointOfInterest::AfterBackward, PointOfInterest::OptimizerPeak};

inline constexpr std::string_view to_string(PointOfInterest p) {
  switch (p) {
    case PointOfInterest::ModelInit: return "model_init";
    case PointOfInterest::InputInit: return "input_init";
    case PointOfInterest::ForwardPeak: return "forward_peak";
    case PointOfInterest::AfterBackward: return "after_backward";
    case PointOfInterest::OptimizerPeak: return "optimizer_peak";
  }
  return "?";
}

struct PointsOfInterest {
  MemorySnapshot model_init;
  MemorySnapshot input_init;
  MemorySnapshot forward_peak;
  MemorySnapshot after_backward;
  MemorySnapshot optimizer_peak;

  const MemorySnapshot& operator[](PointOfInterest p) const {
    switch (p) {
      case PointOfInterest::ModelInit: return model_init;
      case PointOfInterest::InputInit: return input_init;
      case PointOfInterest::ForwardPeak: return forward_peak;
      case PointOfInterest::AfterBackward: return after_backward;
      case PointOfInterest::OptimizerPeak: break;
    }
    return optimizer_peak;
  }
  MemorySnapshot& operator[](PointOfInterest p) {
    return const_cast<MemorySnapshot&>(std::as_const(*this)[p]);
  }
};

class MemoryLedger {
 public:
  explicit MemoryLedger(bool keep_trace = true) : keep_trace_(keep_trace) {}

  void track(std::int64_t delta_bytes, AllocCategory category, std::string label) {
    auto& cat = current_.by_category[static_cast<std::size_t>(category)];
    const auto next = static_cast<std::int64_t>(cat) + delta_bytes;
    if (next < 0) {
      throw ContractError("memory ledger underflow in category " + std::string(to_string(category)) +
                          " at event '" + label + "'");
    }
    cat = static_cast<std::uint64_t>(next);
    current_.total = static_cast<std::uint64_t>(static_cast<std::int64_t>(current_.total) + delta_bytes);
    if (category == AllocCategory::Activation) {
      auto& live = live_saved_[label];
      live += delta_bytes;
      if (live == 0) live_saved_.erase(label);
    }
    for (std::size_t i = 0; i < kAllocCategoryCount; ++i) {
      peak_by_category_[i] = std::max(peak_by_category_[i], current_.by_category[i]);
    }
    if (current_.total > peak_.total) peak_ = current_;
    if (current_.total > window_max_.total) window_max_ = current_;
    if (keep_trace_) {
      events_.push_back({seq_, delta_bytes, category, std::move(label)});
    }
    ++seq_;
  }

  void track(const LedgerEvent& e) { track(e.delta_bytes, e.category, e.label); }

  void allocate(std::size_t bytes, AllocCategory category, std::string label) {
    track(static_cast<std::int64_t>(bytes), category, std::move(label));
  }
  void release(std::size_t bytes, AllocCategory category, std::string label) {
    track(-static_cast<std::int64_t>(bytes), category, std::move(label));
  }

  /// Records one of the five step snapshots. InputInit and AfterBackward open
  /// a fresh peak window; ForwardPeak and OptimizerPeak report that window's
  /// maximum.
  const MemorySnapshot& snapshot(PointOfInterest p) {
    MemorySnapshot s = current_;
    switch (p) {
      case PointOfInterest::ForwardPeak:
      case PointOfInterest::OptimizerPeak:
        s = window_max_;
        break;
      default:
        break;
    }
    if (p == PointOfInterest::InputInit || p == PointOfInterest::AfterBackward) {
      window_max_ = current_;
    }
    points_[p] = s;
    ++snapshot_count_;
    return points_[p];
  }

  const PointsOfInterest& points() const { return points_; }
  std::size_t snapshot_count() const { return snapshot_count_; }

  const MemorySnapshot& current() const { return current_; }
  std::uint64_t current_total() const { return current_.total; }
  std::uint64_t current(AllocCategory c) const { return current_[c]; }
  /// Snapshot at the moment the total reached its maximum.
  const MemorySnapshot& peak() const { return peak_; }
  std::uint64_t peak(AllocCategory c) const {
    return peak_by_category_[static_cast<std::size_t>(c)];
  }

  /// Live Activation bytes grouped by event label.
  const std::map<std::string, std::int64_t>& live_saved() const { return live_saved_; }
  std::int64_t live_saved(const std::string& label) const {
    auto it = live_saved_.find(label);
    return it == live_saved_.end() ? 0 : it->second;
  }

  const std::vector<LedgerEvent>& events() const { return events_; }
  std::uint64_t event_count() const { return seq_; }

  /// Comma-separated trace: seq,delta_bytes,category,label,running_total.
  void write_trace(std::ostream& os) const {
    os << "seq,delta_bytes,category,label,running_total\n";
    std::int64_t running = 0;
    for (const auto& e : events_) {
      running += e.delta_bytes;
      os << e.seq << ',' << e.delta_bytes << ',' << to_string(e.category) << ',' << e.label << ','
         << running << '\n';
    }
  }

 private:
  bool keep_trace_;
  std::uint64_t seq_ = 0;
  MemorySnapshot current_;
  MemorySnapshot peak_;
  MemorySnapshot window_max_;
  std::array<std::uint64_t, kAllocCategoryCount> peak_by_category_{};
  std::map<std::string, std::int64_t> live_saved_;
  std::vector<LedgerEvent> events_;
  PointsOfInterest points_;
  std::size_t snapshot_count_ = 0;
};

struct DeviceVerdict {
  std::string name;
  double capacity_gb = 0;
  bool fits = false;
};

struct FootprintReport {
  std::uint64_t peak_total_bytes = 0;
  std::uint64_t peak_activation_bytes = 0;
  double activation_share = 0;  // fraction in [0, 1]
  std::vector<DeviceVerdict> devices;
};

/// Device capacities are decimal gigabytes; ledger bytes compare directly.
inline FootprintReport footprint_report(const MemoryLedger& ledger,
                                        const std::vector<std::pair<std::string, double>>& devices) {
  if (ledger.snapshot_count() == 0) throw ContractError("footprint report: no snapshots recorded");
  FootprintReport r;
  r.peak_total_bytes = ledger.peak().total;
  r.peak_activation_bytes = ledger.peak(AllocCategory::Activation);
  r.activation_share = r.peak_total_bytes == 0
                           ? 0.0
                           : static_cast<double>(r.peak_activation_bytes) /
                                 static_cast<double>(r.peak_total_bytes);
  for (const auto& [name, gb] : devices) {
    r.devices.push_back({name, gb, static_cast<double>(r.peak_total_bytes) <= gb * kGB});
  }
  return r;
}

}  // namespace cabp
