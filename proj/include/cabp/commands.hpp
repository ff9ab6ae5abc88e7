#pragma once

// Command implementations behind the cabp executable. Each returns its
// result in memory and optionally writes the standard output files.

#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "cabp/analysis.hpp"
#include "cabp/config.hpp"
#include "cabp/memory_model.hpp"
#include "cabp/train.hpp"

namespace cabp {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

// ------------------------------------------------------------------- data

struct RunData {
  Dataset train;
  std::optional<Dataset> test;
};

inline std::filesystem::path require_data_dir(const RunConfig& cfg) {
  const std::string dir = cfg.resolved_data_path();
  if (dir.empty()) {
    throw FormatError("data.kind = " + cfg.data_kind + " needs a data path (--data, data.path, or " +
                      std::string(kDataDirEnv) + ")");
  }
  if (!std::filesystem::exists(dir)) throw FormatError("data path does not exist: " + dir);
  return dir;
}

inline RunData load_run_data(const RunConfig& cfg, const ResNetConfig& model, std::size_t default_samples = 5000) {
  RunData d;
  const std::size_t n = cfg.samples ? cfg.samples : default_samples;
  const std::size_t C = model.in_channels, H = model.input_h, W = model.input_w;
  if (cfg.data_kind == "synthetic") {
    d.train = synthetic_patterns(n, C, H, W, model.classes, cfg.data_seed, 0);
    if (cfg.test_samples) d.test = synthetic_patterns(cfg.test_samples, C, H, W, model.classes, cfg.data_seed, 1);
  } else if (cfg.data_kind == "gaussian") {
    d.train = synthetic_gaussian(n, C, H, W, model.classes, cfg.data_seed);
    if (cfg.test_samples) d.test = synthetic_gaussian(cfg.test_samples, C, H, W, model.classes, cfg.data_seed + 1);
  } else if (cfg.data_kind == "cifar10") {
    const auto dir = require_data_dir(cfg);
    d.train = load_cifar10(dir, true).head(cfg.samples);
    if (cfg.test_samples) d.test = load_cifar10(dir, false).head(cfg.test_samples);
  } else if (cfg.data_kind == "mnist") {
    const auto dir = require_data_dir(cfg);
    d.train = load_mnist(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte").head(cfg.samples);
    if (cfg.test_samples) {
      d.test = load_mnist(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte").head(cfg.test_samples);
    }
  } else {
    throw ConfigError("unknown data kind " + cfg.data_kind);
  }
  require_compatible(model, d.train);
  if (d.test) require_compatible(model, *d.test);
  return d;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

// ------------------------------------------------------------------ train

template <class T>
TrainResult run_train(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  const ResNetConfig model = cfg.model();
  const RunData data = load_run_data(cfg, model);
  ResNet<T> net(model, cfg.train.seed);
  std::filesystem::create_directories(out_dir);
  open_output(out_dir / "effective_config") << cfg.str();
  MemoryLedger ledger;
  TrainResult result =
      train(net, data.train, cfg.train, cfg.normalization(model.in_channels), &ledger, {}, data.test ? &*data.test : nullptr);
  {
    auto out = open_output(out_dir / "metrics.csv");
    write_metrics(out, result.metrics);
  }
  {
    auto out = open_output(out_dir / "ledger.csv");
    ledger.write_trace(out);
  }
  save_checkpoint(out_dir / "checkpoint_final.cabp", checkpoint_tensors(net));
  return result;
}

// ----------------------------------------------------------- memory model

struct MemoryModelOptions {
  std::string arch = "resnet18";
  std::size_t batch = 32;
  std::string resolution = "224x224";
  std::vector<PoolKernel> kernels{{2, 2}, {4, 4}};
  std::vector<std::string> exclude;  // layer-name prefixes left out of the table
  DType dtype = DType::f32;
};

inline MemoryTable run_memory_model(const MemoryModelOptions& o) {
  RunConfig rc;
  rc.arch = o.arch;
  rc.resolution = o.resolution;
  const ResNetConfig arch = rc.model();
  if (o.batch == 0) throw ConfigError("batch must be >= 1");
  MemoryTable t = static_model(arch, o.batch, o.dtype, o.kernels);
  std::erase_if(t.rows, [&](const LayerMemoryRow& r) {
    for (const auto& p : o.exclude) {
      if (r.layer.starts_with(p)) return true;
    }
    return false;
  });
  return t;
}

// ----------------------------------------------------------- characterize

struct LayerAgreement {
  std::string layer;
  std::string policy;
  std::uint64_t static_bytes = 0;
  std::int64_t ledger_bytes = 0;
};

struct CharacterizeReport {
  PointsOfInterest points;
  FootprintReport footprint;
  std::vector<LayerAgreement> layers;
  std::uint64_t optimizer_state_bytes = 0;
};

using DeviceList = std::vector<std::pair<std::string, double>>;

inline DeviceList default_devices() { return {{"8GB", 8.0}, {"12GB", 12.0}, {"16GB", 16.0}}; }

/// One mini-batch (forward, backward, optimizer step) under the ledger.
template <class T>
CharacterizeReport characterize(const ResNetConfig& model, const TrainConfig& tc, const Batch<T>& batch,
                                const DeviceList& devices, MemoryLedger& ledger) {
  ResNet<T> net(model, tc.seed);
  CharacterizeReport r;
  std::map<std::string, std::int64_t> live;
  {
    Trainer<T> trainer(net, tc, &ledger);
    StepHooks<T> hooks;
    hooks.after_forward = [&](const MemoryLedger& l) { live = l.live_saved(); };
    trainer.step(batch, tc.base_lr, StepInfo{0, 0, 0, true}, hooks);
    r.optimizer_state_bytes = trainer.optimizer_state_bytes();
    r.points = ledger.points();
    r.footprint = footprint_report(ledger, devices);
  }
  const std::size_t esize = sizeof(T);
  for (const auto& info : describe_convs(model, batch.images.dim(0))) {
    const SavePolicy p = model.policy.resolve(info.name, LayerKind::Conv);
    const std::uint64_t expected = p.is_full() ? shape_numel(info.input_shape) * esize
                                               : compressed_bytes(info.input_shape, *p.pool, esize);
    auto it = live.find(info.name);
    r.layers.push_back({info.name, p.str(), expected, it == live.end() ? 0 : it->second});
  }
  return r;
}

inline void write_points(std::ostream& os, const CharacterizeReport& r) {
  os << "point,total_bytes";
  for (std::size_t c = 0; c < kAllocCategoryCount; ++c) os << ',' << to_string(static_cast<AllocCategory>(c));
  os << '\n';
  for (PointOfInterest p : kPointsInOrder) {
    const MemorySnapshot& s = r.points[p];
    os << to_string(p) << ',' << s.total;
    for (auto b : s.by_category) os << ',' << b;
    os << '\n';
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", 100.0 * r.footprint.activation_share);
  os << "# activation_share_percent: " << buf << '\n';
  std::snprintf(buf, sizeof buf, "%.4f", static_cast<double>(r.footprint.peak_total_bytes) / kGiB);
  os << "# peak_total_gib: " << buf << '\n';
  for (const auto& d : r.footprint.devices) os << "# fits_" << d.name << ": " << (d.fits ? "yes" : "no") << '\n';
}

inline void write_layer_agreement(std::ostream& os, const CharacterizeReport& r) {
  os << "layer,policy,static_bytes,ledger_bytes,match\n";
  for (const auto& l : r.layers) {
    os << l.layer << ',' << l.policy << ',' << l.static_bytes << ',' << l.ledger_bytes << ','
       << (static_cast<std::int64_t>(l.static_bytes) == l.ledger_bytes ? "yes" : "no") << '\n';
  }
}

template <class T>
CharacterizeReport run_characterize(const RunConfig& cfg, const std::filesystem::path& out_dir,
                                    const DeviceList& devices) {
  const ResNetConfig model = cfg.model();
  const RunData data = load_run_data(cfg, model, cfg.train.batch_size);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < std::min(cfg.train.batch_size, data.train.size()); ++i) idx.push_back(i);
  const Batch<T> batch = make_batch<T>(data.train, idx, cfg.normalization(model.in_channels));
  MemoryLedger ledger;
  CharacterizeReport r = characterize(model, cfg.train, batch, devices, ledger);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    open_output(out_dir / "effective_config") << cfg.str();
    {
      auto out = open_output(out_dir / "points.csv");
      write_points(out, r);
    }
    {
      auto out = open_output(out_dir / "layers.csv");
      write_layer_agreement(out, r);
    }
    auto out = open_output(out_dir / "ledger.csv");
    ledger.write_trace(out);
  }
  return r;
}

// ------------------------------------------------------------ sensitivity

enum class SensitivityMode { FirstStep, OneEpoch };

template <class T>
GradSimilarityReport run_sensitivity(const RunConfig& cfg, std::optional<PoolKernel> kernel, SensitivityMode mode,
                                     const std::filesystem::path& out_dir) {
  ResNetConfig model = cfg.model();
  const RunData data = load_run_data(cfg, model);
  const Normalization norm = cfg.normalization(model.in_channels);
  CompressionPolicy compressed = cfg.policy();
  compressed.default_k = kernel;
  const CompressionPolicy baseline = CompressionPolicy::off();
  GradSimilarityReport r;
  if (mode == SensitivityMode::FirstStep) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < std::min(cfg.train.batch_size, data.train.size()); ++i) idx.push_back(i);
    r = first_step_similarity<T>(model, cfg.train.seed, make_batch<T>(data.train, idx, norm), baseline, compressed);
  } else {
    TrainConfig tc = cfg.train;
    tc.epochs = 1;
    r = epoch_similarity<T>(model, cfg.train.seed, data.train, tc, norm, baseline, compressed, cfg.similarity);
  }
  r.metadata.emplace_back("arch", cfg.arch);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    open_output(out_dir / "effective_config") << cfg.str();
    auto out = open_output(out_dir / "similarity.csv");
    write_similarity(out, r);
  }
  return r;
}

}  // namespace cabp
