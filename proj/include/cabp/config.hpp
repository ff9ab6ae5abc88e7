#pragma once

// Run configuration file: `[section]` headers, `key = value` entries and
// `#` comments. Every key has a default; unknown sections or keys are errors.

#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cabp/compression.hpp"
#include "cabp/data.hpp"
#include "cabp/error.hpp"
#include "cabp/model.hpp"
#include "cabp/train.hpp"

namespace cabp {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// "KxK" or "KhxKw" with positive integers.
inline PoolKernel parse_kernel(const std::string& text) {
  const auto x = text.find('x');
  auto number = [&](const std::string& s) -> std::size_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("invalid pooling kernel '" + text + "' (expected KxK or KhxKw)");
    }
    const std::size_t v = std::stoul(s);
    if (v == 0) throw ConfigError("pooling kernel components must be >= 1: '" + text + "'");
    return v;
  };
  if (x == std::string::npos) throw ConfigError("invalid pooling kernel '" + text + "' (expected KxK or KhxKw)");
  return {number(text.substr(0, x)), number(text.substr(x + 1))};
}

/// "off" or a kernel.
inline std::optional<PoolKernel> parse_compress(const std::string& text) {
  if (text == "off" || text == "none" || text == "full") return std::nullopt;
  return parse_kernel(text);
}

inline std::pair<std::size_t, std::size_t> parse_resolution(const std::string& text) {
  const PoolKernel k = [&] {
    try {
      return parse_kernel(text);
    } catch (const ConfigError&) {
      throw ConfigError("invalid resolution '" + text + "' (expected HxW)");
    }
  }();
  return {k.kh, k.kw};
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + v + "'");
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError(key + ": integer out of range: '" + v + "'");
  }
}

inline constexpr const char* kDataDirEnv = "CABP_DATA_DIR";

struct RunConfig {
  // [model]
  std::string arch = "resnet8c";  // resnet8c | resnet18c | resnet18
  std::size_t classes = 0;        // 0: architecture default
  std::string resolution = "auto";
  bool zero_init_residual = false;
  std::string dtype = "f32";
  // [train]
  TrainConfig train;
  // [compression]
  std::optional<PoolKernel> kernel;
  std::vector<std::string> exempt;
  std::vector<std::pair<std::string, std::optional<PoolKernel>>> overrides;
  SimilarityMode similarity = SimilarityMode::FinalBatch;
  // [data]
  std::string data_kind = "synthetic";  // synthetic | gaussian | cifar10 | mnist
  std::string data_path;                // empty: $CABP_DATA_DIR
  std::size_t samples = 0;              // 0: all (synthetic default 5000)
  std::size_t test_samples = 0;         // 0: no held-out evaluation
  std::uint64_t data_seed = 1;
  std::vector<double> mean;             // empty: dataset default
  std::vector<double> stddev;

  CompressionPolicy policy() const { return {kernel, exempt, overrides}; }

  ResNetConfig model() const {
    ResNetConfig m;
    if (arch == "resnet18") {
      m = resnet18_config();
    } else if (arch == "resnet8c") {
      m = resnet_cifar_config(8);
    } else if (arch == "resnet18c") {
      m = resnet_cifar_config(18);
    } else {
      throw ConfigError("unknown architecture '" + arch + "' (resnet8c, resnet18c, resnet18)");
    }
    if (classes) m.classes = classes;
    if (resolution != "auto") std::tie(m.input_h, m.input_w) = parse_resolution(resolution);
    if (data_kind == "mnist") m.in_channels = 1;
    m.zero_init_residual = zero_init_residual;
    m.policy = policy();
    return m;
  }

  Normalization normalization(std::size_t channels) const {
    if (!mean.empty() || !stddev.empty()) {
      if (mean.size() != stddev.size()) throw ConfigError("data.mean and data.std differ in length");
      for (double s : stddev) {
        if (s <= 0) throw ConfigError("data.std entries must be positive");
      }
      return {mean, stddev};
    }
    if (data_kind == "mnist") return Normalization::mnist();
    if (channels == 3) return Normalization::cifar10();
    return {std::vector<double>(channels, 128.0), std::vector<double>(channels, 64.0)};
  }

  std::string resolved_data_path() const {
    if (!data_path.empty()) return data_path;
    if (const char* env = std::getenv(kDataDirEnv)) return env;
    return {};
  }

  void set(const std::string& section, const std::string& key, const std::string& v) {
    const std::string q = section + "." + key;
    if (section == "model") {
      if (key == "arch") arch = v;
      else if (key == "classes") classes = parse_uint(q, v);
      else if (key == "resolution") resolution = v;
      else if (key == "zero_init_residual") zero_init_residual = parse_bool(q, v);
      else if (key == "dtype") {
        if (v != "f32" && v != "f64") throw ConfigError(q + ": expected f32 or f64");
        dtype = v;
      } else throw ConfigError("unknown key '" + q + "'");
    } else if (section == "train") {
      if (key == "batch_size") train.batch_size = parse_uint(q, v);
      else if (key == "epochs") train.epochs = parse_uint(q, v);
      else if (key == "lr") train.base_lr = parse_double(q, v);
      else if (key == "momentum") train.momentum = parse_double(q, v);
      else if (key == "lr_gamma") train.lr_gamma = parse_double(q, v);
      else if (key == "lr_interval") train.lr_interval = parse_uint(q, v);
      else if (key == "seed") train.seed = parse_uint(q, v);
      else if (key == "fixed_order") train.fixed_order = parse_bool(q, v);
      else if (key == "augment") train.augment = parse_bool(q, v);
      else if (key == "log_interval") train.log_interval = parse_uint(q, v);
      else if (key == "steps_per_epoch") train.steps_per_epoch = parse_uint(q, v);
      else throw ConfigError("unknown key '" + q + "'");
    } else if (section == "compression") {
      if (key == "kernel") kernel = parse_compress(v);
      else if (key == "exempt") exempt = split_list(v);
      else if (key == "overrides") {
        overrides.clear();
        for (const auto& item : split_list(v)) {
          const auto colon = item.rfind(':');
          if (colon == std::string::npos) throw ConfigError(q + ": expected pattern:KxK entries, got '" + item + "'");
          overrides.emplace_back(trim(item.substr(0, colon)), parse_compress(trim(item.substr(colon + 1))));
        }
      } else if (key == "similarity") {
        if (v == "final-batch") similarity = SimilarityMode::FinalBatch;
        else if (v == "accumulate") similarity = SimilarityMode::Accumulate;
        else throw ConfigError(q + ": expected final-batch or accumulate");
      } else throw ConfigError("unknown key '" + q + "'");
    } else if (section == "data") {
      if (key == "kind") {
        if (v != "synthetic" && v != "gaussian" && v != "cifar10" && v != "mnist") {
          throw ConfigError(q + ": expected synthetic, gaussian, cifar10 or mnist");
        }
        data_kind = v;
      } else if (key == "path") data_path = v;
      else if (key == "samples") samples = parse_uint(q, v);
      else if (key == "test_samples") test_samples = parse_uint(q, v);
      else if (key == "seed") data_seed = parse_uint(q, v);
      else if (key == "mean" || key == "std") {
        std::vector<double> vals;
        for (const auto& s : split_list(v)) vals.push_back(parse_double(q, s));
        (key == "mean" ? mean : stddev) = std::move(vals);
      } else throw ConfigError("unknown key '" + q + "'");
    } else {
      throw ConfigError("unknown section [" + section + "]");
    }
  }

  /// Canonical text form; parsing it yields an equal configuration.
  std::string str() const {
    auto join_d = [](const std::vector<double>& v) {
      std::ostringstream s;
      s.precision(17);
      for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
      return s.str();
    };
    auto num = [](double d) {
      std::ostringstream s;
      s.precision(17);
      s << d;
      return s.str();
    };
    std::ostringstream o;
    o << "[model]\n"
      << "arch = " << arch << "\nclasses = " << classes << "\nresolution = " << resolution
      << "\nzero_init_residual = " << (zero_init_residual ? "true" : "false") << "\ndtype = " << dtype << "\n\n";
    o << "[train]\n"
      << "batch_size = " << train.batch_size << "\nepochs = " << train.epochs << "\nlr = " << num(train.base_lr)
      << "\nmomentum = " << num(train.momentum) << "\nlr_gamma = " << num(train.lr_gamma)
      << "\nlr_interval = " << train.lr_interval << "\nseed = " << train.seed
      << "\nfixed_order = " << (train.fixed_order ? "true" : "false")
      << "\naugment = " << (train.augment ? "true" : "false") << "\nlog_interval = " << train.log_interval
      << "\nsteps_per_epoch = " << train.steps_per_epoch << "\n\n";
    o << "[compression]\nkernel = " << (kernel ? kernel->str() : "off") << "\nexempt = ";
    for (std::size_t i = 0; i < exempt.size(); ++i) o << (i ? "," : "") << exempt[i];
    o << "\noverrides = ";
    for (std::size_t i = 0; i < overrides.size(); ++i) {
      o << (i ? "," : "") << overrides[i].first << ':' << (overrides[i].second ? overrides[i].second->str() : "off");
    }
    o << "\nsimilarity = " << to_string(similarity) << "\n\n";
    o << "[data]\nkind = " << data_kind << "\npath = " << data_path << "\nsamples = " << samples
      << "\ntest_samples = " << test_samples << "\nseed = " << data_seed << "\nmean = " << join_d(mean)
      << "\nstd = " << join_d(stddev) << "\n";
    return o.str();
  }
};

inline RunConfig parse_config(std::istream& in, const std::string& source = "config") {
  RunConfig cfg;
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section != "model" && section != "train" && section != "compression" && section != "data") {
        throw ConfigError(where + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "entry outside of a section");
    try {
      cfg.set(section, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

inline RunConfig parse_config_text(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  return parse_config(in, path);
}

inline bool operator==(const RunConfig& a, const RunConfig& b) { return a.str() == b.str(); }

}  // namespace cabp
