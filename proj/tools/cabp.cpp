#include <CLI11.hpp>

#include <iostream>

#include "cabp/cabp.hpp"

namespace {

using namespace cabp;

struct CommonFlags {
  std::string config;
  std::string data;
  std::string out;
  std::string compress;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
};

// Flags take precedence over the configuration file.
RunConfig resolve(const CommonFlags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (!f.data.empty()) cfg.data_path = f.data;
  if (!f.compress.empty()) cfg.kernel = parse_compress(f.compress);
  if (f.epochs) cfg.train.epochs = *f.epochs;
  if (f.seed) cfg.train.seed = *f.seed;
  return cfg;
}

template <class Fn>
auto with_dtype(const RunConfig& cfg, Fn&& fn) {
  if (cfg.dtype == "f64") return fn(double{});
  return fn(float{});
}

void add_common(CLI::App* cmd, CommonFlags& f, bool with_out) {
  cmd->add_option("--config", f.config, "run configuration file");
  cmd->add_option("--data", f.data, std::string("data directory (default $") + kDataDirEnv + ")");
  if (with_out) cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--seed", f.seed, "random seed");
}

int fail(int code, const std::string& message) {
  std::cerr << "error: " << message << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training with average-pooled activation storage"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train a network and write metrics, ledger trace and checkpoint");
  add_common(train_cmd, train_flags, true);
  train_cmd->add_option("--compress", train_flags.compress, "pooling kernel KxK, KhxKw, or off");
  train_cmd->add_option("--epochs", train_flags.epochs, "number of epochs");

  MemoryModelOptions mm;
  std::string mm_compress = "2x2,4x4", mm_out, mm_dtype = "f32";
  auto* mm_cmd = app.add_subcommand("memory-model", "static per-layer W/X/Z memory table");
  mm_cmd->add_option("--arch", mm.arch, "resnet18, resnet18c or resnet8c")->capture_default_str();
  mm_cmd->add_option("--batch", mm.batch, "mini-batch size")->capture_default_str();
  mm_cmd->add_option("--res", mm.resolution, "input resolution HxW")->capture_default_str();
  mm_cmd->add_option("--compress", mm_compress, "comma-separated pooling kernels")->capture_default_str();
  mm_cmd->add_option("--exclude", mm.exclude, "layer-name prefixes to leave out")->delimiter(',');
  mm_cmd->add_option("--dtype", mm_dtype, "f32 or f64")->capture_default_str();
  mm_cmd->add_option("--out", mm_out, "output file (default stdout)");

  CommonFlags char_flags;
  std::string devices_arg = "8,12,16";
  auto* char_cmd = app.add_subcommand("characterize", "five-point memory report for one mini-batch");
  add_common(char_cmd, char_flags, true);
  char_cmd->add_option("--compress", char_flags.compress, "pooling kernel KxK, KhxKw, or off");
  char_cmd->add_option("--devices", devices_arg, "device capacities in GB")->capture_default_str();

  CommonFlags sens_flags;
  std::string sens_mode = "first-step";
  bool accumulate = false;
  auto* sens_cmd = app.add_subcommand("sensitivity", "per-layer gradient cosine similarity against a baseline");
  add_common(sens_cmd, sens_flags, true);
  sens_cmd->add_option("--compress", sens_flags.compress, "pooling kernel for the compressed run")->required();
  sens_cmd->add_option("--mode", sens_mode, "first-step or one-epoch")
      ->check(CLI::IsMember({"first-step", "one-epoch"}))
      ->capture_default_str();
  sens_cmd->add_flag("--accumulate", accumulate, "compare gradients summed over the epoch");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kExitUsage, e.what());
  }

  try {
    if (*train_cmd) {
      if (train_flags.out.empty()) return fail(kExitUsage, "train: --out is required");
      const RunConfig cfg = resolve(train_flags);
      with_dtype(cfg, [&](auto t) {
        using T = decltype(t);
        const TrainResult r = run_train<T>(cfg, train_flags.out);
        for (const auto& e : r.epochs) {
          std::cout << "epoch " << e.epoch << " loss " << e.mean_loss << " acc " << e.accuracy << '\n';
        }
        return 0;
      });
    } else if (*mm_cmd) {
      mm.kernels.clear();
      for (const auto& k : split_list(mm_compress)) mm.kernels.push_back(parse_kernel(k));
      if (mm_dtype != "f32" && mm_dtype != "f64") return fail(kExitUsage, "--dtype must be f32 or f64");
      mm.dtype = mm_dtype == "f64" ? DType::f64 : DType::f32;
      const MemoryTable t = run_memory_model(mm);
      if (mm_out.empty()) {
        write_memory_table(std::cout, t);
      } else {
        auto out = open_output(mm_out);
        write_memory_table(out, t);
      }
    } else if (*char_cmd) {
      const RunConfig cfg = resolve(char_flags);
      DeviceList devices;
      for (const auto& d : split_list(devices_arg)) devices.emplace_back(d + "GB", parse_double("--devices", d));
      with_dtype(cfg, [&](auto t) {
        using T = decltype(t);
        const CharacterizeReport r = run_characterize<T>(cfg, char_flags.out, devices);
        write_points(std::cout, r);
        return 0;
      });
    } else if (*sens_cmd) {
      RunConfig cfg = resolve(sens_flags);
      if (accumulate) cfg.similarity = SimilarityMode::Accumulate;
      const auto kernel = parse_compress(sens_flags.compress);
      const auto mode = sens_mode == "one-epoch" ? SensitivityMode::OneEpoch : SensitivityMode::FirstStep;
      with_dtype(cfg, [&](auto t) {
        using T = decltype(t);
        const GradSimilarityReport r = run_sensitivity<T>(cfg, kernel, mode, sens_flags.out);
        write_similarity(std::cout, r);
        return 0;
      });
    }
  } catch (const ConfigError& e) {
    return fail(kExitUsage, e.what());
  } catch (const ShapeError& e) {
    return fail(kExitUsage, e.what());
  } catch (const FormatError& e) {
    return fail(kExitData, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(kExitData, e.what());
  } catch (const NumericError& e) {
    return fail(kExitNumeric, e.what());
  } catch (const std::exception& e) {
    return fail(kExitUsage, e.what());
  }
  return kExitOk;
}
