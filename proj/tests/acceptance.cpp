// Acceptance checks. Usage: cabp-acceptance <id>... | all
// Prints one PASS/FAIL line per check; exits non-zero if any check fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "op_cases.hpp"

namespace {

using namespace cabp;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string summary;
  std::vector<std::string> details;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    details.push_back(std::string(ok ? "ok   " : "miss ") + what);
  }
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("cabp-acceptance-" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// ------------------------------------------------- reference table (1, 1w)

struct RefRow {
  const char* layer;
  double w, x, z2, z4;
};

// Reference per-layer memory for ResNet-18, 224x224, batch 32, MiB.
constexpr RefRow kRefTable[] = {
    {"conv1", 0.04, 18.38, 4.59, 1.15},
    {"layer1.0.conv1", 0.14, 24.50, 6.12, 1.53},
    {"layer1.0.conv2", 0.14, 24.50, 6.12, 1.53},
    {"layer1.1.conv1", 0.14, 24.50, 6.12, 1.53},
    {"layer1.1.conv2", 0.14, 24.50, 6.12, 1.53},
    {"layer2.0.conv1", 0.28, 24.50, 6.12, 1.53},
    {"layer2.0.conv2", 0.56, 12.25, 3.06, 0.77},
    {"layer2.0.downsample.0", 0.56, 24.50, 6.12, 1.53},
    {"layer2.1.conv1", 0.56, 12.25, 3.06, 0.77},
    {"layer2.1.conv2", 1.12, 12.25, 3.06, 0.77},
    {"layer3.0.conv1", 2.25, 12.25, 3.06, 0.77},
    {"layer3.0.conv2", 2.25, 6.12, 1.53, 0.28},
    {"layer3.0.downsample.0", 2.25, 12.25, 3.06, 0.77},
    {"layer3.1.conv1", 4.50, 6.12, 1.53, 0.28},
    {"layer3.1.conv2", 9.00, 6.12, 1.53, 0.28},
    {"layer4.0.conv1", 9.00, 6.12, 1.53, 0.28},
    {"layer4.0.conv2", 9.00, 3.06, 0.56, 0.06},
};
constexpr RefRow kRefSum{"Sum", 41.94, 254.19, 63.34, 15.35};
constexpr double kRefTol = 0.01;

MemoryTable reference_layout() {
  MemoryModelOptions o;
  o.arch = "resnet18";
  o.batch = 32;
  o.resolution = "224x224";
  o.kernels = {{2, 2}, {4, 4}};
  o.exclude = {"layer4.0.downsample", "layer4.1"};
  return run_memory_model(o);
}

Outcome reference_xz() {
  Outcome o;
  const auto t0 = Clock::now();
  const MemoryTable t = reference_layout();
  const double runtime = seconds_since(t0);
  o.require(t.rows.size() == std::size(kRefTable), fmt("%zu printed rows", t.rows.size()));
  double worst = 0;
  for (const auto& p : kRefTable) {
    const auto& r = t.row(p.layer);
    const double e = std::max({std::abs(r.x_bytes / kMiB - p.x), std::abs(r.z_bytes[0] / kMiB - p.z2),
                               std::abs(r.z_bytes[1] / kMiB - p.z4)});
    worst = std::max(worst, e);
    o.require(e <= kRefTol, fmt("%-22s X %.4f Z2 %.4f Z4 %.4f (ref %.2f %.2f %.2f)", p.layer, r.x_bytes / kMiB,
                                   r.z_bytes[0] / kMiB, r.z_bytes[1] / kMiB, p.x, p.z2, p.z4));
  }
  const auto s = t.sum();
  const double se = std::max({std::abs(s.x_bytes / kMiB - kRefSum.x), std::abs(s.z_bytes[0] / kMiB - kRefSum.z2),
                              std::abs(s.z_bytes[1] / kMiB - kRefSum.z4)});
  o.require(se <= kRefTol, fmt("Sum X %.4f Z2 %.4f Z4 %.4f", s.x_bytes / kMiB, s.z_bytes[0] / kMiB,
                                  s.z_bytes[1] / kMiB));
  o.require(runtime < 1.0, fmt("runtime %.4f s < 1 s", runtime));
  o.summary = fmt("X/Z columns, 17 rows + Sum, max |err| %.4f MiB (tol %.2f), %.4f s", std::max(worst, se),
                  kRefTol, runtime);
  return o;
}

Outcome reference_w() {
  Outcome o;
  const MemoryTable t = reference_layout();
  std::size_t rows = 0, bad = 0;
  for (const auto& p : kRefTable) {
    const auto& r = t.row(p.layer);
    if (r.layer.find("downsample") != std::string::npos || r.layer == "conv1") continue;
    ++rows;
    const double w = r.w_bytes / kMiB;
    const bool ok = std::abs(w - p.w) <= kRefTol;
    bad += !ok;
    o.require(ok, fmt("%-22s W %.4f (ref %.2f)", p.layer, w, p.w));
  }
  o.summary = fmt("W column on 3x3 rows: %zu of %zu rows outside %.2f MiB", bad, rows, kRefTol);
  return o;
}

// ------------------------------------------------------------- gradients (2)

Outcome gradients() {
  Outcome o;
  constexpr std::uint64_t kInstances = 20;
  constexpr double kTol = 1e-6;
  const auto t0 = Clock::now();
  double worst = 0;
  std::size_t ops = 0;
  for (const auto& op : opcases::all_ops()) {
    double op_worst = 0;
    std::size_t checked = 0;
    for (std::uint64_t seed = 0; seed < kInstances; ++seed) {
      const auto r = op.run(seed);
      op_worst = std::max(op_worst, r.max_rel_error);
      checked += r.checked;
    }
    ++ops;
    worst = std::max(worst, op_worst);
    o.require(op_worst < kTol && checked > 0,
              fmt("%-24s %llu instances, %zu entries, max rel err %.3e", op.name.c_str(),
                  static_cast<unsigned long long>(kInstances), checked, op_worst));
  }
  double net_worst = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) net_worst = std::max(net_worst, opcases::network(seed).max_rel_error);
  o.require(net_worst < kTol, fmt("residual network end to end, max rel err %.3e", net_worst));
  const double runtime = seconds_since(t0);
  o.require(runtime < 60.0, fmt("runtime %.2f s < 60 s", runtime));
  o.summary = fmt("finite differences, %zu ops x %llu instances, max rel err %.3e (tol %.0e), %.2f s", ops,
                  static_cast<unsigned long long>(kInstances), std::max(worst, net_worst), kTol, runtime);
  return o;
}

// ------------------------------------------------------- compression contract (3)

template <class T>
struct ConvRun {
  Tensor<T> y, dx, dw, db;
};

template <class T>
ConvRun<T> conv_through_tape(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, const Tensor<T>& dy,
                             const Conv2dSpec& s, const SavePolicy& policy) {
  Parameter<T> xp("x", x), wp("w", w), bp("b", b);
  Tape<T> tape;
  Var<T> xv{xp.value};
  xv.id = tape.parameter(x.shape(), xp.grad, "x");
  Var<T> y = ag::conv2d(&tape, xv, wp, &bp, s, policy, "conv");
  tape.backward(y.id, dy);
  return {y.value, xp.grad, wp.grad, bp.grad};
}

template <class T>
bool contract_instance(std::uint64_t seed, std::string& note) {
  std::mt19937_64 rng(seed);
  Conv2dSpec s = opcases::random_conv_spec(rng, true);
  const std::size_t H = opcases::pick(rng, 8, 13), W = opcases::pick(rng, 8, 13);
  const Shape xs{opcases::pick(rng, 1, 3), s.in_channels, H, W};
  const auto x = oracle::random_tensor<T>(xs, rng), w = oracle::random_tensor<T>(s.weight_shape(), rng);
  const auto b = oracle::random_tensor<T>({s.out_channels}, rng);
  const auto dy = oracle::random_tensor<T>(s.output_shape(xs), rng);
  const auto full = conv_through_tape(x, w, b, dy, s, SavePolicy::full());
  bool ok = full.dw == oracle::conv2d_weight_grad(x, dy, s);
  for (const PoolKernel k : {PoolKernel{1, 1}, PoolKernel{2, 2}, PoolKernel{4, 4}, PoolKernel{2, 4}}) {
    const auto r = conv_through_tape(x, w, b, dy, s, SavePolicy::pooled(k));
    const auto c = compress(x, k);
    const auto want_dw = oracle::conv2d_weight_grad(oracle::inflate_by_enumeration(c.z, xs, k.kh, k.kw), dy, s);
    const bool same = r.y == full.y && r.dx == full.dx && r.db == full.db && r.dw == want_dw;
    if (!same) note = "seed " + std::to_string(seed) + " kernel " + k.str();
    ok = ok && same;
  }
  return ok;
}

std::pair<std::string, std::string> train_artifacts(const RunConfig& cfg, const fs::path& dir) {
  run_train<float>(cfg, dir);
  return {slurp(dir / "metrics.csv"), slurp(dir / "checkpoint_final.cabp")};
}

RunConfig small_run(std::size_t epochs) {
  RunConfig cfg;
  cfg.arch = "resnet8c";
  cfg.train.batch_size = 32;
  cfg.train.epochs = epochs;
  cfg.train.base_lr = 0.05;
  cfg.train.log_interval = 1;
  cfg.samples = 256;
  cfg.test_samples = 64;
  return cfg;
}

Outcome contract() {
  Outcome o;
  const auto t0 = Clock::now();
  constexpr std::uint64_t kInstances = 20;
  std::size_t good32 = 0, good64 = 0;
  std::string note;
  for (std::uint64_t seed = 0; seed < kInstances; ++seed) {
    good32 += contract_instance<float>(seed, note);
    good64 += contract_instance<double>(seed, note);
  }
  o.require(good32 == kInstances && good64 == kInstances,
            fmt("(a)-(c) forward, dX, db bit-identical across policies; pooled dW == oracle on "
                "inflate(compress(X)): f32 %zu/%llu, f64 %zu/%llu %s",
                good32, static_cast<unsigned long long>(kInstances), good64,
                static_cast<unsigned long long>(kInstances), note.c_str()));

  RunConfig base = small_run(3);
  RunConfig ident = base;
  ident.kernel = PoolKernel{1, 1};
  const auto a = train_artifacts(base, scratch("contract-full"));
  const auto b = train_artifacts(ident, scratch("contract-1x1"));
  o.require(a.first == b.first, fmt("(d) metrics identical over 3 epochs (%zu bytes)", a.first.size()));
  o.require(a.second == b.second, fmt("(d) checkpoints identical after 3 epochs (%zu bytes)", a.second.size()));
  const double runtime = seconds_since(t0);
  o.require(runtime < 120.0, fmt("runtime %.2f s < 120 s", runtime));
  o.summary = fmt("compression contract, %llu instances x 4 kernels x {f32, f64}, 1x1 training == Full, %.2f s",
                  static_cast<unsigned long long>(kInstances), runtime);
  return o;
}

// -------------------------------------------------------- memory reduction (4)

Outcome memory_reduction() {
  Outcome o;
  RunConfig cfg;
  cfg.arch = "resnet18";
  cfg.train.batch_size = 32;
  cfg.samples = 32;
  auto run = [&](std::optional<PoolKernel> k) {
    RunConfig c = cfg;
    c.kernel = k;
    return run_characterize<float>(c, {}, default_devices());
  };
  const auto full = run(std::nullopt);
  const auto pooled = run(PoolKernel{2, 2});

  std::int64_t full_conv = 0, pooled_conv = 0, full_compressed = 0, pooled_compressed = 0;
  bool agree = true;
  for (std::size_t i = 0; i < full.layers.size(); ++i) {
    const auto& f = full.layers[i];
    const auto& p = pooled.layers[i];
    agree = agree && static_cast<std::int64_t>(f.static_bytes) == f.ledger_bytes &&
            static_cast<std::int64_t>(p.static_bytes) == p.ledger_bytes;
    full_conv += f.ledger_bytes;
    pooled_conv += p.ledger_bytes;
    if (p.policy != "full") {
      full_compressed += f.ledger_bytes;
      pooled_compressed += p.ledger_bytes;
    }
  }
  o.require(agree, "ledger conv-saved bytes equal the static model for every conv layer, both runs");

  // Static reference over the same compressed layers, from the memory table.
  const MemoryTable t = static_model(cfg.model(), 32, DType::f32, {{2, 2}});
  std::uint64_t sx = 0, sz = 0;
  for (const auto& l : pooled.layers) {
    if (l.policy == "full") continue;
    sx += t.row(l.layer).x_bytes;
    sz += t.row(l.layer).z_bytes[0];
  }
  const double ratio = static_cast<double>(pooled_compressed) / static_cast<double>(full_compressed);
  o.require(static_cast<std::uint64_t>(pooled_compressed) == sz && static_cast<std::uint64_t>(full_compressed) == sx,
            fmt("compressed conv layers: ledger %.2f -> %.2f MiB, static %.2f -> %.2f MiB", full_compressed / kMiB,
                pooled_compressed / kMiB, sx / kMiB, sz / kMiB));
  o.require(ratio <= 0.25 && ratio > 0.24, fmt("compressed conv layers keep %.4f of Full (0.25 less floor)", ratio));
  const double conv_ratio = static_cast<double>(pooled_conv) / static_cast<double>(full_conv);
  o.details.push_back(fmt("info all conv-saved bytes incl. exempt stem: %.2f -> %.2f MiB (%.4f)", full_conv / kMiB,
                          pooled_conv / kMiB, conv_ratio));

  const double fp = static_cast<double>(full.points.forward_peak.total);
  const double pp = static_cast<double>(pooled.points.forward_peak.total);
  const double reduction = 1.0 - pp / fp;
  o.require(reduction >= 0.25 && reduction <= 0.40,
            fmt("forward_peak %.2f -> %.2f MiB, reduction %.2f%% in [25%%, 40%%]", fp / kMiB, pp / kMiB,
                100.0 * reduction));
  o.summary = fmt("ResNet-18 224x224 batch 32, Pooled(2,2): compressed conv bytes x%.4f, forward_peak -%.2f%%", ratio,
                  100.0 * reduction);
  return o;
}

// ---------------------------------------------------------- loss offset (5)

Outcome loss_offset() {
  Outcome o;
  const auto t0 = Clock::now();
  RunConfig cfg;
  cfg.arch = "resnet8c";
  cfg.train.batch_size = 64;
  cfg.train.epochs = 10;
  cfg.train.seed = 0;
  cfg.samples = 5000;
  // Real CIFAR-10 when available, otherwise the synthetic stand-in.
  if (const std::string dir = cfg.resolved_data_path(); !dir.empty() && fs::exists(fs::path(dir) / "data_batch_1.bin")) {
    cfg.data_kind = "cifar10";
  }
  auto losses = [&](std::optional<PoolKernel> k) {
    RunConfig c = cfg;
    c.kernel = k;
    const ResNetConfig m = c.model();
    const RunData d = load_run_data(c, m);
    ResNet<float> net(m, c.train.seed);
    std::vector<double> l;
    for (const auto& e : train(net, d.train, c.train, c.normalization(m.in_channels)).epochs) l.push_back(e.mean_loss);
    return l;
  };
  const auto base = losses(std::nullopt), p2 = losses(PoolKernel{2, 2}), p4 = losses(PoolKernel{4, 4});
  auto show = [](const std::vector<double>& v) {
    std::string s;
    for (double x : v) s += fmt(" %.4f", x);
    return s;
  };
  auto monotone = [](const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
      if (!(v[i] < v[i - 1])) return false;
    return true;
  };
  auto share_ge = [](const std::vector<double>& a, const std::vector<double>& b) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) n += a[i] >= b[i];
    return static_cast<double>(n) / static_cast<double>(a.size());
  };
  o.details.push_back("info baseline " + show(base));
  o.details.push_back("info 2x2     " + show(p2));
  o.details.push_back("info 4x4     " + show(p4));
  o.require(monotone(base), "baseline epoch-mean loss strictly decreasing");
  o.require(monotone(p2), "Pooled(2,2) epoch-mean loss strictly decreasing");
  const double s2 = share_ge(p2, base), s4 = share_ge(p4, p2);
  o.require(s2 >= 0.8, fmt("Pooled(2,2) >= baseline in %.0f%% of epochs (need 80%%)", 100 * s2));
  o.require(s4 >= 0.7, fmt("Pooled(4,4) >= Pooled(2,2) in %.0f%% of epochs (need 70%%)", 100 * s4));
  const double runtime = seconds_since(t0);
  o.require(runtime < 1800.0, fmt("runtime %.0f s < 1800 s", runtime));
  o.summary = fmt("ResNet-8, 5000 %s samples, 10 epochs: 2x2>=base %.0f%%, 4x4>=2x2 %.0f%%, %.0f s",
                  cfg.data_kind.c_str(), 100 * s2, 100 * s4, runtime);
  return o;
}

// ------------------------------------------------------- sensitivity (6, 6c)

Batch<float> first_batch(const RunConfig& cfg, std::size_t n) {
  const ResNetConfig m = cfg.model();
  const RunData d = load_run_data(cfg, m, n);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return make_batch<float>(d.train, idx, cfg.normalization(m.in_channels));
}

RunConfig cifar18() {
  RunConfig cfg;
  cfg.arch = "resnet18c";
  cfg.samples = 16;
  return cfg;
}

Outcome sensitivity() {
  Outcome o;
  const RunConfig cfg = cifar18();
  const Batch<float> batch = first_batch(cfg, 16);
  for (const PoolKernel k : {PoolKernel{2, 2}, PoolKernel{4, 4}}) {
    const auto r = first_step_similarity<float>(cfg.model(), 0, batch, CompressionPolicy::off(),
                                                CompressionPolicy::uniform(k));
    o.require(r.at("conv1") == 1.0 && r.at("fc") == 1.0,
              fmt("first step %s: exempt conv1 %.17g, fc %.17g", k.str().c_str(), r.at("conv1"), r.at("fc")));
  }

  std::mt19937_64 rng(11);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const auto ta = oracle::random_tensor<double>({97}, rng), tb = oracle::random_tensor<double>({97}, rng);
    const std::vector<double> a(ta.data().begin(), ta.data().end()), b(tb.data().begin(), tb.data().end());
    double na = 0, nb = 0;
    for (std::size_t j = 0; j < a.size(); ++j) na += a[j] * a[j], nb += b[j] * b[j];
    na = std::sqrt(na), nb = std::sqrt(nb);
    double dot = 0;
    for (std::size_t j = 0; j < a.size(); ++j) dot += (a[j] / na) * (b[j] / nb);
    std::vector<double> neg(a);
    for (auto& v : neg) v = -v;
    worst = std::max({worst, std::abs(cosine(a, b) - dot), std::abs(cosine(a, a) - 1.0),
                      std::abs(cosine(a, neg) + 1.0), std::abs(cosine(a, b) - cosine(b, a))});
  }
  o.require(worst <= 1e-12, fmt("unit-vector identities, max deviation %.3e <= 1e-12", worst));
  o.summary = "first-step exempt layers exact, unit-vector identities";
  return o;
}

Outcome sensitivity_epoch() {
  Outcome o;
  RunConfig epoch_cfg = cifar18();
  epoch_cfg.samples = 512;
  epoch_cfg.train.batch_size = 64;
  epoch_cfg.train.epochs = 1;
  const ResNetConfig m = epoch_cfg.model();
  const RunData d = load_run_data(epoch_cfg, m);
  const auto r = epoch_similarity<float>(m, 0, d.train, epoch_cfg.train, epoch_cfg.normalization(m.in_channels),
                                         CompressionPolicy::off(), CompressionPolicy::uniform({2, 2}),
                                         SimilarityMode::FinalBatch);
  for (const auto& s : stage_medians(r)) {
    o.require(s.downsample > s.conv3x3, fmt("one epoch, stage %zu: downsample median %.6f > 3x3 median %.6f",
                                            s.stage, s.downsample, s.conv3x3));
  }

  o.summary = "ResNet-18-CIFAR, 512 synthetic samples, one epoch, Pooled(2,2), final-batch gradients";
  return o;
}

Outcome sensitivity_constant() {
  Outcome o;
  const RunConfig cfg = cifar18();
  Batch<float> batch = first_batch(cfg, 16);
  for (auto& v : batch.images.data()) v = 0.5f;
  const auto r = first_step_similarity<float>(cfg.model(), 0, batch, CompressionPolicy::off(),
                                              CompressionPolicy::uniform({2, 2}));
  std::size_t exact = 0;
  double lowest = 1.0;
  std::string worst;
  for (const auto& e : r.entries) {
    exact += e.cosine == 1.0;
    if (e.cosine < lowest) lowest = e.cosine, worst = e.layer;
  }
  o.require(exact == r.entries.size(), fmt("%zu of %zu layers exactly 1; lowest %.17g at %s", exact, r.entries.size(),
                                           lowest, worst.c_str()));
  o.summary = fmt("constant input, first step, Pooled(2,2): %zu/%zu layers with cosine exactly 1", exact,
                  r.entries.size());
  return o;
}

// ---------------------------------------------------------- five points (7)

Outcome five_points() {
  Outcome o;
  for (const std::optional<PoolKernel> k : {std::optional<PoolKernel>{}, std::optional<PoolKernel>{PoolKernel{2, 2}}}) {
    RunConfig cfg;
    cfg.arch = "resnet8c";
    cfg.train.batch_size = 64;
    cfg.train.momentum = 0.9;
    cfg.kernel = k;
    const std::string tag = k ? k->str() : "off";
    const fs::path dir = scratch("points-" + tag);
    const auto r = run_characterize<float>(cfg, dir, default_devices());
    std::istringstream points(slurp(dir / "points.csv"));
    std::string line;
    std::vector<std::string> names;
    std::getline(points, line);
    while (std::getline(points, line) && line[0] != '#') names.push_back(line.substr(0, line.find(',')));
    o.require(names == std::vector<std::string>{"model_init", "input_init", "forward_peak", "after_backward",
                                                "optimizer_peak"},
              "compression " + tag + ": points.csv lists the five points in order");
    const auto& p = r.points;
    o.require(p.forward_peak.total >= p.after_backward.total,
              fmt("compression %s: forward_peak %llu >= after_backward %llu", tag.c_str(),
                  static_cast<unsigned long long>(p.forward_peak.total),
                  static_cast<unsigned long long>(p.after_backward.total)));
    o.require(p.optimizer_peak.total > p.after_backward.total,
              fmt("compression %s: optimizer_peak %llu > after_backward %llu (momentum 0.9)", tag.c_str(),
                  static_cast<unsigned long long>(p.optimizer_peak.total),
                  static_cast<unsigned long long>(p.after_backward.total)));
    std::size_t match = 0;
    for (const auto& l : r.layers) match += static_cast<std::int64_t>(l.static_bytes) == l.ledger_bytes;
    o.require(match == r.layers.size(),
              fmt("compression %s: static == ledger saved bytes for %zu/%zu conv layers", tag.c_str(), match,
                  r.layers.size()));
  }
  o.summary = "five-point protocol on ResNet-8, Full and Pooled(2,2)";
  return o;
}

// ----------------------------------------------------------- determinism (8)

Outcome determinism() {
  Outcome o;
  RunConfig cfg = small_run(2);
  cfg.kernel = PoolKernel{2, 2};
  cfg.train.augment = true;
  cfg.train.seed = 7;
  const fs::path a = scratch("det-a"), b = scratch("det-b");
  run_train<float>(cfg, a);
  run_train<float>(cfg, b);
  for (const char* f : {"metrics.csv", "checkpoint_final.cabp", "ledger.csv", "effective_config"}) {
    const std::string x = slurp(a / f), y = slurp(b / f);
    o.require(!x.empty() && x == y, fmt("%s byte-identical (%zu bytes)", f, x.size()));
  }
  o.summary = "repeated training runs with identical config and seed";
  return o;
}

// ------------------------------------------------------------------- driver

struct Criterion {
  const char* id;
  const char* title;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all = {
      {"1", "memory table regression", reference_xz},
      {"1w", "memory table W column", reference_w},
      {"2", "gradient correctness", gradients},
      {"3", "compression contract", contract},
      {"4", "memory reduction", memory_reduction},
      {"5", "loss offset", loss_offset},
      {"6", "sensitivity properties", sensitivity},
      {"6c", "sensitivity under constant input", sensitivity_constant},
      {"6e", "one-epoch downsample resilience", sensitivity_epoch},
      {"7", "five-point protocol", five_points},
      {"8", "determinism", determinism},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> wanted(argv + 1, argv + argc);
  if (wanted.empty()) {
    std::cerr << "usage: cabp-acceptance <id>... | all\n  ids:";
    for (const auto& c : criteria()) std::cerr << ' ' << c.id;
    std::cerr << '\n';
    return 2;
  }
  if (wanted == std::vector<std::string>{"all"}) {
    wanted.clear();
    for (const auto& c : criteria()) wanted.push_back(c.id);
  }
  bool all_pass = true;
  for (const auto& id : wanted) {
    const auto it = std::find_if(criteria().begin(), criteria().end(), [&](const Criterion& c) { return c.id == id; });
    if (it == criteria().end()) {
      std::cerr << "unknown criterion " << id << '\n';
      return 2;
    }
    Outcome r;
    try {
      r = it->run();
    } catch (const std::exception& e) {
      r.pass = false;
      r.summary = std::string("threw: ") + e.what();
    }
    for (const auto& d : r.details) std::cout << "  [" << id << "] " << d << '\n';
    std::cout << (r.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << it->title << "): " << r.summary
              << std::endl;
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}
