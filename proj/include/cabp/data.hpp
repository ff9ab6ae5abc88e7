#pragma once

// Dataset loading (CIFAR-10 binary, MNIST IDX), seeded synthetic datasets,
// and mini-batch assembly with per-channel normalization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "cabp/error.hpp"
#include "cabp/tensor.hpp"

namespace cabp {

/// Unsigned-byte images stored NCHW with one label per sample.
struct Dataset {
  std::size_t channels = 0, height = 0, width = 0, classes = 0;
  std::vector<std::uint8_t> pixels;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_size() const { return channels * height * width; }
  const std::uint8_t* image(std::size_t i) const { return pixels.data() + i * sample_size(); }

  void append(const Dataset& other) {
    if (other.channels != channels || other.height != height || other.width != width) {
      throw FormatError("dataset: cannot append images of a different shape");
    }
    pixels.insert(pixels.end(), other.pixels.begin(), other.pixels.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
    classes = std::max(classes, other.classes);
  }

  /// First n samples (all when n is 0 or exceeds the size).
  Dataset head(std::size_t n) const {
    if (n == 0 || n >= size()) return *this;
    Dataset d{channels, height, width, classes, {}, {}};
    d.pixels.assign(pixels.begin(), pixels.begin() + static_cast<std::ptrdiff_t>(n * sample_size()));
    d.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
    return d;
  }

  bool operator==(const Dataset&) const = default;
};

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

}  // namespace detail

inline constexpr std::size_t kCifarRecord = 1 + 3 * 32 * 32;

inline Dataset parse_cifar10(const std::vector<std::uint8_t>& bytes, const std::string& what = "cifar10") {
  if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
    throw FormatError(what + ": size " + std::to_string(bytes.size()) + " is not a multiple of " +
                      std::to_string(kCifarRecord) + "-byte records");
  }
  const std::size_t n = bytes.size() / kCifarRecord;
  Dataset d{3, 32, 32, 10, {}, {}};
  d.pixels.reserve(n * (kCifarRecord - 1));
  d.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = bytes.data() + i * kCifarRecord;
    if (rec[0] >= 10) throw FormatError(what + ": label " + std::to_string(rec[0]) + " in record " + std::to_string(i));
    d.labels.push_back(rec[0]);
    d.pixels.insert(d.pixels.end(), rec + 1, rec + kCifarRecord);
  }
  return d;
}

inline Dataset load_cifar10_file(const std::filesystem::path& path) {
  return parse_cifar10(detail::read_file(path), path.string());
}

/// A directory loads data_batch_1..5.bin (training) or test_batch.bin, in
/// that order; a file path loads that file.
inline Dataset load_cifar10(const std::filesystem::path& path, bool train = true) {
  if (!std::filesystem::is_directory(path)) return load_cifar10_file(path);
  std::vector<std::filesystem::path> files;
  if (train) {
    for (int i = 1; i <= 5; ++i) {
      auto f = path / ("data_batch_" + std::to_string(i) + ".bin");
      if (std::filesystem::exists(f)) files.push_back(f);
    }
  } else if (std::filesystem::exists(path / "test_batch.bin")) {
    files.push_back(path / "test_batch.bin");
  }
  if (files.empty()) throw FormatError("cifar10: no batch files under " + path.string());
  Dataset d = load_cifar10_file(files[0]);
  for (std::size_t i = 1; i < files.size(); ++i) d.append(load_cifar10_file(files[i]));
  return d;
}

inline void write_cifar10(const std::filesystem::path& path, const Dataset& d) {
  if (d.channels != 3 || d.height != 32 || d.width != 32) {
    throw FormatError("cifar10: can only write 3x32x32 images");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  for (std::size_t i = 0; i < d.size(); ++i) {
    out.put(static_cast<char>(d.labels[i]));
    out.write(reinterpret_cast<const char*>(d.image(i)), static_cast<std::streamsize>(d.sample_size()));
  }
}

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

inline Dataset parse_mnist(const std::vector<std::uint8_t>& images, const std::vector<std::uint8_t>& labels) {
  if (images.size() < 16 || detail::read_be32(images, 0) != kIdxImagesMagic) {
    throw FormatError("mnist: bad image file magic");
  }
  if (labels.size() < 8 || detail::read_be32(labels, 0) != kIdxLabelsMagic) {
    throw FormatError("mnist: bad label file magic");
  }
  const std::size_t n = detail::read_be32(images, 4);
  const std::size_t rows = detail::read_be32(images, 8);
  const std::size_t cols = detail::read_be32(images, 12);
  if (images.size() != 16 + n * rows * cols) throw FormatError("mnist: image payload size mismatch");
  if (detail::read_be32(labels, 4) != n || labels.size() != 8 + n) {
    throw FormatError("mnist: label count disagrees with image count");
  }
  Dataset d{1, rows, cols, 10, {images.begin() + 16, images.end()}, {labels.begin() + 8, labels.end()}};
  for (auto l : d.labels) {
    if (l >= 10) throw FormatError("mnist: label " + std::to_string(l) + " out of range");
  }
  return d;
}

inline Dataset load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels) {
  return parse_mnist(detail::read_file(images), detail::read_file(labels));
}

/// Seeded Gaussian pixels (mean 128, sd 64, clipped) with uniform random labels.
inline Dataset synthetic_gaussian(std::size_t n, std::size_t c, std::size_t h, std::size_t w,
                                  std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> px(128.0, 64.0);
  std::uniform_int_distribution<int> lab(0, static_cast<int>(classes) - 1);
  Dataset d{c, h, w, classes, std::vector<std::uint8_t>(n * c * h * w), std::vector<std::uint8_t>(n)};
  for (auto& p : d.pixels) p = static_cast<std::uint8_t>(std::clamp(std::lround(px(rng)), 0L, 255L));
  for (auto& l : d.labels) l = static_cast<std::uint8_t>(lab(rng));
  return d;
}

/// Learnable class-conditional images. Each class owns a smooth colour
/// field and an oriented grating, both fixed by `seed`; samples drawn from
/// `stream` randomize grating phase, field offset, contrast, and pixel noise.
inline Dataset synthetic_patterns(std::size_t n, std::size_t c, std::size_t h, std::size_t w,
                                  std::size_t classes, std::uint64_t seed, std::uint64_t stream = 0) {
  constexpr double kPi = std::numbers::pi;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  struct ClassPattern {
    std::vector<double> base, gx, gy;  // per channel
    double angle, freq;
    std::vector<double> tint;
  };
  std::vector<ClassPattern> pats(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    auto& p = pats[k];
    for (std::size_t ch = 0; ch < c; ++ch) {
      p.base.push_back(60 + 120 * uni(rng));
      p.gx.push_back(40 * (uni(rng) - 0.5));
      p.gy.push_back(40 * (uni(rng) - 0.5));
      p.tint.push_back(0.5 + uni(rng));
    }
    p.angle = kPi * (static_cast<double>(k) + 0.3 * uni(rng)) / static_cast<double>(classes);
    p.freq = 2 * kPi / (3.0 + 3.0 * uni(rng));
  }
  rng.seed(seed ^ ((stream + 1) * 0x9E3779B97F4A7C15ULL));
  std::normal_distribution<double> noise(0.0, 24.0);
  std::uniform_int_distribution<int> lab(0, static_cast<int>(classes) - 1);
  Dataset d{c, h, w, classes, std::vector<std::uint8_t>(n * c * h * w), std::vector<std::uint8_t>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<std::size_t>(lab(rng));
    d.labels[i] = static_cast<std::uint8_t>(label);
    const auto& p = pats[label];
    const double phase = 2 * kPi * uni(rng);
    const double contrast = 25 + 35 * uni(rng);
    const double ox = uni(rng) - 0.5, oy = uni(rng) - 0.5;
    const double ca = std::cos(p.angle), sa = std::sin(p.angle);
    std::uint8_t* img = d.pixels.data() + i * d.sample_size();
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double u = static_cast<double>(x) / static_cast<double>(w) - 0.5 + ox;
          const double v = static_cast<double>(y) / static_cast<double>(h) - 0.5 + oy;
          const double grating = std::sin(p.freq * (ca * static_cast<double>(x) + sa * static_cast<double>(y)) + phase);
          const double val = p.base[ch] + p.gx[ch] * u + p.gy[ch] * v + contrast * p.tint[ch] * grating + noise(rng);
          img[(ch * h + y) * w + x] = static_cast<std::uint8_t>(std::clamp(std::lround(val), 0L, 255L));
        }
  }
  return d;
}

/// Per-channel (pixel - mean) / std applied after scaling pixels to [0, 255].
struct Normalization {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Normalization cifar10() { return {{125.3, 123.0, 113.9}, {63.0, 62.1, 66.7}}; }
  static Normalization mnist() { return {{33.3}, {78.6}}; }
  static Normalization identity(std::size_t channels) {
    return {std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
  }
};

/// Sample order for one epoch: on-disk order when fixed, else a shuffle
/// seeded by (seed, epoch).
inline std::vector<std::size_t> epoch_order(std::size_t n, bool fixed_order, std::uint64_t seed,
                                            std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (!fixed_order) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + epoch + 1);
    std::shuffle(order.begin(), order.end(), rng);
  }
  return order;
}

template <class T>
struct Batch {
  Tensor<T> images;
  std::vector<std::size_t> labels;
};

/// Assembles samples `indices` into an NCHW Input tensor. With `augment`,
/// each image gets a random 4-pixel-padded crop and a random horizontal flip.
template <class T>
Batch<T> make_batch(const Dataset& d, const std::vector<std::size_t>& indices, const Normalization& norm,
                    std::mt19937_64* augment = nullptr) {
  const std::size_t C = d.channels, H = d.height, W = d.width;
  if (norm.mean.size() != C || norm.stddev.size() != C) {
    throw ConfigError("normalization has " + std::to_string(norm.mean.size()) + " channels, data has " +
                      std::to_string(C));
  }
  Batch<T> b{Tensor<T>({indices.size(), C, H, W}, AllocCategory::Input), {}};
  b.labels.reserve(indices.size());
  T* out = b.images.ptr();
  constexpr long kPad = 4;
  for (std::size_t n = 0; n < indices.size(); ++n) {
    const std::uint8_t* img = d.image(indices[n]);
    b.labels.push_back(d.labels[indices[n]]);
    long dy = 0, dx = 0;
    bool flip = false;
    if (augment) {
      std::uniform_int_distribution<long> shift(-kPad, kPad);
      dy = shift(*augment);
      dx = shift(*augment);
      flip = std::uniform_int_distribution<int>(0, 1)(*augment) == 1;
    }
    for (std::size_t c = 0; c < C; ++c) {
      const double m = norm.mean[c], s = norm.stddev[c];
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const long sy = static_cast<long>(y) + dy;
          const long sxu = static_cast<long>(flip ? W - 1 - x : x) + dx;
          double v = 0.0;
          if (sy >= 0 && sy < static_cast<long>(H) && sxu >= 0 && sxu < static_cast<long>(W)) {
            v = img[(c * H + static_cast<std::size_t>(sy)) * W + static_cast<std::size_t>(sxu)];
          } else {
            v = m;  // padding normalizes to zero
          }
          *out++ = static_cast<T>((v - m) / s);
        }
    }
  }
  return b;
}

}  // namespace cabp
