#pragma once

// Binary checkpoint container. Layout (all integers little-endian):
//   "CABP" | u32 version | u32 count
//   per tensor: u16 name length | name | u8 rank | u32 dims[rank] | u8 dtype | raw data

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cabp/error.hpp"
#include "cabp/tensor.hpp"

namespace cabp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  DType dtype = DType::f32;
  std::vector<std::uint8_t> raw;  // little-endian element bytes

  template <class T>
  Tensor<T> as() const {
    if (dtype != dtype_of<T>()) throw FormatError("checkpoint: tensor " + name + " has a different dtype");
    Tensor<T> t(shape);
    if (raw.size() != t.bytes()) throw FormatError("checkpoint: tensor " + name + " size mismatch");
    for (std::size_t i = 0; i < t.numel(); ++i) {
      using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
      U u = 0;
      for (std::size_t b = 0; b < sizeof(T); ++b) u |= U{raw[i * sizeof(T) + b]} << (8 * b);
      t[i] = std::bit_cast<T>(u);
    }
    return t;
  }
};

namespace detail {

inline void put_le(std::string& out, std::uint64_t v, std::size_t bytes) {
  for (std::size_t b = 0; b < bytes; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& s) : s_(s) {}
  std::uint64_t le(std::size_t bytes) {
    need(bytes);
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < bytes; ++b) v |= std::uint64_t{static_cast<std::uint8_t>(s_[pos_ + b])} << (8 * b);
    pos_ += bytes;
    return v;
  }
  std::string take(std::size_t n) {
    need(n);
    std::string r = s_.substr(pos_, n);
    pos_ += n;
    return r;
  }
  bool done() const { return pos_ == s_.size(); }

 private:
  void need(std::size_t n) const {
    if (s_.size() - pos_ < n) throw FormatError("checkpoint: truncated file");
  }
  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

template <class T>
std::string encode_checkpoint(const std::vector<std::pair<std::string, const Tensor<T>*>>& tensors) {
  std::string out = "CABP";
  detail::put_le(out, kCheckpointVersion, 4);
  detail::put_le(out, tensors.size(), 4);
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xFFFF) throw FormatError("checkpoint: name too long: " + name);
    if (t->rank() > 0xFF) throw FormatError("checkpoint: rank too large for " + name);
    detail::put_le(out, name.size(), 2);
    out += name;
    detail::put_le(out, t->rank(), 1);
    for (auto d : t->shape()) {
      if (d > 0xFFFFFFFFu) throw FormatError("checkpoint: dimension too large for " + name);
      detail::put_le(out, d, 4);
    }
    detail::put_le(out, static_cast<std::uint8_t>(dtype_of<T>()), 1);
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    for (T v : t->data()) detail::put_le(out, std::bit_cast<U>(v), sizeof(T));
  }
  return out;
}

inline std::vector<CheckpointEntry> decode_checkpoint(const std::string& bytes) {
  detail::Reader r(bytes);
  if (r.take(4) != "CABP") throw FormatError("checkpoint: bad magic");
  const auto version = r.le(4);
  if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = r.le(4);
  std::vector<CheckpointEntry> entries;
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = r.take(r.le(2));
    const auto rank = r.le(1);
    for (std::uint64_t d = 0; d < rank; ++d) e.shape.push_back(r.le(4));
    const auto code = r.le(1);
    if (code > 1) throw FormatError("checkpoint: unknown dtype code " + std::to_string(code));
    e.dtype = static_cast<DType>(code);
    const std::string data = r.take(shape_numel(e.shape) * dtype_size(e.dtype));
    e.raw.assign(data.begin(), data.end());
    entries.push_back(std::move(e));
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes");
  return entries;
}

template <class T>
void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, const Tensor<T>*>>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  const std::string bytes = encode_checkpoint(tensors);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<CheckpointEntry> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

/// Copies every entry into the tensor of the same name; names and shapes must match.
template <class T>
void restore_checkpoint(const std::vector<CheckpointEntry>& entries,
                        const std::vector<std::pair<std::string, Tensor<T>*>>& targets) {
  if (entries.size() != targets.size()) throw FormatError("checkpoint: tensor count mismatch");
  for (const auto& [name, t] : targets) {
    auto it = std::find_if(entries.begin(), entries.end(), [&](const auto& e) { return e.name == name; });
    if (it == entries.end()) throw FormatError("checkpoint: missing tensor " + name);
    if (it->shape != t->shape()) throw FormatError("checkpoint: shape mismatch for " + name);
    const Tensor<T> loaded = it->template as<T>();
    std::copy(loaded.data().begin(), loaded.data().end(), t->data().begin());
  }
}

}  // namespace cabp
