#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cabp/error.hpp"

namespace cabp {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <class T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() {
  return DType::f32;
}
template <>
constexpr DType dtype_of<double>() {
  return DType::f64;
}

constexpr std::size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 8; }

/// What a buffer is used for. Every tensor carries exactly one tag; the
/// memory ledger aggregates byte counts per tag.
enum class AllocCategory : std::uint8_t {
  Parameter,
  Activation,
  Gradient,
  OptimizerState,
  Input,
  Scratch,
};

inline constexpr std::size_t kAllocCategoryCount = 6;

inline constexpr std::string_view to_string(AllocCategory c) {
  switch (c) {
    case AllocCategory::Parameter: return "Parameter";
    case AllocCategory::Activation: return "Activation";
    case AllocCategory::Gradient: return "Gradient";
    case AllocCategory::OptimizerState: return "OptimizerState";
    case AllocCategory::Input: return "Input";
    case AllocCategory::Scratch: return "Scratch";
  }
  return "?";
}

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

/// Dense row-major tensor. 4-D activations are NCHW.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, AllocCategory category = AllocCategory::Scratch)
      : shape_(std::move(shape)), data_(shape_numel(shape_), T{0}), category_(category) {}

  Tensor(Shape shape, std::vector<T> data, AllocCategory category = AllocCategory::Scratch)
      : shape_(std::move(shape)), data_(std::move(data)), category_(category) {
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("tensor data has " + std::to_string(data_.size()) + " elements, shape " +
                       shape_str(shape_) + " needs " + std::to_string(shape_numel(shape_)));
    }
  }

  static Tensor full(Shape shape, T value, AllocCategory category = AllocCategory::Scratch) {
    Tensor t(std::move(shape), category);
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  /// Same shape and values under a different category tag.
  Tensor retagged(AllocCategory category) const { return Tensor(shape_, data_, category); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const noexcept { return data_.size(); }
  std::size_t bytes() const noexcept { return data_.size() * sizeof(T); }
  bool empty() const noexcept { return data_.empty() && shape_.empty(); }
  AllocCategory category() const noexcept { return category_; }
  static constexpr DType dtype() { return dtype_of<T>(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  /// Reinterprets the buffer under a new shape with the same element count.
  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != numel()) {
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_, category_);
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
  AllocCategory category_ = AllocCategory::Scratch;
};

template <class To, class From>
Tensor<To> cast(const Tensor<From>& t) {
  std::vector<To> out(t.numel());
  std::transform(t.data().begin(), t.data().end(), out.begin(),
                 [](From v) { return static_cast<To>(v); });
  return Tensor<To>(t.shape(), std::move(out), t.category());
}

inline void require_same_shape(const Shape& a, const Shape& b, std::string_view what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

}  // namespace cabp
