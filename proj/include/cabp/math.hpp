#pragma once

// Elementwise and reduction primitives. Reductions accumulate sequentially in
// index order so results are reproducible bit for bit.

#include <cmath>
#include <limits>
#include <optional>

#include "cabp/tensor.hpp"

namespace cabp {

namespace detail {

// Trailing elements of `big` that `small` repeats over, or nullopt when the
// shapes are not compatible. Only leading singleton (or missing) dimensions of
// the smaller operand broadcast.
inline std::optional<std::size_t> broadcast_block(const Shape& big, const Shape& small) {
  if (small.size() > big.size()) return std::nullopt;
  const std::size_t offset = big.size() - small.size();
  std::size_t lead = 0;
  while (lead < small.size() && small[lead] == 1) ++lead;
  for (std::size_t i = lead; i < small.size(); ++i) {
    if (small[i] != big[offset + i]) return std::nullopt;
  }
  std::size_t block = 1;
  for (std::size_t i = lead; i < small.size(); ++i) block *= small[i];
  return block;
}

template <class T, class Op>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, Op op, std::string_view what) {
  if (a.shape() == b.shape()) {
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = op(a[i], b[i]);
    return out;
  }
  if (a.numel() >= b.numel()) {
    if (auto block = broadcast_block(a.shape(), b.shape())) {
      Tensor<T> out(a.shape());
      for (std::size_t i = 0; i < a.numel(); ++i) out[i] = op(a[i], b[i % *block]);
      return out;
    }
  } else if (auto block = broadcast_block(b.shape(), a.shape())) {
    Tensor<T> out(b.shape());
    for (std::size_t i = 0; i < b.numel(); ++i) out[i] = op(a[i % *block], b[i]);
    return out;
  }
  throw ShapeError(std::string(what) + ": shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()) + " do not broadcast");
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(a, b, [](T x, T y) { return x + y; }, "add");
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(a, b, [](T x, T y) { return x - y; }, "sub");
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(a, b, [](T x, T y) { return x * y; }, "mul");
}

/// 1 where a > b, else 0.
template <class T>
Tensor<T> greater(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(a, b, [](T x, T y) { return x > y ? T{1} : T{0}; }, "greater");
}

/// 1 where a == b, else 0.
template <class T>
Tensor<T> equal(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(a, b, [](T x, T y) { return x == y ? T{1} : T{0}; }, "equal");
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * s;
  return out;
}

/// In-place a += b for equal shapes.
template <class T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add_inplace");
  T* pa = a.ptr();
  const T* pb = b.ptr();
  for (std::size_t i = 0; i < a.numel(); ++i) pa[i] += pb[i];
}

template <class T>
T sum(const Tensor<T>& a) {
  T acc{0};
  for (T v : a.data()) acc += v;
  return acc;
}

namespace detail {

template <class T, class Reduce>
Tensor<T> reduce_axis(const Tensor<T>& a, std::size_t axis, T init, Reduce reduce,
                      std::string_view what) {
  if (axis >= a.rank()) {
    throw ShapeError(std::string(what) + ": axis " + std::to_string(axis) + " out of range for " +
                     shape_str(a.shape()));
  }
  if (a.dim(axis) == 0) throw ShapeError(std::string(what) + ": zero-size reduction");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const std::size_t len = a.dim(axis);
  Shape out_shape;
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (i != axis) out_shape.push_back(a.dim(i));
  }
  Tensor<T> out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      T acc = init;
      for (std::size_t k = 0; k < len; ++k) acc = reduce(acc, a[(o * len + k) * inner + i]);
      out[o * inner + i] = acc;
    }
  }
  return out;
}

}  // namespace detail

template <class T>
Tensor<T> sum(const Tensor<T>& a, std::size_t axis) {
  return detail::reduce_axis(a, axis, T{0}, [](T acc, T v) { return acc + v; }, "sum");
}

template <class T>
Tensor<T> max(const Tensor<T>& a, std::size_t axis) {
  return detail::reduce_axis(
      a, axis, -std::numeric_limits<T>::infinity(), [](T acc, T v) { return v > acc ? v : acc; },
      "max");
}

template <class T>
T dot(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  T acc{0};
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

template <class T>
bool all_finite(const Tensor<T>& a) {
  for (T v : a.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace cabp
