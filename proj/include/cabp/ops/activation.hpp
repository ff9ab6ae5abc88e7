#pragma once

#include <cstdint>
#include <vector>

#include "cabp/tensor.hpp"

namespace cabp {

/// One bit per element: set where the ReLU output is positive.
struct ReluMask {
  std::vector<std::uint64_t> bits;
  std::size_t size = 0;

  bool test(std::size_t i) const { return (bits[i >> 6] >> (i & 63)) & 1u; }
  std::size_t bytes() const { return bits.size() * sizeof(std::uint64_t); }
};

/// NaN inputs pass through so divergence reaches the loss.
template <class T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape(), AllocCategory::Activation);
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] < T{0} ? T{0} : x[i];
  return y;
}

template <class T>
ReluMask relu_mask(const Tensor<T>& y) {
  ReluMask m{std::vector<std::uint64_t>((y.numel() + 63) / 64, 0), y.numel()};
  for (std::size_t i = 0; i < y.numel(); ++i) {
    if (y[i] > T{0}) m.bits[i >> 6] |= std::uint64_t{1} << (i & 63);
  }
  return m;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& dy, const ReluMask& mask) {
  if (dy.numel() != mask.size) throw ShapeError("relu_backward: mask size mismatch");
  Tensor<T> dx(dy.shape());
  for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] = mask.test(i) ? dy[i] : T{0};
  return dx;
}

}  // namespace cabp
