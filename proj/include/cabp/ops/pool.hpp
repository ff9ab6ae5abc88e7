#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "cabp/tensor.hpp"

namespace cabp {

struct MaxPool2dSpec {
  std::size_t k = 3;
  std::size_t stride = 2;
  std::size_t pad = 1;

  std::size_t out_dim(std::size_t in) const {
    if (in + 2 * pad < k) throw ShapeError("maxpool2d: non-positive output size");
    return (in + 2 * pad - k) / stride + 1;
  }
};

/// Argmax positions, stored as the flat index within the (n, c) input plane.
struct MaxPoolIndices {
  std::vector<std::uint32_t> index;
  Shape input_shape;

  std::size_t bytes() const { return index.size() * sizeof(std::uint32_t); }
};

template <class T>
struct MaxPoolForward {
  Tensor<T> y;
  MaxPoolIndices indices;
};

/// Padding counts as -inf; ties resolve to the first maximum in scan order.
template <class T>
MaxPoolForward<T> maxpool2d_forward(const Tensor<T>& x, const MaxPool2dSpec& s) {
  if (x.rank() != 4) throw ShapeError("maxpool2d: expected NCHW input");
  const std::size_t NC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Ho = s.out_dim(H), Wo = s.out_dim(W);
  MaxPoolForward<T> out{Tensor<T>({x.dim(0), x.dim(1), Ho, Wo}, AllocCategory::Activation),
                        {std::vector<std::uint32_t>(NC * Ho * Wo), x.shape()}};
  for (std::size_t p = 0; p < NC; ++p) {
    const T* plane = x.ptr() + p * H * W;
    for (std::size_t oh = 0; oh < Ho; ++oh) {
      for (std::size_t ow = 0; ow < Wo; ++ow) {
        T best = -std::numeric_limits<T>::infinity();
        std::uint32_t arg = 0;
        bool found = false;
        for (std::size_t i = 0; i < s.k; ++i) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * s.stride + i) - static_cast<std::ptrdiff_t>(s.pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t j = 0; j < s.k; ++j) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * s.stride + j) - static_cast<std::ptrdiff_t>(s.pad);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
            const T v = plane[ih * W + iw];
            if (!found || v > best) {
              best = v;
              arg = static_cast<std::uint32_t>(ih * W + iw);
              found = true;
            }
          }
        }
        const std::size_t o = (p * Ho + oh) * Wo + ow;
        out.y[o] = best;
        out.indices.index[o] = arg;
      }
    }
  }
  return out;
}

template <class T>
Tensor<T> maxpool2d_backward(const Tensor<T>& dy, const MaxPoolIndices& idx) {
  if (dy.numel() != idx.index.size()) throw ShapeError("maxpool2d_backward: gradient size mismatch");
  const Shape& xs = idx.input_shape;
  Tensor<T> dx(xs);
  const std::size_t plane = xs[2] * xs[3];
  const std::size_t per_plane = dy.dim(2) * dy.dim(3);
  for (std::size_t o = 0; o < dy.numel(); ++o) {
    dx[(o / per_plane) * plane + idx.index[o]] += dy[o];
  }
  return dx;
}

/// (N, C, H, W) -> (N, C) spatial mean.
template <class T>
Tensor<T> global_avgpool_forward(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("global_avgpool: expected NCHW input");
  const std::size_t NC = x.dim(0) * x.dim(1), P = x.dim(2) * x.dim(3);
  if (P == 0) throw ShapeError("global_avgpool: zero-size reduction");
  Tensor<T> y({x.dim(0), x.dim(1)}, AllocCategory::Activation);
  for (std::size_t p = 0; p < NC; ++p) {
    T acc{0};
    const T* src = x.ptr() + p * P;
    for (std::size_t i = 0; i < P; ++i) acc += src[i];
    y[p] = acc / static_cast<T>(P);
  }
  return y;
}

template <class T>
Tensor<T> global_avgpool_backward(const Tensor<T>& dy, const Shape& input_shape) {
  if (dy.numel() != input_shape[0] * input_shape[1]) {
    throw ShapeError("global_avgpool_backward: gradient size mismatch");
  }
  const std::size_t P = input_shape[2] * input_shape[3];
  Tensor<T> dx(input_shape);
  for (std::size_t p = 0; p < dy.numel(); ++p) {
    const T g = dy[p] / static_cast<T>(P);
    std::fill(dx.ptr() + p * P, dx.ptr() + (p + 1) * P, g);
  }
  return dx;
}

}  // namespace cabp
