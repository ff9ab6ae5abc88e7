#pragma once

// Average-pooled storage of activation maps for the backward pass.
//
// compress() keeps the mean of every non-overlapping kh x kw block. The pooled
// grid is floor(H/kh) x floor(W/kw); remainder rows/columns are dropped.
// inflate() replicates each mean back over its block, and fills dropped
// remainder rows/columns from the nearest block (index clamping).

#include <algorithm>
#include <string>

#include "cabp/tensor.hpp"

namespace cabp {

struct PoolKernel {
  std::size_t kh = 1;
  std::size_t kw = 1;

  bool is_identity() const { return kh == 1 && kw == 1; }
  std::string str() const { return std::to_string(kh) + "x" + std::to_string(kw); }
  friend bool operator==(const PoolKernel&, const PoolKernel&) = default;
};

template <class T>
struct CompressedActivation {
  Tensor<T> z;           // (N, C, floor(H/kh), floor(W/kw)) block means
  Shape original_shape;  // (N, C, H, W)
  PoolKernel k;
};

/// Pooled output shape for an NCHW input; throws when the block grid is empty.
inline Shape pooled_shape(const Shape& x, PoolKernel k) {
  if (x.size() != 4) throw ShapeError("compress: expected NCHW input, got " + shape_str(x));
  if (k.kh < 1 || k.kw < 1) throw ShapeError("compress: kernel components must be >= 1");
  if (x[2] < k.kh || x[3] < k.kw) {
    throw ShapeError("compress: spatial size " + std::to_string(x[2]) + "x" + std::to_string(x[3]) +
                     " smaller than kernel " + k.str());
  }
  return {x[0], x[1], x[2] / k.kh, x[3] / k.kw};
}

template <class T>
CompressedActivation<T> compress(const Tensor<T>& x, PoolKernel k) {
  const Shape zs = pooled_shape(x.shape(), k);
  Tensor<T> z(zs, AllocCategory::Activation);
  const std::size_t H = x.dim(2), W = x.dim(3);
  const std::size_t zh = zs[2], zw = zs[3];
  const double count = static_cast<double>(k.kh * k.kw);
  for (std::size_t nc = 0; nc < zs[0] * zs[1]; ++nc) {
    const T* plane = x.ptr() + nc * H * W;
    T* out = z.ptr() + nc * zh * zw;
    for (std::size_t i = 0; i < zh; ++i) {
      for (std::size_t j = 0; j < zw; ++j) {
        // Offsets from the first element, so a constant block yields exactly
        // that constant. The clamp keeps rounding inside the block's range.
        const T first = plane[(i * k.kh) * W + j * k.kw];
        T lo = first, hi = first;
        double offset = 0.0;
        for (std::size_t a = 0; a < k.kh; ++a) {
          const T* row = plane + (i * k.kh + a) * W + j * k.kw;
          for (std::size_t b = 0; b < k.kw; ++b) {
            offset += static_cast<double>(row[b]) - static_cast<double>(first);
            lo = std::min(lo, row[b]);
            hi = std::max(hi, row[b]);
          }
        }
        const T mean = static_cast<T>(static_cast<double>(first) + offset / count);
        out[i * zw + j] = std::clamp(mean, lo, hi);
      }
    }
  }
  return {std::move(z), x.shape(), k};
}

template <class T>
Tensor<T> inflate(const CompressedActivation<T>& c) {
  const Shape& s = c.original_shape;
  Tensor<T> x(s, AllocCategory::Scratch);
  const std::size_t H = s[2], W = s[3];
  const std::size_t zh = c.z.dim(2), zw = c.z.dim(3);
  std::vector<std::size_t> col_src(W);
  for (std::size_t w = 0; w < W; ++w) col_src[w] = std::min(w / c.k.kw, zw - 1);
  for (std::size_t nc = 0; nc < s[0] * s[1]; ++nc) {
    const T* zp = c.z.ptr() + nc * zh * zw;
    T* out = x.ptr() + nc * H * W;
    for (std::size_t h = 0; h < H; ++h) {
      const T* zrow = zp + std::min(h / c.k.kh, zh - 1) * zw;
      for (std::size_t w = 0; w < W; ++w) out[h * W + w] = zrow[col_src[w]];
    }
  }
  return x;
}

template <class T>
std::size_t compressed_bytes(const CompressedActivation<T>& c) {
  return c.z.bytes();
}

/// Bytes of a pooled payload for an input of the given shape, without building it.
inline std::size_t compressed_bytes(const Shape& x, PoolKernel k, std::size_t element_size) {
  return shape_numel(pooled_shape(x, k)) * element_size;
}

}  // namespace cabp
