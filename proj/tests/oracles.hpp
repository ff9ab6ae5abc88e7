#pragma once

// Independent reference implementations used as test oracles. They share no
// code with the library kernels beyond the Tensor container.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "cabp/cabp.hpp"

namespace oracle {

using cabp::Conv2dSpec;
using cabp::Shape;
using cabp::Tensor;

/// Direct 7-deep loop cross-correlation. Accumulation starts at the bias and
/// walks (c, i, j) ascending.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b, const Conv2dSpec& s) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Ho = (H + 2 * s.ph - s.kh) / s.sh + 1, Wo = (W + 2 * s.pw - s.kw) / s.sw + 1;
  Tensor<T> y({N, s.out_channels, Ho, Wo});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < s.out_channels; ++o)
      for (std::size_t oh = 0; oh < Ho; ++oh)
        for (std::size_t ow = 0; ow < Wo; ++ow) {
          T acc = b ? (*b)[o] : T{0};
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < s.kh; ++i)
              for (std::size_t j = 0; j < s.kw; ++j) {
                const long ih = static_cast<long>(oh * s.sh + i) - static_cast<long>(s.ph);
                const long iw = static_cast<long>(ow * s.sw + j) - static_cast<long>(s.pw);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(H) || iw >= static_cast<long>(W)) continue;
                acc += w[((o * C + c) * s.kh + i) * s.kw + j] *
                       x[((n * C + c) * H + static_cast<std::size_t>(ih)) * W + static_cast<std::size_t>(iw)];
              }
          y[((n * s.out_channels + o) * Ho + oh) * Wo + ow] = acc;
        }
  return y;
}

/// dW[o,c,i,j] = sum over (n, oh, ow), ascending, of dY[n,o,oh,ow] * X[n,c,ih,iw].
template <class T>
Tensor<T> conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& dy, const Conv2dSpec& s) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Ho = dy.dim(2), Wo = dy.dim(3);
  Tensor<T> dw({s.out_channels, C, s.kh, s.kw});
  for (std::size_t o = 0; o < s.out_channels; ++o)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < s.kh; ++i)
        for (std::size_t j = 0; j < s.kw; ++j) {
          T acc{0};
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t oh = 0; oh < Ho; ++oh)
              for (std::size_t ow = 0; ow < Wo; ++ow) {
                const long ih = static_cast<long>(oh * s.sh + i) - static_cast<long>(s.ph);
                const long iw = static_cast<long>(ow * s.sw + j) - static_cast<long>(s.pw);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(H) || iw >= static_cast<long>(W)) continue;
                acc += dy[((n * s.out_channels + o) * Ho + oh) * Wo + ow] *
                       x[((n * C + c) * H + static_cast<std::size_t>(ih)) * W + static_cast<std::size_t>(iw)];
              }
          dw[((o * C + c) * s.kh + i) * s.kw + j] = acc;
        }
  return dw;
}

/// Block-mean pooling written directly from the definition.
template <class T>
Tensor<T> pool_means(const Tensor<T>& x, std::size_t kh, std::size_t kw) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), zh = H / kh, zw = W / kw;
  Tensor<T> z({N, C, zh, zw});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t a = 0; a < zh; ++a)
        for (std::size_t b = 0; b < zw; ++b) {
          long double s = 0;
          for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j) s += x.at(n, c, a * kh + i, b * kw + j);
          z.at(n, c, a, b) = static_cast<T>(s / static_cast<long double>(kh * kw));
        }
  return z;
}

/// Maps every output position (h, w) to its source block by enumerating
/// block extents, with positions past the last block taking the last block.
template <class T>
Tensor<T> inflate_by_enumeration(const Tensor<T>& z, const Shape& original, std::size_t kh, std::size_t kw) {
  const std::size_t zh = z.dim(2), zw = z.dim(3);
  Tensor<T> x(original);
  std::vector<std::size_t> row_block(original[2]), col_block(original[3]);
  for (std::size_t h = 0; h < original[2]; ++h) {
    std::size_t blk = zh - 1;
    for (std::size_t a = 0; a < zh; ++a) {
      if (h >= a * kh && h < (a + 1) * kh) blk = a;
    }
    row_block[h] = blk;
  }
  for (std::size_t w = 0; w < original[3]; ++w) {
    std::size_t blk = zw - 1;
    for (std::size_t b = 0; b < zw; ++b) {
      if (w >= b * kw && w < (b + 1) * kw) blk = b;
    }
    col_block[w] = blk;
  }
  for (std::size_t n = 0; n < original[0]; ++n)
    for (std::size_t c = 0; c < original[1]; ++c)
      for (std::size_t h = 0; h < original[2]; ++h)
        for (std::size_t w = 0; w < original[3]; ++w) x.at(n, c, h, w) = z.at(n, c, row_block[h], col_block[w]);
  return x;
}

/// Parameter count of a ResNet with basic blocks, summed from layer shapes.
inline std::size_t resnet_parameter_count(const std::vector<std::size_t>& widths, const std::vector<std::size_t>& blocks,
                                          std::size_t in_ch, std::size_t stem_k, std::size_t classes) {
  std::size_t n = widths[0] * in_ch * stem_k * stem_k + 2 * widths[0];
  std::size_t ch = widths[0];
  for (std::size_t s = 0; s < widths.size(); ++s)
    for (std::size_t b = 0; b < blocks[s]; ++b) {
      const std::size_t w = widths[s];
      n += w * ch * 9 + 2 * w + w * w * 9 + 2 * w;
      if (ch != w || (s > 0 && b == 0)) n += w * ch + 2 * w;
      ch = w;
    }
  return n + classes * ch + classes;
}

template <class T>
Tensor<T> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

}  // namespace oracle
