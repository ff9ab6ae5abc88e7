#pragma once

// 2-D convolution (cross-correlation, no kernel flip) over NCHW tensors,
// lowered to im2col + a deterministic GEMM.
//
//   forward:        Y  = W * X + b
//   input grad:     dX = W^T * dY       (never touches the saved activation)
//   bias grad:      db = sum(dY)        (never touches the saved activation)
//   weight grad:    dW = X * dY         (X is the saved activation, or the
//                                        inflated pooled surrogate)

#include <optional>
#include <string>
#include <variant>

#include "cabp/compression.hpp"
#include "cabp/gemm.hpp"
#include "cabp/tensor.hpp"

namespace cabp {

struct Conv2dSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kh = 1, kw = 1;
  std::size_t sh = 1, sw = 1;
  std::size_t ph = 0, pw = 0;
  bool has_bias = false;

  std::size_t out_h(std::size_t h) const { return out_dim(h, kh, sh, ph, "height"); }
  std::size_t out_w(std::size_t w) const { return out_dim(w, kw, sw, pw, "width"); }
  Shape weight_shape() const { return {out_channels, in_channels, kh, kw}; }
  std::size_t patch_size() const { return in_channels * kh * kw; }

  Shape output_shape(const Shape& x) const {
    if (x.size() != 4 || x[1] != in_channels) {
      throw ShapeError("conv2d: input " + shape_str(x) + " does not match in_channels " +
                       std::to_string(in_channels));
    }
    return {x[0], out_channels, out_h(x[2]), out_w(x[3])};
  }

 private:
  static std::size_t out_dim(std::size_t in, std::size_t k, std::size_t s, std::size_t p,
                             const char* what) {
    if (k == 0 || s == 0) throw ShapeError("conv2d: kernel and stride must be positive");
    if (in + 2 * p < k) {
      throw ShapeError(std::string("conv2d: non-positive output ") + what + " for input " +
                       std::to_string(in) + ", kernel " + std::to_string(k) + ", padding " +
                       std::to_string(p));
    }
    return (in + 2 * p - k) / s + 1;
  }
};

/// How a layer stores its input for the weight-gradient computation.
struct SavePolicy {
  std::optional<PoolKernel> pool;

  static SavePolicy full() { return {}; }
  static SavePolicy pooled(PoolKernel k) {
    if (k.kh < 1 || k.kw < 1) throw ShapeError("pooled save policy needs kernel components >= 1");
    return {k};
  }
  bool is_full() const { return !pool.has_value(); }
  std::string str() const { return pool ? "pooled(" + pool->str() + ")" : "full"; }
  friend bool operator==(const SavePolicy&, const SavePolicy&) = default;
};

template <class T>
using SavedActivation = std::variant<Tensor<T>, CompressedActivation<T>>;

template <class T>
SavedActivation<T> make_saved(const Tensor<T>& x, const SavePolicy& policy) {
  if (policy.is_full()) return x.retagged(AllocCategory::Activation);
  return compress(x, *policy.pool);
}

template <class T>
std::size_t saved_bytes(const SavedActivation<T>& s) {
  return std::visit(
      [](const auto& v) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, Tensor<T>>) {
          return v.bytes();
        } else {
          return compressed_bytes(v);
        }
      },
      s);
}

template <class T>
const Shape& saved_shape(const SavedActivation<T>& s) {
  if (auto* t = std::get_if<Tensor<T>>(&s)) return t->shape();
  return std::get<CompressedActivation<T>>(s).original_shape;
}

namespace detail {

// col[(c*kh + i)*kw + j][oh*Wo + ow] = x[c][oh*sh - ph + i][ow*sw - pw + j]
template <class T>
void im2col(const T* x, std::size_t H, std::size_t W, const Conv2dSpec& s, std::size_t Ho,
            std::size_t Wo, T* col) {
  const std::size_t P = Ho * Wo;
  for (std::size_t c = 0; c < s.in_channels; ++c) {
    const T* plane = x + c * H * W;
    for (std::size_t i = 0; i < s.kh; ++i) {
      for (std::size_t j = 0; j < s.kw; ++j) {
        T* row = col + ((c * s.kh + i) * s.kw + j) * P;
        for (std::size_t oh = 0; oh < Ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * s.sh + i) - static_cast<std::ptrdiff_t>(s.ph);
          T* dst = row + oh * Wo;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) {
            std::fill(dst, dst + Wo, T{0});
            continue;
          }
          const T* src = plane + ih * W;
          for (std::size_t ow = 0; ow < Wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * s.sw + j) - static_cast<std::ptrdiff_t>(s.pw);
            dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) ? T{0} : src[iw];
          }
        }
      }
    }
  }
}

// Transposed layout: colt[oh*Wo + ow][(c*kh + i)*kw + j].
template <class T>
void im2col_transposed(const T* x, std::size_t H, std::size_t W, const Conv2dSpec& s,
                       std::size_t Ho, std::size_t Wo, T* colt) {
  const std::size_t Kp = s.patch_size();
  for (std::size_t oh = 0; oh < Ho; ++oh) {
    for (std::size_t ow = 0; ow < Wo; ++ow) {
      T* dst = colt + (oh * Wo + ow) * Kp;
      for (std::size_t c = 0; c < s.in_channels; ++c) {
        const T* plane = x + c * H * W;
        for (std::size_t i = 0; i < s.kh; ++i) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * s.sh + i) - static_cast<std::ptrdiff_t>(s.ph);
          const bool row_ok = ih >= 0 && ih < static_cast<std::ptrdiff_t>(H);
          for (std::size_t j = 0; j < s.kw; ++j) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * s.sw + j) - static_cast<std::ptrdiff_t>(s.pw);
            const bool ok = row_ok && iw >= 0 && iw < static_cast<std::ptrdiff_t>(W);
            *dst++ = ok ? plane[ih * W + iw] : T{0};
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, std::size_t H, std::size_t W, const Conv2dSpec& s, std::size_t Ho,
                std::size_t Wo, T* x) {
  const std::size_t P = Ho * Wo;
  for (std::size_t c = 0; c < s.in_channels; ++c) {
    T* plane = x + c * H * W;
    for (std::size_t i = 0; i < s.kh; ++i) {
      for (std::size_t j = 0; j < s.kw; ++j) {
        const T* row = col + ((c * s.kh + i) * s.kw + j) * P;
        for (std::size_t oh = 0; oh < Ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * s.sh + i) - static_cast<std::ptrdiff_t>(s.ph);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t ow = 0; ow < Wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * s.sw + j) - static_cast<std::ptrdiff_t>(s.pw);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
            plane[ih * W + iw] += row[oh * Wo + ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                         const Conv2dSpec& spec) {
  const Shape ys = spec.output_shape(x.shape());
  require_same_shape(weight.shape(), spec.weight_shape(), "conv2d weight");
  if (spec.has_bias != (bias != nullptr)) throw ShapeError("conv2d: bias presence disagrees with spec");
  if (bias) require_same_shape(bias->shape(), {spec.out_channels}, "conv2d bias");

  const std::size_t N = ys[0], O = ys[1], Ho = ys[2], Wo = ys[3];
  const std::size_t H = x.dim(2), W = x.dim(3), P = Ho * Wo, Kp = spec.patch_size();
  Tensor<T> y(ys, AllocCategory::Activation);
  std::vector<T> col(Kp * P);
  for (std::size_t n = 0; n < N; ++n) {
    T* yn = y.ptr() + n * O * P;
    if (bias) {
      for (std::size_t o = 0; o < O; ++o) std::fill(yn + o * P, yn + (o + 1) * P, (*bias)[o]);
    }
    detail::im2col(x.ptr() + n * spec.in_channels * H * W, H, W, spec, Ho, Wo, col.data());
    detail::gemm_accumulate(O, P, Kp, weight.ptr(), Kp, col.data(), P, yn, P);
  }
  return y;
}

/// Input gradient. Depends only on the weights and dY.
template <class T>
Tensor<T> conv2d_backward_input(const Tensor<T>& dy, const Tensor<T>& weight,
                                const Conv2dSpec& spec, const Shape& input_shape) {
  require_same_shape(dy.shape(), spec.output_shape(input_shape), "conv2d_backward_input dY");
  require_same_shape(weight.shape(), spec.weight_shape(), "conv2d_backward_input weight");
  const std::size_t N = input_shape[0], H = input_shape[2], W = input_shape[3];
  const std::size_t O = spec.out_channels, Ho = dy.dim(2), Wo = dy.dim(3), P = Ho * Wo;
  const std::size_t Kp = spec.patch_size();

  std::vector<T> wt(Kp * O);
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t k = 0; k < Kp; ++k) wt[k * O + o] = weight[o * Kp + k];

  Tensor<T> dx(input_shape, AllocCategory::Scratch);
  std::vector<T> col(Kp * P);
  for (std::size_t n = 0; n < N; ++n) {
    std::fill(col.begin(), col.end(), T{0});
    detail::gemm_accumulate(Kp, P, O, wt.data(), O, dy.ptr() + n * O * P, P, col.data(), P);
    detail::col2im_add(col.data(), H, W, spec, Ho, Wo, dx.ptr() + n * spec.in_channels * H * W);
  }
  return dx;
}

/// db[c] = sum over batch and spatial positions of dY[:, c].
template <class T>
Tensor<T> conv2d_backward_bias(const Tensor<T>& dy) {
  if (dy.rank() != 4) throw ShapeError("conv2d_backward_bias: expected NCHW gradient");
  const std::size_t N = dy.dim(0), C = dy.dim(1), P = dy.dim(2) * dy.dim(3);
  Tensor<T> db({C}, AllocCategory::Gradient);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const T* p = dy.ptr() + (n * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) db[c] += p[i];
    }
  return db;
}

/// Weight gradient from an uncompressed activation. Each element accumulates
/// over (n, oh, ow) in ascending order.
template <class T>
Tensor<T> conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& dy, const Conv2dSpec& spec) {
  require_same_shape(dy.shape(), spec.output_shape(x.shape()), "conv2d_backward_weight dY");
  const std::size_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
  const std::size_t O = spec.out_channels, Ho = dy.dim(2), Wo = dy.dim(3), P = Ho * Wo;
  const std::size_t Kp = spec.patch_size();
  Tensor<T> dw(spec.weight_shape(), AllocCategory::Gradient);
  std::vector<T> colt(P * Kp);
  for (std::size_t n = 0; n < N; ++n) {
    detail::im2col_transposed(x.ptr() + n * spec.in_channels * H * W, H, W, spec, Ho, Wo, colt.data());
    detail::gemm_accumulate(O, Kp, P, dy.ptr() + n * O * P, P, colt.data(), Kp, dw.ptr(), Kp);
  }
  return dw;
}

/// Weight gradient from the stored payload. A pooled payload is inflated back
/// to the input shape and run through the same computation as a full one.
template <class T>
Tensor<T> conv2d_backward_weight(const SavedActivation<T>& saved, const Tensor<T>& dy,
                                 const Conv2dSpec& spec, const SavePolicy& policy) {
  if (const auto* x = std::get_if<Tensor<T>>(&saved)) {
    if (!policy.is_full()) {
      throw ContractError("conv2d_backward_weight: full activation stored but policy is " + policy.str());
    }
    return conv2d_weight_grad(*x, dy, spec);
  }
  const auto& c = std::get<CompressedActivation<T>>(saved);
  if (policy.is_full() || !(*policy.pool == c.k)) {
    throw ContractError("conv2d_backward_weight: payload pooled with " + c.k.str() +
                        " but policy is " + policy.str());
  }
  return conv2d_weight_grad(inflate(c), dy, spec);
}

}  // namespace cabp
