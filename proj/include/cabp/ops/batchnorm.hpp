#pragma once

#include <cmath>

#include "cabp/tensor.hpp"

namespace cabp {

inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEps = 1e-5;

template <class T>
struct BatchNormForward {
  Tensor<T> y;
  Tensor<T> mean;        // per-channel batch mean
  Tensor<T> invstd;      // 1 / sqrt(biased var + eps)
  Tensor<T> var_unbiased;
};

template <class T>
struct BatchNormGrads {
  Tensor<T> dx;
  Tensor<T> dgamma;
  Tensor<T> dbeta;
};

namespace detail {

inline void check_bn_shapes(const Shape& x, std::size_t gamma_len, const char* what) {
  if (x.size() != 4) throw ShapeError(std::string(what) + ": expected NCHW input, got " + shape_str(x));
  if (x[1] != gamma_len) throw ShapeError(std::string(what) + ": channel count mismatch");
  if (x[0] * x[2] * x[3] == 0) throw ShapeError(std::string(what) + ": zero-size reduction");
}

}  // namespace detail

/// Training-mode batch norm with per-batch statistics. Channel reductions
/// accumulate in double, in (n, h, w) order.
template <class T>
BatchNormForward<T> batchnorm2d_forward_train(const Tensor<T>& x, const Tensor<T>& gamma,
                                              const Tensor<T>& beta, double eps = kBatchNormEps) {
  detail::check_bn_shapes(x.shape(), gamma.numel(), "batchnorm2d");
  const std::size_t N = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  const double M = static_cast<double>(N * P);
  BatchNormForward<T> out{Tensor<T>(x.shape(), AllocCategory::Activation), Tensor<T>({C}),
                          Tensor<T>({C}), Tensor<T>({C})};
  for (std::size_t c = 0; c < C; ++c) {
    double s = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* p = x.ptr() + (n * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) s += p[i];
    }
    const double mean = s / M;
    double ss = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* p = x.ptr() + (n * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) {
        const double d = p[i] - mean;
        ss += d * d;
      }
    }
    const double var = ss / M;
    const double invstd = 1.0 / std::sqrt(var + eps);
    out.mean[c] = static_cast<T>(mean);
    out.invstd[c] = static_cast<T>(invstd);
    out.var_unbiased[c] = static_cast<T>(M > 1 ? ss / (M - 1) : 0.0);
    const double g = gamma[c], b = beta[c];
    for (std::size_t n = 0; n < N; ++n) {
      const T* p = x.ptr() + (n * C + c) * P;
      T* q = out.y.ptr() + (n * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) q[i] = static_cast<T>((p[i] - mean) * invstd * g + b);
    }
  }
  return out;
}

template <class T>
Tensor<T> batchnorm2d_forward_eval(const Tensor<T>& x, const Tensor<T>& gamma,
                                   const Tensor<T>& beta, const Tensor<T>& running_mean,
                                   const Tensor<T>& running_var, double eps = kBatchNormEps) {
  detail::check_bn_shapes(x.shape(), gamma.numel(), "batchnorm2d");
  const std::size_t N = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  Tensor<T> y(x.shape(), AllocCategory::Activation);
  for (std::size_t c = 0; c < C; ++c) {
    const double invstd = 1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps);
    const double mean = running_mean[c], g = gamma[c], b = beta[c];
    for (std::size_t n = 0; n < N; ++n) {
      const T* p = x.ptr() + (n * C + c) * P;
      T* q = y.ptr() + (n * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) q[i] = static_cast<T>((p[i] - mean) * invstd * g + b);
    }
  }
  return y;
}

/// running = (1 - momentum) * running + momentum * batch
template <class T>
void batchnorm2d_update_running(Tensor<T>& running_mean, Tensor<T>& running_var,
                                const Tensor<T>& mean, const Tensor<T>& var_unbiased,
                                double momentum = kBatchNormMomentum) {
  for (std::size_t c = 0; c < running_mean.numel(); ++c) {
    running_mean[c] = static_cast<T>((1 - momentum) * running_mean[c] + momentum * mean[c]);
    running_var[c] = static_cast<T>((1 - momentum) * running_var[c] + momentum * var_unbiased[c]);
  }
}

/// dx = gamma * invstd / M * (M * dy - sum(dy) - xhat * sum(dy * xhat))
template <class T>
BatchNormGrads<T> batchnorm2d_backward(const Tensor<T>& dy, const Tensor<T>& x,
                                       const Tensor<T>& gamma, const Tensor<T>& mean,
                                       const Tensor<T>& invstd) {
  require_same_shape(dy.shape(), x.shape(), "batchnorm2d_backward");
  detail::check_bn_shapes(x.shape(), gamma.numel(), "batchnorm2d_backward");
  const std::size_t N = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  const double M = static_cast<double>(N * P);
  BatchNormGrads<T> g{Tensor<T>(x.shape()), Tensor<T>({C}, AllocCategory::Gradient),
                      Tensor<T>({C}, AllocCategory::Gradient)};
  for (std::size_t c = 0; c < C; ++c) {
    const double mu = mean[c], is = invstd[c];
    double sum_dy = 0, sum_dy_xhat = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* pd = dy.ptr() + (n * C + c) * P;
      const T* px = x.ptr() + (n * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) {
        sum_dy += pd[i];
        sum_dy_xhat += pd[i] * ((px[i] - mu) * is);
      }
    }
    g.dbeta[c] = static_cast<T>(sum_dy);
    g.dgamma[c] = static_cast<T>(sum_dy_xhat);
    const double k = gamma[c] * is / M;
    for (std::size_t n = 0; n < N; ++n) {
      const T* pd = dy.ptr() + (n * C + c) * P;
      const T* px = x.ptr() + (n * C + c) * P;
      T* q = g.dx.ptr() + (n * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) {
        const double xhat = (px[i] - mu) * is;
        q[i] = static_cast<T>(k * (M * pd[i] - sum_dy - xhat * sum_dy_xhat));
      }
    }
  }
  return g;
}

}  // namespace cabp
