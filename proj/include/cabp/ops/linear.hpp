#pragma once

#include <cmath>
#include <vector>

#include "cabp/gemm.hpp"
#include "cabp/tensor.hpp"

namespace cabp {

namespace detail {

template <class T>
std::vector<T> transpose(const T* a, std::size_t rows, std::size_t cols) {
  std::vector<T> t(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = a[r * cols + c];
  return t;
}

}  // namespace detail

/// y = x W^T + b with x (N, in), W (out, in).
template <class T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(1)) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(weight.shape()));
  }
  const std::size_t N = x.dim(0), In = x.dim(1), Out = weight.dim(0);
  if (bias) require_same_shape(bias->shape(), {Out}, "linear bias");
  Tensor<T> y({N, Out}, AllocCategory::Activation);
  if (bias) {
    for (std::size_t n = 0; n < N; ++n) std::copy(bias->ptr(), bias->ptr() + Out, y.ptr() + n * Out);
  }
  const auto wt = detail::transpose(weight.ptr(), Out, In);
  detail::gemm_accumulate(N, Out, In, x.ptr(), In, wt.data(), Out, y.ptr(), Out);
  return y;
}

template <class T>
struct LinearGrads {
  Tensor<T> dx;
  Tensor<T> dw;
  Tensor<T> db;
};

template <class T>
LinearGrads<T> linear_backward(const Tensor<T>& dy, const Tensor<T>& x, const Tensor<T>& weight,
                               bool has_bias) {
  const std::size_t N = x.dim(0), In = x.dim(1), Out = weight.dim(0);
  require_same_shape(dy.shape(), {N, Out}, "linear_backward dY");
  LinearGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(weight.shape(), AllocCategory::Gradient), {}};
  detail::gemm_accumulate(N, In, Out, dy.ptr(), Out, weight.ptr(), In, g.dx.ptr(), In);
  const auto dyt = detail::transpose(dy.ptr(), N, Out);
  detail::gemm_accumulate(Out, In, N, dyt.data(), N, x.ptr(), In, g.dw.ptr(), In);
  if (has_bias) {
    g.db = Tensor<T>({Out}, AllocCategory::Gradient);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t o = 0; o < Out; ++o) g.db[o] += dy[n * Out + o];
  }
  return g;
}

template <class T>
struct CrossEntropyForward {
  T loss{};
  Tensor<T> probs;
  std::vector<std::size_t> labels;
};

/// Mean softmax cross-entropy over the batch.
template <class T>
CrossEntropyForward<T> softmax_cross_entropy(const Tensor<T>& logits,
                                             const std::vector<std::size_t>& labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("softmax_cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t N = logits.dim(0), C = logits.dim(1);
  if (N == 0 || C == 0) throw ShapeError("softmax_cross_entropy: zero-size reduction");
  CrossEntropyForward<T> out{T{0}, Tensor<T>(logits.shape(), AllocCategory::Activation), labels};
  double total = 0;
  for (std::size_t n = 0; n < N; ++n) {
    if (labels[n] >= C) {
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(labels[n]) +
                       " out of range for " + std::to_string(C) + " classes");
    }
    const T* z = logits.ptr() + n * C;
    double mx = z[0];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, static_cast<double>(z[c]));
    double se = 0;
    for (std::size_t c = 0; c < C; ++c) se += std::exp(z[c] - mx);
    const double lse = mx + std::log(se);
    for (std::size_t c = 0; c < C; ++c) out.probs[n * C + c] = static_cast<T>(std::exp(z[c] - lse));
    total += lse - z[labels[n]];
  }
  out.loss = static_cast<T>(total / static_cast<double>(N));
  return out;
}

/// dlogits = (softmax - onehot) / N, scaled by the incoming loss gradient.
template <class T>
Tensor<T> softmax_cross_entropy_backward(const Tensor<T>& probs,
                                         const std::vector<std::size_t>& labels, T dloss) {
  const std::size_t N = probs.dim(0), C = probs.dim(1);
  Tensor<T> d(probs.shape());
  const T s = dloss / static_cast<T>(N);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const T p = probs[n * C + c] - (c == labels[n] ? T{1} : T{0});
      d[n * C + c] = p * s;
    }
  return d;
}

}  // namespace cabp
