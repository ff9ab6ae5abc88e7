#pragma once

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <vector>

namespace cabp::detail {

/// MR rows of C, one 64-byte vector of columns, accumulated over all of K.
template <class T, std::size_t MR>
inline void gemm_tile(std::size_t K, const T* A, std::size_t lda, const T* panel, T* C, std::size_t ldc,
                      std::size_t nr) {
  using V [[gnu::vector_size(64)]] = T;
  constexpr std::size_t NR = 64 / sizeof(T);
  V acc[MR];
  for (std::size_t i = 0; i < MR; ++i) {
    acc[i] = V{};
    std::memcpy(&acc[i], C + i * ldc, nr * sizeof(T));
  }
  for (std::size_t k = 0; k < K; ++k) {
    V b;
    std::memcpy(&b, panel + k * NR, sizeof(V));
    for (std::size_t i = 0; i < MR; ++i) acc[i] += A[i * lda + k] * b;
  }
  for (std::size_t i = 0; i < MR; ++i) std::memcpy(C + i * ldc, &acc[i], nr * sizeof(T));
}

/// C += A * B for row-major A (M x K), B (K x N), C (M x N).
///
/// Every element of C is updated in ascending k order starting from its
/// current value, exactly as the textbook triple loop would. Tiling only
/// changes which elements are in flight, never the order of additions, so the
/// result matches a naive loop bit for bit (with FP contraction disabled).
template <class T>
void gemm_accumulate(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda,
                     const T* B, std::size_t ldb, T* C, std::size_t ldc) {
  constexpr std::size_t NR = 64 / sizeof(T);
  std::vector<T> panel(K * NR);
  for (std::size_t j0 = 0; j0 < N; j0 += NR) {
    const std::size_t nr = std::min(NR, N - j0);
    for (std::size_t k = 0; k < K; ++k) {
      T* dst = panel.data() + k * NR;
      std::memcpy(dst, B + k * ldb + j0, nr * sizeof(T));
      std::fill(dst + nr, dst + NR, T{0});
    }
    std::size_t i = 0;
    for (; i + 8 <= M; i += 8) gemm_tile<T, 8>(K, A + i * lda, lda, panel.data(), C + i * ldc + j0, ldc, nr);
    for (; i + 4 <= M; i += 4) gemm_tile<T, 4>(K, A + i * lda, lda, panel.data(), C + i * ldc + j0, ldc, nr);
    for (; i < M; ++i) gemm_tile<T, 1>(K, A + i * lda, lda, panel.data(), C + i * ldc + j0, ldc, nr);
  }
}

}  // namespace cabp::detail
