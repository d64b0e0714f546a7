#pragma once

// Dense kernels shared by matmul and conv2d. Every output element accumulates
// over the contraction index in ascending order, so results do not depend on
// blocking and match a naive triple loop up to FMA contraction.

#include <algorithm>
#include <cstdint>

namespace yoloe::kernels {

/// C[MxN] += A[MxK] * B[KxN]. A is addressed as A[i*a_row + k*a_col] so a
/// transposed operand needs no copy; B and C are row-major with leading
/// dimensions ldb and ldc.
template <typename T>
void gemm_acc(std::int64_t M, std::int64_t N, std::int64_t K, const T* A, std::int64_t a_row,
              std::int64_t a_col, const T* B, std::int64_t ldb, T* C, std::int64_t ldc) {
  constexpr std::int64_t kRows = 4;
  constexpr std::int64_t kCols = 64;
  std::int64_t i = 0;
  for (; i + kRows <= M; i += kRows) {
    std::int64_t j = 0;
    for (; j + kCols <= N; j += kCols) {
      T acc[kRows][kCols];
      for (std::int64_t r = 0; r < kRows; ++r)
        for (std::int64_t c = 0; c < kCols; ++c) acc[r][c] = C[(i + r) * ldc + j + c];
      for (std::int64_t k = 0; k < K; ++k) {
        const T* b = B + k * ldb + j;
        const T a0 = A[(i + 0) * a_row + k * a_col];
        const T a1 = A[(i + 1) * a_row + k * a_col];
        const T a2 = A[(i + 2) * a_row + k * a_col];
        const T a3 = A[(i + 3) * a_row + k * a_col];
        for (std::int64_t c = 0; c < kCols; ++c) {
          acc[0][c] += a0 * b[c];
          acc[1][c] += a1 * b[c];
          acc[2][c] += a2 * b[c];
          acc[3][c] += a3 * b[c];
        }
      }
      for (std::int64_t r = 0; r < kRows; ++r)
        for (std::int64_t c = 0; c < kCols; ++c) C[(i + r) * ldc + j + c] = acc[r][c];
    }
    if (j < N) {
      const std::int64_t w = N - j;
      for (std::int64_t k = 0; k < K; ++k) {
        const T* b = B + k * ldb + j;
        for (std::int64_t r = 0; r < kRows; ++r) {
          const T a = A[(i + r) * a_row + k * a_col];
          T* c = C + (i + r) * ldc + j;
          for (std::int64_t cc = 0; cc < w; ++cc) c[cc] += a * b[cc];
        }
      }
    }
  }
  for (; i < M; ++i) {
    T* c = C + i * ldc;
    for (std::int64_t k = 0; k < K; ++k) {
      const T a = A[i * a_row + k * a_col];
      const T* b = B + k * ldb;
      for (std::int64_t cc = 0; cc < N; ++cc) c[cc] += a * b[cc];
    }
  }
}

/// out[cols x rows] = in[rows x cols]^T
template <typename T>
void transpose(std::int64_t rows, std::int64_t cols, const T* in, T* out) {
  constexpr std::int64_t kBlock = 32;
  for (std::int64_t r0 = 0; r0 < rows; r0 += kBlock) {
    for (std::int64_t c0 = 0; c0 < cols; c0 += kBlock) {
      const auto r1 = std::min(rows, r0 + kBlock);
      const auto c1 = std::min(cols, c0 + kBlock);
      for (auto r = r0; r < r1; ++r)
        for (auto c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
    }
  }
}

}  // namespace yoloe::kernels
