#pragma once

#include <cstdint>

namespace zonalnet::detail {

// Accumulating matrix kernels used by conv2d. All loops run in a fixed order
// so results are identical no matter how callers split the row ranges across
// threads. A/B/C are dense row-major.

// C[i0:i1, :] += A[i0:i1, :] * B,  A is MxK, B is KxN, C is MxN.
template <typename T>
void gemm_rows(std::int64_t i0, std::int64_t i1, std::int64_t K, std::int64_t N, const T* A,
               const T* B, T* C) {
  for (std::int64_t i = i0; i < i1; ++i) {
    const T* a = A + i * K;
    T* c = C + i * N;
    std::int64_t k = 0;
    for (; k + 4 <= K; k += 4) {
      const T a0 = a[k], a1 = a[k + 1], a2 = a[k + 2], a3 = a[k + 3];
      const T* b0 = B + k * N;
      const T* b1 = b0 + N;
      const T* b2 = b1 + N;
      const T* b3 = b2 + N;
      for (std::int64_t j = 0; j < N; ++j)
        c[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
    }
    for (; k < K; ++k) {
      const T ak = a[k];
      const T* b = B + k * N;
      for (std::int64_t j = 0; j < N; ++j) c[j] += ak * b[j];
    }
  }
}

// C[i0:i1, :] += A[i0:i1, :] * B^T,  A is MxN, B is KxN, C is MxK (row dots).
template <typename T>
void gemm_bt_rows(std::int64_t i0, std::int64_t i1, std::int64_t N, std::int64_t K, const T* A,
                  const T* B, T* C) {
  for (std::int64_t i = i0; i < i1; ++i) {
    const T* a = A + i * N;
    T* c = C + i * K;
    for (std::int64_t k = 0; k < K; ++k) {
      const T* b = B + k * N;
      T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
      std::int64_t j = 0;
      for (; j + 4 <= N; j += 4) {
        s0 += a[j] * b[j];
        s1 += a[j + 1] * b[j + 1];
        s2 += a[j + 2] * b[j + 2];
        s3 += a[j + 3] * b[j + 3];
      }
      T s = (s0 + s1) + (s2 + s3);
      for (; j < N; ++j) s += a[j] * b[j];
      c[k] += s;
    }
  }
}

// C[i0:i1, :] += A^T[i0:i1, :] * B,  A is MxK, B is MxN, C is KxN.
template <typename T>
void gemm_at_rows(std::int64_t i0, std::int64_t i1, std::int64_t M, std::int64_t K, std::int64_t N,
                  const T* A, const T* B, T* C) {
  for (std::int64_t i = i0; i < i1; ++i) {  // i indexes rows of C (columns of A)
    T* c = C + i * N;
    std::int64_t m = 0;
    for (; m + 4 <= M; m += 4) {
      const T a0 = A[m * K + i], a1 = A[(m + 1) * K + i];
      const T a2 = A[(m + 2) * K + i], a3 = A[(m + 3) * K + i];
      const T* b0 = B + m * N;
      const T* b1 = b0 + N;
      const T* b2 = b1 + N;
      const T* b3 = b2 + N;
      for (std::int64_t j = 0; j < N; ++j)
        c[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
    }
    for (; m < M; ++m) {
      const T am = A[m * K + i];
      const T* b = B + m * N;
      for (std::int64_t j = 0; j < N; ++j) c[j] += am * b[j];
    }
  }
}

}  // namespace zonalnet::detail
