#pragma once

#include <cstdint>

namespace tfusion {

// Fixed-order kernels. Every accumulator below runs its reduction in one
// pinned order (k ascending, or the written lane split), so results are
// bit-identical run to run; the j-inner loops carry no loop-carried
// dependence and auto-vectorize.

template <typename T>
inline void axpy(int64_t n, T a, const T* x, T* y) {
    for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
inline T dot_fixed(const T* a, const T* b, int64_t n) {
    T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    T tail = 0;
    for (; i < n; ++i) tail += a[i] * b[i];
    return ((s0 + s1) + (s2 + s3)) + tail;
}

template <typename T>
inline T sum_fixed(const T* a, int64_t n) {
    T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i];
        s1 += a[i + 1];
        s2 += a[i + 2];
        s3 += a[i + 3];
    }
    T tail = 0;
    for (; i < n; ++i) tail += a[i];
    return ((s0 + s1) + (s2 + s3)) + tail;
}

// C[M,N] += A[M,K] * B[K,N], row-major. Column blocks keep the C row chunk
// and the streamed B rows cache-resident for the large-N conv layers.
template <typename T>
inline void gemm_accum(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C) {
    constexpr int64_t JB = 512;
    for (int64_t j0 = 0; j0 < N; j0 += JB) {
        const int64_t jn = (N - j0 < JB) ? (N - j0) : JB;
        for (int64_t m = 0; m < M; ++m) {
            T* crow = C + m * N + j0;
            const T* arow = A + m * K;
            for (int64_t k = 0; k < K; ++k) {
                axpy(jn, arow[k], B + k * N + j0, crow);
            }
        }
    }
}

// C[M,P] += A[M,N] * B[P,N]^T
template <typename T>
inline void gemm_abT_accum(int64_t M, int64_t P, int64_t N, const T* A, const T* B, T* C) {
    for (int64_t m = 0; m < M; ++m)
        for (int64_t p = 0; p < P; ++p) C[m * P + p] += dot_fixed(A + m * N, B + p * N, N);
}

// C[K,N] += A[M,K]^T * B[M,N]
template <typename T>
inline void gemm_aTb_accum(int64_t K, int64_t N, int64_t M, const T* A, const T* B, T* C) {
    for (int64_t m = 0; m < M; ++m) {
        const T* brow = B + m * N;
        for (int64_t k = 0; k < K; ++k) axpy(N, A[m * K + k], brow, C + k * N);
    }
}

}  // namespace tfusion
