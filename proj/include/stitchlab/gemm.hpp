#pragma once

#include <cstddef>
#include <vector>

namespace stitchlab {

// Single-threaded register-tiled GEMM. Every reduction runs in a fixed
// order, so results are bit-identical across runs; parallelism happens one
// level up, across independent training/evaluation jobs.

namespace detail {

inline constexpr int kMr = 4; // rows per register tile

template <int NR, class T>
void gemm_tile(int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc, bool accumulate) {
    T acc[kMr][NR] = {};
    for (int k = 0; k < K; ++k) {
        const T* brow = B + static_cast<std::size_t>(k) * ldb;
        for (int r = 0; r < kMr; ++r) {
            const T a = A[static_cast<std::size_t>(r) * lda + k];
            for (int jj = 0; jj < NR; ++jj) acc[r][jj] += a * brow[jj];
        }
    }
    for (int r = 0; r < kMr; ++r) {
        T* crow = C + static_cast<std::size_t>(r) * ldc;
        if (accumulate)
            for (int jj = 0; jj < NR; ++jj) crow[jj] += acc[r][jj];
        else
            for (int jj = 0; jj < NR; ++jj) crow[jj] = acc[r][jj];
    }
}

} // namespace detail

// C[M x N] (+)= A[M x K] * B[K x N], row-major with leading dimensions.
template <class T>
void gemm_nn(int M, int K, int N,
             const T* A, int lda,
             const T* B, int ldb,
             T* C, int ldc,
             bool accumulate = false) {
    using namespace detail;
    const int mfull = M - M % kMr;

    for (int i = 0; i < mfull; i += kMr) {
        const T* arow = A + static_cast<std::size_t>(i) * lda;
        T* crow = C + static_cast<std::size_t>(i) * ldc;
        int j = 0;
        for (; j + 32 <= N; j += 32) gemm_tile<32>(K, arow, lda, B + j, ldb, crow + j, ldc, accumulate);
        if (j + 16 <= N) {
            gemm_tile<16>(K, arow, lda, B + j, ldb, crow + j, ldc, accumulate);
            j += 16;
        }
        if (j + 8 <= N) {
            gemm_tile<8>(K, arow, lda, B + j, ldb, crow + j, ldc, accumulate);
            j += 8;
        }
        if (j + 4 <= N) {
            gemm_tile<4>(K, arow, lda, B + j, ldb, crow + j, ldc, accumulate);
            j += 4;
        }
        for (; j < N; ++j) {
            for (int r = 0; r < kMr; ++r) {
                T acc = accumulate ? crow[static_cast<std::size_t>(r) * ldc + j] : T(0);
                for (int k = 0; k < K; ++k)
                    acc += arow[static_cast<std::size_t>(r) * lda + k] * B[static_cast<std::size_t>(k) * ldb + j];
                crow[static_cast<std::size_t>(r) * ldc + j] = acc;
            }
        }
    }
    // remaining rows
    for (int i = mfull; i < M; ++i) {
        for (int j = 0; j < N; ++j) {
            T acc = accumulate ? C[static_cast<std::size_t>(i) * ldc + j] : T(0);
            for (int k = 0; k < K; ++k)
                acc += A[static_cast<std::size_t>(i) * lda + k] * B[static_cast<std::size_t>(k) * ldb + j];
            C[static_cast<std::size_t>(i) * ldc + j] = acc;
        }
    }
}

namespace detail {
template <class T>
std::vector<T>& transpose_scratch() {
    static thread_local std::vector<T> buf;
    return buf;
}
} // namespace detail

// C[M x N] (+)= A[M x K] * B[N x K]^T, via a transposed copy of B.
template <class T>
void gemm_nt(int M, int K, int N,
             const T* A, int lda,
             const T* B, int ldb,
             T* C, int ldc,
             bool accumulate = false) {
    auto& bt = detail::transpose_scratch<T>();
    bt.resize(static_cast<std::size_t>(K) * N);
    for (int j = 0; j < N; ++j)
        for (int k = 0; k < K; ++k)
            bt[static_cast<std::size_t>(k) * N + j] = B[static_cast<std::size_t>(j) * ldb + k];
    gemm_nn(M, K, N, A, lda, bt.data(), N, C, ldc, accumulate);
}

// C[M x N] (+)= A[K x M]^T * B[K x N], via a transposed copy of A.
template <class T>
void gemm_tn(int M, int K, int N,
             const T* A, int lda,
             const T* B, int ldb,
             T* C, int ldc,
             bool accumulate = false) {
    auto& at = detail::transpose_scratch<T>();
    at.resize(static_cast<std::size_t>(M) * K);
    for (int k = 0; k < K; ++k)
        for (int m = 0; m < M; ++m)
            at[static_cast<std::size_t>(m) * K + k] = A[static_cast<std::size_t>(k) * lda + m];
    gemm_nn(M, K, N, at.data(), K, B, ldb, C, ldc, accumulate);
}

} // namespace stitchlab
