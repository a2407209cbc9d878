#pragma once

// Small single-threaded GEMM kernels used by the convolution layers.  Every
// output element is accumulated over the inner dimension in ascending order,
// so results are independent of how callers distribute work across threads.

#include <algorithm>
#include <cstddef>

namespace lungtex::gemm {

// Row access into B: a strided matrix or a table of row pointers.
template <typename T>
struct Strided {
  const T* base;
  int ld;
  const T* operator[](int r) const { return base + static_cast<std::ptrdiff_t>(r) * ld; }
};

template <typename T>
struct RowTable {
  const T* const* rows;
  const T* operator[](int r) const { return rows[r]; }
};

namespace detail {

template <typename T, int MR, int NR, bool TransA, typename Rows>
inline void tile_nn(int mi, int nj, int k_dim, const T* a, int lda, Rows b, int col0, T* c, int ldc,
                    bool accumulate) {
  T acc[MR][NR] = {};
  if (mi == MR && nj == NR) {
    for (int k = 0; k < k_dim; ++k) {
      const T* brow = b[k] + col0;
      for (int r = 0; r < MR; ++r) {
        const T av = TransA ? a[static_cast<std::ptrdiff_t>(k) * lda + r] : a[static_cast<std::ptrdiff_t>(r) * lda + k];
#pragma omp simd
        for (int j = 0; j < NR; ++j) acc[r][j] += av * brow[j];
      }
    }
  } else {
    for (int k = 0; k < k_dim; ++k) {
      const T* brow = b[k] + col0;
      for (int r = 0; r < mi; ++r) {
        const T av = TransA ? a[static_cast<std::ptrdiff_t>(k) * lda + r] : a[static_cast<std::ptrdiff_t>(r) * lda + k];
        for (int j = 0; j < nj; ++j) acc[r][j] += av * brow[j];
      }
    }
  }
  for (int r = 0; r < mi; ++r) {
    T* crow = c + static_cast<std::ptrdiff_t>(r) * ldc;
    for (int j = 0; j < nj; ++j) crow[j] = accumulate ? crow[j] + acc[r][j] : acc[r][j];
  }
}

template <typename T>
constexpr int kNr = 64 / static_cast<int>(sizeof(T)) * 2;  // two cache lines of B per row

}  // namespace detail

// C[M,N] (+)= A[M,K] * B[K,N]; all row-major.  B rows come from `b`.
template <typename T, typename Rows>
void nn_rows(int m, int n, int k, const T* a, int lda, Rows b, T* c, int ldc, bool accumulate = false) {
  constexpr int MR = 4, NR = detail::kNr<T>;
  for (int i = 0; i < m; i += MR)
    for (int j = 0; j < n; j += NR)
      detail::tile_nn<T, MR, NR, false>(std::min(MR, m - i), std::min(NR, n - j), k, a + static_cast<std::ptrdiff_t>(i) * lda,
                                        lda, b, j, c + static_cast<std::ptrdiff_t>(i) * ldc + j, ldc, accumulate);
}

template <typename T>
void nn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate = false) {
  nn_rows(m, n, k, a, lda, Strided<T>{b, ldb}, c, ldc, accumulate);
}

// C[M,N] (+)= A[K,M]^T * B[K,N].
template <typename T>
void tn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate = false) {
  constexpr int MR = 4, NR = detail::kNr<T>;
  for (int i = 0; i < m; i += MR)
    for (int j = 0; j < n; j += NR)
      detail::tile_nn<T, MR, NR, true>(std::min(MR, m - i), std::min(NR, n - j), k, a + i, lda, Strided<T>{b, ldb}, j,
                                       c + static_cast<std::ptrdiff_t>(i) * ldc + j, ldc, accumulate);
}

// C[M,N] (+)= A[M,K] * B[N,K]^T  (row-wise dot products).  B rows come from `b`.
template <typename T, typename Rows>
void nt_rows(int m, int n, int k, const T* a, int lda, Rows b, T* c, int ldc, bool accumulate = false) {
  constexpr int MR = 4, NR = 4, V = 16;
  for (int i0 = 0; i0 < m; i0 += MR)
    for (int j0 = 0; j0 < n; j0 += NR) {
      const int mi = std::min(MR, m - i0), nj = std::min(NR, n - j0);
      T acc[MR][NR][V] = {};
      const int kv = k / V * V;
      if (mi == MR && nj == NR) {
        const T* bq[NR];
        for (int q = 0; q < NR; ++q) bq[q] = b[j0 + q];
        for (int kk = 0; kk < kv; kk += V)
          for (int r = 0; r < MR; ++r) {
            const T* ar = a + static_cast<std::ptrdiff_t>(i0 + r) * lda + kk;
            for (int q = 0; q < NR; ++q) {
              const T* bk = bq[q] + kk;
#pragma omp simd
              for (int v = 0; v < V; ++v) acc[r][q][v] += ar[v] * bk[v];
            }
          }
      } else {
        for (int kk = 0; kk < kv; kk += V)
          for (int r = 0; r < mi; ++r) {
            const T* ar = a + static_cast<std::ptrdiff_t>(i0 + r) * lda + kk;
            for (int q = 0; q < nj; ++q) {
              const T* bk = b[j0 + q] + kk;
              for (int v = 0; v < V; ++v) acc[r][q][v] += ar[v] * bk[v];
            }
          }
      }
      for (int r = 0; r < mi; ++r)
        for (int q = 0; q < nj; ++q) {
          const T* ar = a + static_cast<std::ptrdiff_t>(i0 + r) * lda;
          const T* bq = b[j0 + q];
          T s = 0;
          for (int v = 0; v < V; ++v) s += acc[r][q][v];
          for (int kk = kv; kk < k; ++kk) s += ar[kk] * bq[kk];
          T& out = c[static_cast<std::ptrdiff_t>(i0 + r) * ldc + j0 + q];
          out = accumulate ? out + s : s;
        }
    }
}

template <typename T>
void nt(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate = false) {
  nt_rows(m, n, k, a, lda, Strided<T>{b, ldb}, c, ldc, accumulate);
}

}  // namespace lungtex::gemm
