#include "gis/simd/gemm.hpp"

#include <algorithm>
#include <vector>

#include "kernels.hpp"

namespace gis::simd {
namespace {

constexpr int kBlockK = 256;
constexpr int kBlockM = 128;
constexpr int kBlockN = 1024;

template <class T>
const detail::KernelSpec<T>& spec_from(const detail::KernelTable& t) {
  if constexpr (std::is_same_v<T, float>) {
    return t.f32;
  } else {
    return t.f64;
  }
}

const detail::KernelTable& table_for(Isa isa) {
  static const detail::KernelTable scalar = detail::scalar_kernels();
#if defined(GIS_X86_KERNELS)
  static const detail::KernelTable avx2 = detail::avx2_kernels();
  static const detail::KernelTable avx512 = detail::avx512_kernels();
  if (isa == Isa::avx512) return avx512;
  if (isa == Isa::avx2) return avx2;
#endif
  (void)isa;
  return scalar;
}

template <class T>
void scale_c(int m, int n, T beta, T* c, int ldc) {
  if (beta == T(1)) return;
  for (int i = 0; i < m; ++i) {
    T* row = c + static_cast<long>(i) * ldc;
    if (beta == T(0)) {
      std::fill(row, row + n, T(0));
    } else {
      for (int j = 0; j < n; ++j) row[j] *= beta;
    }
  }
}

// Panels of `mr` rows of alpha*op(A), k-major, zero padded past m.
template <class T>
void pack_a(Trans ta, const T* a, int lda, int i0, int mc, int p0, int kc, int mr,
            T alpha, T* out) {
  for (int ip = 0; ip < mc; ip += mr) {
    const int rows = std::min(mr, mc - ip);
    for (int p = 0; p < kc; ++p) {
      T* dst = out + p * mr;
      for (int i = 0; i < rows; ++i) {
        const int r = i0 + ip + i;
        const int col = p0 + p;
        const T v = ta == Trans::no ? a[static_cast<long>(r) * lda + col]
                                    : a[static_cast<long>(col) * lda + r];
        dst[i] = alpha * v;
      }
      for (int i = rows; i < mr; ++i) dst[i] = T(0);
    }
    out += static_cast<long>(kc) * mr;
  }
}

// Panels of `nr` columns of op(B), k-major, zero padded past n.
template <class T>
void pack_b(Trans tb, const T* b, int ldb, int p0, int kc, int j0, int nc, int nr,
            T* out) {
  for (int jp = 0; jp < nc; jp += nr) {
    const int cols = std::min(nr, nc - jp);
    for (int p = 0; p < kc; ++p) {
      T* dst = out + p * nr;
      const int row = p0 + p;
      if (tb == Trans::no) {
        const T* src = b + static_cast<long>(row) * ldb + j0 + jp;
        std::copy_n(src, cols, dst);
      } else {
        for (int j = 0; j < cols; ++j) {
          dst[j] = b[static_cast<long>(j0 + jp + j) * ldb + row];
        }
      }
      for (int j = cols; j < nr; ++j) dst[j] = T(0);
    }
    out += static_cast<long>(kc) * nr;
  }
}

template <class T>
void blocked_gemm(const detail::KernelSpec<T>& ks, Trans ta, Trans tb, int m, int n,
                  int k, T alpha, const T* a, int lda, const T* b, int ldb, T beta,
                  T* c, int ldc) {
  scale_c(m, n, beta, c, ldc);
  if (m <= 0 || n <= 0 || k <= 0 || alpha == T(0)) return;

  const int mr = ks.mr;
  const int nr = ks.nr;
  thread_local std::vector<T> abuf;
  thread_local std::vector<T> bbuf;
  thread_local std::vector<T> tile;
  const int mc_max = std::min(kBlockM, ((m + mr - 1) / mr) * mr);
  const int nc_max = std::min(kBlockN, ((n + nr - 1) / nr) * nr);
  abuf.resize(static_cast<std::size_t>(kBlockK) * (mc_max + mr));
  bbuf.resize(static_cast<std::size_t>(kBlockK) * (nc_max + nr));
  tile.resize(static_cast<std::size_t>(mr) * nr);

  for (int jc = 0; jc < n; jc += kBlockN) {
    const int nc = std::min(kBlockN, n - jc);
    for (int pc = 0; pc < k; pc += kBlockK) {
      const int kc = std::min(kBlockK, k - pc);
      pack_b(tb, b, ldb, pc, kc, jc, nc, nr, bbuf.data());
      for (int ic = 0; ic < m; ic += kBlockM) {
        const int mc = std::min(kBlockM, m - ic);
        pack_a(ta, a, lda, ic, mc, pc, kc, mr, alpha, abuf.data());
        for (int jr = 0; jr < nc; jr += nr) {
          const int ncols = std::min(nr, nc - jr);
          const T* bp = bbuf.data() + static_cast<long>(jr / nr) * kc * nr;
          for (int ir = 0; ir < mc; ir += mr) {
            const int nrows = std::min(mr, mc - ir);
            const T* ap = abuf.data() + static_cast<long>(ir / mr) * kc * mr;
            T* cp = c + static_cast<long>(ic + ir) * ldc + jc + jr;
            if (nrows == mr && ncols == nr) {
              ks.run(kc, ap, bp, cp, ldc);
            } else {
              std::fill(tile.begin(), tile.end(), T(0));
              ks.run(kc, ap, bp, tile.data(), nr);
              for (int i = 0; i < nrows; ++i) {
                for (int j = 0; j < ncols; ++j) {
                  cp[static_cast<long>(i) * ldc + j] += tile[i * nr + j];
                }
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <class T>
void gemm_on(Isa isa, Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a,
             int lda, const T* b, int ldb, T beta, T* c, int ldc) {
  blocked_gemm(spec_from<T>(table_for(isa)), ta, tb, m, n, k, alpha, a, lda, b, ldb,
               beta, c, ldc);
}

template <class T>
void gemm(Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc) {
  gemm_on(active_isa(), ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <class T>
void gemm_reference(Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a,
                    int lda, const T* b, int ldb, T beta, T* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        const T av = ta == Trans::no ? a[static_cast<long>(i) * lda + p]
                                     : a[static_cast<long>(p) * lda + i];
        const T bv = tb == Trans::no ? b[static_cast<long>(p) * ldb + j]
                                     : b[static_cast<long>(j) * ldb + p];
        acc += static_cast<double>(av) * static_cast<double>(bv);
      }
      T& dst = c[static_cast<long>(i) * ldc + j];
      const double prior = beta == T(0) ? 0.0 : static_cast<double>(beta) * dst;
      dst = static_cast<T>(static_cast<double>(alpha) * acc + prior);
    }
  }
}

#define GIS_INSTANTIATE_GEMM(T)                                                     \
  template void gemm<T>(Trans, Trans, int, int, int, T, const T*, int, const T*,   \
                        int, T, T*, int);                                           \
  template void gemm_on<T>(Isa, Trans, Trans, int, int, int, T, const T*, int,      \
                           const T*, int, T, T*, int);                              \
  template void gemm_reference<T>(Trans, Trans, int, int, int, T, const T*, int,    \
                                  const T*, int, T, T*, int);

GIS_INSTANTIATE_GEMM(float)
GIS_INSTANTIATE_GEMM(double)
#undef GIS_INSTANTIATE_GEMM

}  // namespace gis::simd
