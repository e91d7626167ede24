#include "kernels.hpp"

namespace gis::simd::detail {
namespace {

template <class T, int MR, int NR>
void scalar_kernel(int kc, const T* a, const T* b, T* c, int ldc) {
  T acc[MR][NR] = {};
  for (int p = 0; p < kc; ++p) {
    for (int i = 0; i < MR; ++i) {
      const T av = a[i];
      for (int j = 0; j < NR; ++j) acc[i][j] += av * b[j];
    }
    a += MR;
    b += NR;
  }
  for (int i = 0; i < MR; ++i) {
    for (int j = 0; j < NR; ++j) c[static_cast<long>(i) * ldc + j] += acc[i][j];
  }
}

}  // namespace

KernelTable scalar_kernels() {
  return {{4, 4, &scalar_kernel<float, 4, 4>}, {4, 4, &scalar_kernel<double, 4, 4>}};
}

}  // namespace gis::simd::detail
