#pragma once

// Internal interface between the portable GEMM driver and the per-ISA
// micro-kernels. Each ISA translation unit is compiled with its own target
// flags and must only expose the plain functions declared here.

namespace gis::simd::detail {

// C[mr x nr] (row stride ldc) += sum_p a[p*mr + i] * b[p*nr + j]
template <class T>
using MicroKernel = void (*)(int kc, const T* a, const T* b, T* c, int ldc);

template <class T>
struct KernelSpec {
  int mr = 0;
  int nr = 0;
  MicroKernel<T> run = nullptr;
};

struct KernelTable {
  KernelSpec<float> f32;
  KernelSpec<double> f64;
};

KernelTable scalar_kernels();
#if defined(GIS_X86_KERNELS)
KernelTable avx2_kernels();
KernelTable avx512_kernels();
#endif

}  // namespace gis::simd::detail
