#pragma once

// Register-blocked micro-kernel shared by the vector ISA translation units.
// Include only inside an anonymous namespace of a TU compiled for the
// matching target; V supplies the register type and intrinsics.

template <class V, int MR, int NV>
void micro_kernel(int kc, const typename V::scalar* a, const typename V::scalar* b,
                  typename V::scalar* c, int ldc) {
  using R = typename V::reg;
  constexpr int W = V::width;
  constexpr int NR = NV * W;
  R acc[MR][NV];
#pragma GCC unroll 16
  for (int i = 0; i < MR; ++i) {
#pragma GCC unroll 4
    for (int j = 0; j < NV; ++j) acc[i][j] = V::zero();
  }
  for (int p = 0; p < kc; ++p) {
    R bv[NV];
#pragma GCC unroll 4
    for (int j = 0; j < NV; ++j) bv[j] = V::load(b + j * W);
#pragma GCC unroll 16
    for (int i = 0; i < MR; ++i) {
      const R av = V::broadcast(a + i);
#pragma GCC unroll 4
      for (int j = 0; j < NV; ++j) acc[i][j] = V::fmadd(av, bv[j], acc[i][j]);
    }
    a += MR;
    b += NR;
  }
#pragma GCC unroll 16
  for (int i = 0; i < MR; ++i) {
#pragma GCC unroll 4
    for (int j = 0; j < NV; ++j) {
      auto* dst = c + static_cast<long>(i) * ldc + j * W;
      V::store(dst, V::add(V::load(dst), acc[i][j]));
    }
  }
}
