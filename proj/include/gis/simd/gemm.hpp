#pragma once

#include "gis/simd/dispatch.hpp"

namespace gis::simd {

enum class Trans { no, yes };

// Row-major C = alpha * op(A) * op(B) + beta * C, where op(A) is m x k and
// op(B) is k x n. Uses the active ISA tier. When beta == 0, C is not read.
template <class T>
void gemm(Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc);

// Same contract on an explicit tier; used by the equivalence tests.
template <class T>
void gemm_on(Isa isa, Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a,
             int lda, const T* b, int ldb, T beta, T* c, int ldc);

// Unblocked triple loop with a double accumulator; the oracle for gemm_on.
template <class T>
void gemm_reference(Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a,
                    int lda, const T* b, int ldb, T beta, T* c, int ldc);

}  // namespace gis::simd
