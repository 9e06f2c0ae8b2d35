// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Per-ISA entry points behind the dispatcher. The AVX2 translation unit is
// compiled with -mavx2 -mfma and must include nothing but this header and
// <immintrin.h>, so no inline code from other headers picks up AVX encodings.

#include <cstddef>

namespace svt::kernels {

template <typename T>
struct KernelTable {
  // C += A * B where element (i, p) of A is a[i * a_rs + p * a_cs].
  void (*gemm_strided_a)(int m, int n, int k, const T* a, int a_rs, int a_cs, const T* b,
                         int ldb, T* c, int ldc);
  T (*dot)(const T* x, const T* y, std::size_t n);
  void (*axpy)(std::size_t n, T alpha, const T* x, T* y);
};

namespace scalar {
extern const KernelTable<float> kFloat;
extern const KernelTable<double> kDouble;
}  // namespace scalar

namespace avx2 {
extern const KernelTable<float> kFloat;
extern const KernelTable<double> kDouble;
}  // namespace avx2

}  // namespace svt::kernels
