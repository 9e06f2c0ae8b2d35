// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernels_impl.hpp"

namespace svt::kernels::scalar {
namespace {

template <typename T>
void gemm_strided_a(int m, int n, int k, const T* a, int a_rs, int a_cs, const T* b, int ldb,
                    T* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<std::size_t>(i) * ldc;
    for (int p = 0; p < k; ++p) {
      const T av = a[static_cast<std::size_t>(i) * a_rs + static_cast<std::size_t>(p) * a_cs];
      const T* brow = b + static_cast<std::size_t>(p) * ldb;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
T dot(const T* x, const T* y, std::size_t n) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const KernelTable<float> kFloat{&gemm_strided_a<float>, &dot<float>, &axpy<float>};
const KernelTable<double> kDouble{&gemm_strided_a<double>, &dot<double>, &axpy<double>};

}  // namespace svt::kernels::scalar
