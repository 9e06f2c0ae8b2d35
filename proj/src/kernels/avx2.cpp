// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

// Compiled with -mavx2 -mfma. Only reached after the dispatcher confirms
// CPU support.

#include <immintrin.h>

#include "kernels_impl.hpp"

#if defined(__AVX2__) && defined(__FMA__)

namespace svt::kernels::avx2 {
namespace {

struct F32 {
  using T = float;
  using V = __m256;
  static constexpr int kLanes = 8;
  static V zero() { return _mm256_setzero_ps(); }
  static V set1(T x) { return _mm256_set1_ps(x); }
  static V load(const T* p) { return _mm256_loadu_ps(p); }
  static void store(T* p, V v) { _mm256_storeu_ps(p, v); }
  static V add(V a, V b) { return _mm256_add_ps(a, b); }
  static V fmadd(V a, V b, V c) { return _mm256_fmadd_ps(a, b, c); }
  static T hsum(V v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
  }
};

struct F64 {
  using T = double;
  using V = __m256d;
  static constexpr int kLanes = 4;
  static V zero() { return _mm256_setzero_pd(); }
  static V set1(T x) { return _mm256_set1_pd(x); }
  static V load(const T* p) { return _mm256_loadu_pd(p); }
  static void store(T* p, V v) { _mm256_storeu_pd(p, v); }
  static V add(V a, V b) { return _mm256_add_pd(a, b); }
  static V fmadd(V a, V b, V c) { return _mm256_fmadd_pd(a, b, c); }
  static T hsum(V v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d high64 = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
  }
};

// Register tile of MR rows by two vectors of columns.
template <typename Tr, int MR>
void tile_rows(int n, int k, const typename Tr::T* a, int a_rs, int a_cs,
               const typename Tr::T* b, int ldb, typename Tr::T* c, int ldc) {
  using T = typename Tr::T;
  using V = typename Tr::V;
  constexpr int L = Tr::kLanes;
  int j = 0;
  for (; j + 2 * L <= n; j += 2 * L) {
    V acc0[MR];
    V acc1[MR];
    for (int r = 0; r < MR; ++r) acc0[r] = acc1[r] = Tr::zero();
    for (int p = 0; p < k; ++p) {
      const T* brow = b + static_cast<std::size_t>(p) * ldb + j;
      const V b0 = Tr::load(brow);
      const V b1 = Tr::load(brow + L);
      for (int r = 0; r < MR; ++r) {
        const V av = Tr::set1(a[static_cast<std::size_t>(r) * a_rs +
                                static_cast<std::size_t>(p) * a_cs]);
        acc0[r] = Tr::fmadd(av, b0, acc0[r]);
        acc1[r] = Tr::fmadd(av, b1, acc1[r]);
      }
    }
    for (int r = 0; r < MR; ++r) {
      T* crow = c + static_cast<std::size_t>(r) * ldc + j;
      Tr::store(crow, Tr::add(Tr::load(crow), acc0[r]));
      Tr::store(crow + L, Tr::add(Tr::load(crow + L), acc1[r]));
    }
  }
  for (; j + L <= n; j += L) {
    V acc[MR];
    for (int r = 0; r < MR; ++r) acc[r] = Tr::zero();
    for (int p = 0; p < k; ++p) {
      const V bv = Tr::load(b + static_cast<std::size_t>(p) * ldb + j);
      for (int r = 0; r < MR; ++r) {
        const V av = Tr::set1(a[static_cast<std::size_t>(r) * a_rs +
                                static_cast<std::size_t>(p) * a_cs]);
        acc[r] = Tr::fmadd(av, bv, acc[r]);
      }
    }
    for (int r = 0; r < MR; ++r) {
      T* crow = c + static_cast<std::size_t>(r) * ldc + j;
      Tr::store(crow, Tr::add(Tr::load(crow), acc[r]));
    }
  }
  if (j < n) {
    for (int r = 0; r < MR; ++r) {
      T* crow = c + static_cast<std::size_t>(r) * ldc;
      for (int p = 0; p < k; ++p) {
        const T av = a[static_cast<std::size_t>(r) * a_rs + static_cast<std::size_t>(p) * a_cs];
        const T* brow = b + static_cast<std::size_t>(p) * ldb;
        for (int jj = j; jj < n; ++jj) crow[jj] += av * brow[jj];
      }
    }
  }
}

template <typename Tr>
void gemm_strided_a(int m, int n, int k, const typename Tr::T* a, int a_rs, int a_cs,
                    const typename Tr::T* b, int ldb, typename Tr::T* c, int ldc) {
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    tile_rows<Tr, 4>(n, k, a + static_cast<std::size_t>(i) * a_rs, a_rs, a_cs, b, ldb,
                     c + static_cast<std::size_t>(i) * ldc, ldc);
  }
  const std::size_t off = static_cast<std::size_t>(i);
  switch (m - i) {
    case 3: tile_rows<Tr, 3>(n, k, a + off * a_rs, a_rs, a_cs, b, ldb, c + off * ldc, ldc); break;
    case 2: tile_rows<Tr, 2>(n, k, a + off * a_rs, a_rs, a_cs, b, ldb, c + off * ldc, ldc); break;
    case 1: tile_rows<Tr, 1>(n, k, a + off * a_rs, a_rs, a_cs, b, ldb, c + off * ldc, ldc); break;
    default: break;
  }
}

template <typename Tr>
typename Tr::T dot(const typename Tr::T* x, const typename Tr::T* y, std::size_t n) {
  constexpr std::size_t L = Tr::kLanes;
  auto acc0 = Tr::zero();
  auto acc1 = Tr::zero();
  std::size_t i = 0;
  for (; i + 2 * L <= n; i += 2 * L) {
    acc0 = Tr::fmadd(Tr::load(x + i), Tr::load(y + i), acc0);
    acc1 = Tr::fmadd(Tr::load(x + i + L), Tr::load(y + i + L), acc1);
  }
  for (; i + L <= n; i += L) acc0 = Tr::fmadd(Tr::load(x + i), Tr::load(y + i), acc0);
  typename Tr::T s = Tr::hsum(Tr::add(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <typename Tr>
void axpy(std::size_t n, typename Tr::T alpha, const typename Tr::T* x, typename Tr::T* y) {
  constexpr std::size_t L = Tr::kLanes;
  const auto av = Tr::set1(alpha);
  std::size_t i = 0;
  for (; i + L <= n; i += L) Tr::store(y + i, Tr::fmadd(av, Tr::load(x + i), Tr::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const KernelTable<float> kFloat{&gemm_strided_a<F32>, &dot<F32>, &axpy<F32>};
const KernelTable<double> kDouble{&gemm_strided_a<F64>, &dot<F64>, &axpy<F64>};

}  // namespace svt::kernels::avx2

#else

#error "avx2.cpp must be compiled with -mavx2 -mfma"

#endif
