// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <string>
#include <vector>

#include "kernels_impl.hpp"
#include "svt/common.hpp"
#include "svt/kernels.hpp"

namespace svt::kernels {
namespace {

Backend detect() {
  if (const char* env = std::getenv("SVT_KERNELS")) {
    if (std::string(env) == "scalar") return Backend::kScalar;
  }
  return avx2_supported() ? Backend::kAvx2 : Backend::kScalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> backend{detect()};
  return backend;
}

template <typename T>
const KernelTable<T>& table();

template <>
const KernelTable<float>& table<float>() {
#if defined(SVT_HAVE_AVX2_KERNELS)
  if (current().load(std::memory_order_relaxed) == Backend::kAvx2) return avx2::kFloat;
#endif
  return scalar::kFloat;
}

template <>
const KernelTable<double>& table<double>() {
#if defined(SVT_HAVE_AVX2_KERNELS)
  if (current().load(std::memory_order_relaxed) == Backend::kAvx2) return avx2::kDouble;
#endif
  return scalar::kDouble;
}

template <typename T>
std::vector<T>& pack_buffer() {
  thread_local std::vector<T> buffer;
  return buffer;
}

template <typename T>
void gemm_nt_impl(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c,
                  int ldc) {
  if (m <= 0 || n <= 0 || k <= 0) return;
  // Transpose B (n x k) into a contiguous k x n panel, then run the nn kernel.
  auto& panel = pack_buffer<T>();
  panel.resize(static_cast<std::size_t>(k) * n);
  for (int j = 0; j < n; ++j) {
    const T* brow = b + static_cast<std::size_t>(j) * ldb;
    for (int p = 0; p < k; ++p) panel[static_cast<std::size_t>(p) * n + j] = brow[p];
  }
  table<T>().gemm_strided_a(m, n, k, a, lda, 1, panel.data(), n, c, ldc);
}

}  // namespace

bool avx2_supported() {
#if defined(SVT_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend active_backend() { return current().load(); }

void set_backend(Backend backend) {
  if (backend == Backend::kAvx2 && !avx2_supported()) {
    throw UsageError("AVX2/FMA kernels are not supported on this CPU");
  }
  current().store(backend);
}

std::string_view backend_name(Backend backend) {
  return backend == Backend::kAvx2 ? "avx2" : "scalar";
}

void gemm_nn(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
             int ldc) {
  if (m <= 0 || n <= 0 || k <= 0) return;
  table<float>().gemm_strided_a(m, n, k, a, lda, 1, b, ldb, c, ldc);
}
void gemm_nn(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
             double* c, int ldc) {
  if (m <= 0 || n <= 0 || k <= 0) return;
  table<double>().gemm_strided_a(m, n, k, a, lda, 1, b, ldb, c, ldc);
}

void gemm_nt(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
             int ldc) {
  gemm_nt_impl(m, n, k, a, lda, b, ldb, c, ldc);
}
void gemm_nt(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
             double* c, int ldc) {
  gemm_nt_impl(m, n, k, a, lda, b, ldb, c, ldc);
}

void gemm_tn(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
             int ldc) {
  if (m <= 0 || n <= 0 || k <= 0) return;
  table<float>().gemm_strided_a(m, n, k, a, 1, lda, b, ldb, c, ldc);
}
void gemm_tn(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
             double* c, int ldc) {
  if (m <= 0 || n <= 0 || k <= 0) return;
  table<double>().gemm_strided_a(m, n, k, a, 1, lda, b, ldb, c, ldc);
}

float dot(const float* x, const float* y, std::size_t n) { return table<float>().dot(x, y, n); }
double dot(const double* x, const double* y, std::size_t n) {
  return table<double>().dot(x, y, n);
}

void axpy(std::size_t n, float alpha, const float* x, float* y) {
  table<float>().axpy(n, alpha, x, y);
}
void axpy(std::size_t n, double alpha, const double* x, double* y) {
  table<double>().axpy(n, alpha, x, y);
}

}  // namespace svt::kernels
