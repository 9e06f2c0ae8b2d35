// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string_view>

// Dense arithmetic kernels used by the backbone. Every kernel has a portable
// scalar reference and an AVX2/FMA variant; the variant is chosen once at
// runtime from CPUID and may be overridden with SVT_KERNELS=scalar or
// set_backend(). All matrices are row-major with explicit leading dimensions.
//
// The gemm family accumulates: C += op(A) * op(B).

namespace svt::kernels {

enum class Backend { kScalar, kAvx2 };

bool avx2_supported();
Backend active_backend();
/// Throws svt::UsageError when the requested backend is not supported here.
void set_backend(Backend backend);
std::string_view backend_name(Backend backend);

/// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(int m, int n, int k, const float* a, int lda, const float* b, int ldb,
             float* c, int ldc);
void gemm_nn(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
             double* c, int ldc);

/// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt(int m, int n, int k, const float* a, int lda, const float* b, int ldb,
             float* c, int ldc);
void gemm_nt(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
             double* c, int ldc);

/// C[m x n] += A[k x m]^T * B[k x n]
void gemm_tn(int m, int n, int k, const float* a, int lda, const float* b, int ldb,
             float* c, int ldc);
void gemm_tn(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
             double* c, int ldc);

float dot(const float* x, const float* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);

/// y += alpha * x
void axpy(std::size_t n, float alpha, const float* x, float* y);
void axpy(std::size_t n, double alpha, const double* x, double* y);

}  // namespace svt::kernels
