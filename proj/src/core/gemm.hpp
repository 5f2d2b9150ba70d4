#pragma once

#include <cstdint>

namespace masknet {

// Single-threaded row-major float GEMM kernels. Deterministic: accumulation
// order is fixed for a given problem size regardless of build options other
// than MASKNET_GEMM_ACC64 (which widens the accumulator for test builds).

// C (m x n) = A (m x k) * B (k x n), or += when accumulate is set.
void sgemm(int64_t m, int64_t n, int64_t k,
           const float* a, int64_t lda,
           const float* b, int64_t ldb,
           float* c, int64_t ldc,
           bool accumulate = false);

// C (m x n) = A (m x k) * B^T where B is (n x k), or += when accumulate is set.
void sgemm_abt(int64_t m, int64_t n, int64_t k,
               const float* a, int64_t lda,
               const float* b, int64_t ldb,
               float* c, int64_t ldc,
               bool accumulate = false);

// dst (cols x rows) = src (rows x cols)^T
void transpose(int64_t rows, int64_t cols,
               const float* src, int64_t lds,
               float* dst, int64_t ldd);

} // namespace masknet
