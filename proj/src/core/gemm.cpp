#include "core/gemm.hpp"

#include <algorithm>
#include <cstring>

namespace masknet {

namespace {

#ifdef MASKNET_GEMM_ACC64
using acc_t = double;
#else
using acc_t = float;
#endif

// Panel width for the streaming kernel: four C rows of this many floats stay
// resident in L1 while the k loop runs.
constexpr int64_t kJBlock = 512;

void sgemm_rows1(int64_t n0, int64_t n1, int64_t k,
                 const float* a,
                 const float* b, int64_t ldb,
                 float* c) {
    for (int64_t kk = 0; kk < k; ++kk) {
        const float a0 = a[kk];
        const float* br = b + kk * ldb;
        for (int64_t j = n0; j < n1; ++j)
            c[j] += a0 * br[j];
    }
}

} // namespace

void sgemm(int64_t m, int64_t n, int64_t k,
           const float* a, int64_t lda,
           const float* b, int64_t ldb,
           float* c, int64_t ldc,
           bool accumulate) {
#ifdef MASKNET_GEMM_ACC64
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            double s = accumulate ? static_cast<double>(c[i * ldc + j]) : 0.0;
            for (int64_t kk = 0; kk < k; ++kk)
                s += static_cast<double>(a[i * lda + kk]) * static_cast<double>(b[kk * ldb + j]);
            c[i * ldc + j] = static_cast<float>(s);
        }
    }
    return;
#endif
    if (!accumulate)
        for (int64_t i = 0; i < m; ++i)
            std::memset(c + i * ldc, 0, static_cast<size_t>(n) * sizeof(float));

    for (int64_t j0 = 0; j0 < n; j0 += kJBlock) {
        const int64_t j1 = std::min(n, j0 + kJBlock);
        int64_t i = 0;
        for (; i + 4 <= m; i += 4) {
            float* c0 = c + i * ldc;
            float* c1 = c0 + ldc;
            float* c2 = c1 + ldc;
            float* c3 = c2 + ldc;
            const float* a0 = a + i * lda;
            const float* a1 = a0 + lda;
            const float* a2 = a1 + lda;
            const float* a3 = a2 + lda;
            for (int64_t kk = 0; kk < k; ++kk) {
                const float v0 = a0[kk], v1 = a1[kk], v2 = a2[kk], v3 = a3[kk];
                const float* br = b + kk * ldb;
                for (int64_t j = j0; j < j1; ++j) {
                    const float bv = br[j];
                    c0[j] += v0 * bv;
                    c1[j] += v1 * bv;
                    c2[j] += v2 * bv;
                    c3[j] += v3 * bv;
                }
            }
        }
        for (; i < m; ++i)
            sgemm_rows1(j0, j1, k, a + i * lda, b, ldb, c + i * ldc);
    }
}

void sgemm_abt(int64_t m, int64_t n, int64_t k,
               const float* a, int64_t lda,
               const float* b, int64_t ldb,
               float* c, int64_t ldc,
               bool accumulate) {
    constexpr int64_t lanes = 8;
    for (int64_t i = 0; i < m; ++i) {
        const float* ar = a + i * lda;
        float* cr = c + i * ldc;
        for (int64_t j = 0; j < n; ++j) {
            const float* br = b + j * ldb;
            acc_t lane[lanes] = {};
            int64_t kk = 0;
            for (; kk + lanes <= k; kk += lanes)
                for (int64_t l = 0; l < lanes; ++l)
                    lane[l] += static_cast<acc_t>(ar[kk + l]) * static_cast<acc_t>(br[kk + l]);
            acc_t s = 0;
            for (int64_t l = 0; l < lanes; ++l) s += lane[l];
            for (; kk < k; ++kk)
                s += static_cast<acc_t>(ar[kk]) * static_cast<acc_t>(br[kk]);
            cr[j] = static_cast<float>(accumulate ? cr[j] + s : s);
        }
    }
}

void transpose(int64_t rows, int64_t cols,
               const float* src, int64_t lds,
               float* dst, int64_t ldd) {
    for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < cols; ++j)
            dst[j * ldd + i] = src[i * lds + j];
}

} // namespace masknet
