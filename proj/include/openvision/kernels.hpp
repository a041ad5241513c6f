#pragma once

#include <cstdint>

namespace openvision::kernels {

// Dense GEMM variants over row-major buffers. Reductions run in a fixed sequential
// order so results are bit-reproducible for identical inputs.

// c[m x n] (+)= a[m x k] * b[k x n]
template <typename T>
void gemm(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n,
          bool accumulate);

// c[m x n] (+)= a[m x k] * b[n x k]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n,
             bool accumulate);

// c[m x n] (+)= a[k x m]^T * b[k x n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n,
             bool accumulate);

}  // namespace openvision::kernels
