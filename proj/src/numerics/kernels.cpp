#include "openvision/kernels.hpp"

#include <algorithm>
#include <vector>

namespace openvision::kernels {

template <typename T>
void gemm(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n,
          bool accumulate) {
  if (!accumulate) {
    std::fill(c, c + m * n, T(0));
  }
  for (std::int64_t i = 0; i < m; ++i) {
    T* __restrict crow = c + i * n;
    const T* arow = a + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      const T aip = arow[p];
      if (aip == T(0)) {
        continue;
      }
      const T* __restrict brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) {
        crow[j] += aip * brow[j];
      }
    }
  }
}

template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n,
             bool accumulate) {
  std::vector<T> bt(static_cast<std::size_t>(k * n));
  for (std::int64_t j = 0; j < n; ++j) {
    for (std::int64_t p = 0; p < k; ++p) {
      bt[static_cast<std::size_t>(p * n + j)] = b[j * k + p];
    }
  }
  gemm(a, bt.data(), c, m, k, n, accumulate);
}

template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n,
             bool accumulate) {
  if (!accumulate) {
    std::fill(c, c + m * n, T(0));
  }
  for (std::int64_t p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* __restrict brow = b + p * n;
    for (std::int64_t i = 0; i < m; ++i) {
      const T api = arow[i];
      if (api == T(0)) {
        continue;
      }
      T* __restrict crow = c + i * n;
      for (std::int64_t j = 0; j < n; ++j) {
        crow[j] += api * brow[j];
      }
    }
  }
}

template void gemm<float>(const float*, const float*, float*, std::int64_t, std::int64_t,
                          std::int64_t, bool);
template void gemm<double>(const double*, const double*, double*, std::int64_t, std::int64_t,
                           std::int64_t, bool);
template void gemm_nt<float>(const float*, const float*, float*, std::int64_t, std::int64_t,
                             std::int64_t, bool);
template void gemm_nt<double>(const double*, const double*, double*, std::int64_t, std::int64_t,
                              std::int64_t, bool);
template void gemm_tn<float>(const float*, const float*, float*, std::int64_t, std::int64_t,
                             std::int64_t, bool);
template void gemm_tn<double>(const double*, const double*, double*, std::int64_t, std::int64_t,
                              std::int64_t, bool);

}  // namespace openvision::kernels
