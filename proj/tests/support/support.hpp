#pragma once

#include <gtest/gtest.h>

#include <functional>
#include <string>

#include "openvision/dataset.hpp"
#include "openvision/error.hpp"
#include "openvision/model.hpp"
#include "openvision/probe.hpp"
#include "openvision/rng.hpp"

namespace openvision::testing {

inline ::testing::AssertionResult throws_kind(const std::function<void()>& fn, ErrorKind kind) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.kind() == kind) {
      return ::testing::AssertionSuccess();
    }
    return ::testing::AssertionFailure()
           << "threw " << to_string(e.kind()) << " (" << e.what() << "), wanted " << to_string(kind);
  }
  return ::testing::AssertionFailure() << "did not throw";
}

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) {
    v = static_cast<T>(rng.normal() * scale);
  }
  return t;
}

template <typename T>
Tensor<T> random_unit_rows(std::int64_t rows, std::int64_t cols, std::uint64_t seed) {
  auto t = random_tensor<T>({rows, cols}, seed);
  for (std::int64_t r = 0; r < rows; ++r) {
    double sq = 0;
    for (T v : t.row(r)) {
      sq += static_cast<double>(v) * v;
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (T& v : t.row(r)) {
      v = static_cast<T>(v * inv);
    }
  }
  return t;
}

// Probe records rendered straight at the model resolution.
template <typename T>
TrainBatch<T> probe_batch(int n, int resolution, std::uint64_t seed) {
  const auto records = gen_probe_dataset(seed, n, resolution);
  return make_train_batch<T>(records, resolution);
}

}  // namespace openvision::testing
