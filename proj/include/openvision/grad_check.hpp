#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "openvision/params.hpp"

namespace openvision {

struct TensorGradCheck {
  std::string name;
  std::int64_t probes = 0;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  bool pass = true;
};

struct GradReport {
  std::vector<TensorGradCheck> tensors;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  bool pass = true;

  std::string to_string() const;
};

// Evaluates the loss at the current parameter values. When `with_grad` is true
// the callee runs backward(), accumulating into Parameter::grad (the checker
// zeroes gradients before the call).
using LossFn = std::function<double(ParameterStore<double>& params, bool with_grad)>;

struct GradCheckOptions {
  std::int64_t probes_per_tensor = 16;  // <= 0 checks every coordinate
  double step = 3e-4;                   // central-difference h, must lie in [1e-5, 1e-3]
  double tolerance = 1e-3;              // max relative error
  std::uint64_t seed = 0;
};

// Relative error |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

// Compares analytic gradients against (f(x+h) - f(x-h)) / 2h at randomly chosen
// coordinates of every trainable tensor. Throws ErrorKind::determinism when two
// identical forward passes disagree.
GradReport grad_check(const LossFn& loss_fn, ParameterStore<double>& params,
                      const GradCheckOptions& options = {});

}  // namespace openvision
