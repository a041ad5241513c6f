#include "openvision/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "openvision/rng.hpp"

namespace openvision {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

std::string GradReport::to_string() const {
  std::ostringstream os;
  os.precision(3);
  for (const auto& t : tensors) {
    os << (t.pass ? "ok   " : "FAIL ") << t.name << " probes=" << t.probes
       << " max_abs=" << std::scientific << t.max_abs_error << " max_rel=" << t.max_rel_error
       << std::defaultfloat << "\n";
  }
  os << "max_abs=" << std::scientific << max_abs_error << " max_rel=" << max_rel_error
     << std::defaultfloat << (pass ? " PASS" : " FAIL") << "\n";
  return os.str();
}

namespace {

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

}  // namespace

GradReport grad_check(const LossFn& loss_fn, ParameterStore<double>& params,
                      const GradCheckOptions& options) {
  require(options.step >= 1e-5 && options.step <= 1e-3, ErrorKind::contract,
          "finite-difference step must lie in [1e-5, 1e-3]");

  params.zero_grad();
  const double base = loss_fn(params, true);
  const double again = loss_fn(params, false);
  require(same_bits(base, again), ErrorKind::determinism,
          "loss function is not deterministic: two forward passes disagree");
  require(std::isfinite(base), ErrorKind::numeric, "loss is not finite");

  // Snapshot analytic gradients before the probes overwrite nothing but values.
  std::vector<std::pair<std::string, Tensor<double>>> analytic;
  for (auto& [name, p] : params) {
    if (p.trainable) {
      analytic.emplace_back(name, p.grad.shape() == p.value.shape()
                                      ? p.grad
                                      : Tensor<double>(p.value.shape()));
    }
  }

  Rng rng(mix_seed(options.seed, 0x67726164));
  GradReport report;
  for (auto& [name, grad] : analytic) {
    Parameter<double>& p = params.at(name);
    const std::int64_t n = p.value.size();
    std::vector<std::int64_t> coords;
    if (options.probes_per_tensor <= 0 || options.probes_per_tensor >= n) {
      coords.resize(static_cast<std::size_t>(n));
      std::iota(coords.begin(), coords.end(), 0);
    } else {
      for (std::int64_t i = 0; i < options.probes_per_tensor; ++i) {
        coords.push_back(static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(n))));
      }
    }
    TensorGradCheck entry;
    entry.name = name;
    entry.probes = static_cast<std::int64_t>(coords.size());
    for (auto c : coords) {
      const double saved = p.value[c];
      p.value[c] = saved + options.step;
      const double plus = loss_fn(params, false);
      p.value[c] = saved - options.step;
      const double minus = loss_fn(params, false);
      p.value[c] = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double a = grad[c];
      entry.max_abs_error = std::max(entry.max_abs_error, std::abs(a - numeric));
      entry.max_rel_error = std::max(entry.max_rel_error, relative_error(a, numeric));
    }
    entry.pass = entry.max_rel_error < options.tolerance;
    report.max_abs_error = std::max(report.max_abs_error, entry.max_abs_error);
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.pass = report.pass && entry.pass;
    report.tensors.push_back(std::move(entry));
  }
  return report;
}

}  // namespace openvision
