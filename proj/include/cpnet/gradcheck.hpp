#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "cpnet/rng.hpp"
#include "cpnet/tensor.hpp"

namespace cpnet {

struct GradcheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  // Coordinates checked per tensor; 0 checks all of them. Sampled coordinates
  // are drawn without replacement from a seeded stream.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

struct GradcheckReport {
  bool passed = true;
  std::size_t checked = 0;
  double max_abs_error = 0.0;
  // |analytic - numeric| / max(1, |analytic|, |numeric|), maximised over coordinates.
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares the reverse-mode gradient of a scalar function of `inputs` with
// central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps). `loss` is
// re-evaluated for every perturbation and must read the current values of the
// input tensors, which are perturbed in place and restored afterwards.
inline GradcheckReport gradcheck(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> inputs,
                                 const GradcheckOptions& options = {}) {
  for (auto& x : inputs) {
    x.set_requires_grad(true);
    x.clear_grad();
  }
  backward(loss());
  std::vector<std::vector<double>> analytic;
  for (auto& x : inputs) {
    if (x.has_grad()) {
      analytic.emplace_back(x.grad().begin(), x.grad().end());
    } else {
      analytic.emplace_back(static_cast<std::size_t>(x.numel()), 0.0);
    }
  }

  GradcheckReport report;
  Rng rng(options.seed);
  NoGradGuard no_grad;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto values = inputs[t].data();
    std::vector<std::size_t> coords(values.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (options.max_coords != 0 && options.max_coords < coords.size()) {
      rng.shuffle(std::span<std::size_t>(coords));
      coords.resize(options.max_coords);
      std::sort(coords.begin(), coords.end());
    }
    for (auto i : coords) {
      const double saved = values[i];
      values[i] = saved + options.eps;
      const double plus = loss().item();
      values[i] = saved - options.eps;
      const double minus = loss().item();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * options.eps);
      const double a = analytic[t][i];
      const double abs_err = std::abs(a - numeric);
      const double rel_err = abs_err / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++report.checked;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel_err > report.max_rel_error || !std::isfinite(rel_err)) {
        report.max_rel_error = rel_err;
        report.worst_tensor = t;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
      if (!(rel_err < options.tol)) report.passed = false;
    }
  }
  return report;
}

// Single-input convenience form: checks d f(x) / d x.
inline GradcheckReport gradcheck(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                                 const Tensor<double>& x, const GradcheckOptions& options = {}) {
  Tensor<double> leaf = x.clone();
  return gradcheck([&] { return f(leaf); }, {leaf}, options);
}

}  // namespace cpnet
