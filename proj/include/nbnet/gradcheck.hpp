#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nbnet/rng.hpp"
#include "nbnet/tensor.hpp"

// Central finite-difference check of analytic gradients. Meant to run in
// 64-bit mode only; at float precision the differences drown in roundoff.

namespace nbnet {

struct GradCheckOptions {
  double h_scale = 1e-5;      // step: h = h_scale * max(1, |x_i|)
  double tolerance = 1e-4;    // max relative error allowed
  int64_t max_coords = 0;     // 0 = check every coordinate; else sample
  uint64_t sample_seed = 17;
};

struct GradCheckInputReport {
  std::string name;
  double max_rel_error = 0.0;
  int64_t checked_coords = 0;
};

struct GradCheckReport {
  std::vector<GradCheckInputReport> inputs;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Compares analytic gradients of `fn` (a scalar-valued function of the given
/// inputs) against central finite differences. Inputs must already have
/// requires_grad set. Relative error per coordinate is
/// |a - n| / max(|a|, |n|, 1e-6 * g_max) with g_max the largest gradient
/// magnitude seen for that input; coordinates where both sides vanish count
/// as zero error.
inline GradCheckReport gradcheck(
    const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& fn,
    std::vector<Tensor<double>> inputs, std::vector<std::string> names,
    const GradCheckOptions& opt = {}) {
  GradCheckReport report;
  report.tolerance = opt.tolerance;

  // Work on detached copies so caller tensors keep no gradient state.
  for (auto& in : inputs) {
    in = in.detached_copy();
    in.set_requires_grad(true);
  }
  Tensor<double> loss = fn(inputs);
  backward(loss);

  SequentialRng pick(opt.sample_seed);
  for (size_t t = 0; t < inputs.size(); ++t) {
    auto& x = inputs[t];
    GradCheckInputReport ir;
    ir.name = t < names.size() ? names[t] : "input" + std::to_string(t);

    std::vector<double> analytic(x.numel(), 0.0);
    if (x.has_grad())
      std::copy(x.grad().begin(), x.grad().end(), analytic.begin());

    std::vector<int64_t> coords;
    if (opt.max_coords > 0 && x.numel() > opt.max_coords) {
      for (int64_t k = 0; k < opt.max_coords; ++k)
        coords.push_back(static_cast<int64_t>(
            pick.uniform_int(static_cast<uint64_t>(x.numel()))));
    } else {
      coords.resize(x.numel());
      for (int64_t k = 0; k < x.numel(); ++k) coords[k] = k;
    }

    std::vector<double> numeric(coords.size(), 0.0);
    for (size_t k = 0; k < coords.size(); ++k) {
      const int64_t i = coords[k];
      const double x0 = x.data()[i];
      const double h = opt.h_scale * std::max(1.0, std::abs(x0));
      x.mutable_data()[i] = x0 + h;
      const double fp = fn(inputs).item();
      x.mutable_data()[i] = x0 - h;
      const double fm = fn(inputs).item();
      x.mutable_data()[i] = x0;
      numeric[k] = (fp - fm) / (2.0 * h);
    }

    double g_max = 0.0;
    for (size_t k = 0; k < coords.size(); ++k)
      g_max = std::max(g_max, std::max(std::abs(analytic[coords[k]]),
                                       std::abs(numeric[k])));
    const double floor = std::max(1e-6 * g_max, 1e-300);
    for (size_t k = 0; k < coords.size(); ++k) {
      const double a = analytic[coords[k]], n = numeric[k];
      const double denom = std::max({std::abs(a), std::abs(n), floor});
      const double rel = (a == n) ? 0.0 : std::abs(a - n) / denom;
      ir.max_rel_error = std::max(ir.max_rel_error, rel);
    }
    ir.checked_coords = static_cast<int64_t>(coords.size());
    report.max_rel_error = std::max(report.max_rel_error, ir.max_rel_error);
    report.inputs.push_back(std::move(ir));
  }
  report.passed = report.max_rel_error < opt.tolerance;
  return report;
}

}  // namespace nbnet
