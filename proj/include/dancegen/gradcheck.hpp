#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dancegen/params.hpp"
#include "dancegen/tensor.hpp"

namespace dancegen {

struct GradCheckFailure {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  bool pass = false;
  double max_rel_err = 0.0;
  std::size_t coords_checked = 0;
  std::vector<GradCheckFailure> failures;
};

// Compares analytic gradients against central finite differences for every
// coordinate of every parameter in `leaves`. `build_loss` must rebuild the
// scalar loss graph from the current leaf values each time it is called.
// Relative error uses the max(|analytic|, |numeric|, 1) denominator so that
// near-zero gradients are compared absolutely.
inline GradCheckReport grad_check(const std::function<Tensor()>& build_loss, ParamSet& leaves,
                                  double h = 1e-5, double tol = 1e-4) {
  if (h <= 0.0) throw Error("grad_check: step h must be positive");

  leaves.zero_grad();
  Tensor loss = build_loss();
  if (loss.size() != 1)
    throw ShapeError("grad_check: build_loss must produce a scalar, got " +
                     std::to_string(loss.size()) + " elements");
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.count());
  for (const auto& [_, p] : leaves.items()) analytic.push_back(p.grad());

  GradCheckReport report;
  std::size_t param_idx = 0;
  for (const auto& [name, p] : leaves.items()) {
    auto& values = p.node()->value;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      double f_plus;
      {
        NoGradGuard no_grad;
        f_plus = build_loss().scalar_value();
      }
      values[i] = saved - h;
      double f_minus;
      {
        NoGradGuard no_grad;
        f_minus = build_loss().scalar_value();
      }
      values[i] = saved;

      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double an = analytic[param_idx][i];
      const double denom = std::max({std::fabs(an), std::fabs(numeric), 1.0});
      const double rel = std::fabs(an - numeric) / denom;
      report.max_rel_err = std::max(report.max_rel_err, rel);
      ++report.coords_checked;
      if (rel > tol) report.failures.push_back({name, i, an, numeric, rel});
    }
    ++param_idx;
  }
  report.pass = report.failures.empty();
  return report;
}

}  // namespace dancegen
