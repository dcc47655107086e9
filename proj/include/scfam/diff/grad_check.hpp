#pragma once

// Finite-difference gradient verification. The numeric side perturbs one
// input element at a time and evaluates the function twice (central
// differences); the analytic side is one backward() call. Relative error is
// |a - n| / max(1, |a|, |n|), which behaves like absolute error for small
// gradients and relative error for large ones.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "scfam/diff/tensor.hpp"

namespace scfam::diff {

struct GradCheckReport {
  bool pass = false;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::vector<double> analytic;
  std::vector<double> numeric;

  std::string summary() const {
    return std::string(pass ? "pass" : "FAIL") +
           " (max rel error " + std::to_string(max_rel_error) + " at element " +
           std::to_string(worst_index) + ")";
  }
};

/// Checks d f(x) / dx for a scalar-valued f at the given point.
inline GradCheckReport grad_check(
    const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
    double eps = 1e-5, double tol = 1e-4) {
  GradCheckReport report;

  Tensor probe = x.detached(true);
  Tensor y = f(probe);
  if (y.numel() != 1)
    throw std::invalid_argument("grad_check: function must be scalar-valued");
  backward(y);
  report.analytic = probe.grad();
  if (report.analytic.empty())  // x unreachable from y: gradient is zero
    report.analytic.assign(probe.data().size(), 0.0);

  report.numeric.resize(report.analytic.size());
  std::vector<double> base = x.data();
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> up = base;
    std::vector<double> dn = base;
    up[i] += eps;
    dn[i] -= eps;
    const double fu = f(Tensor::from_data(x.shape(), std::move(up))).value();
    const double fd = f(Tensor::from_data(x.shape(), std::move(dn))).value();
    report.numeric[i] = (fu - fd) / (2.0 * eps);
  }

  for (std::size_t i = 0; i < report.numeric.size(); ++i) {
    const double a = report.analytic[i];
    const double n = report.numeric[i];
    const double denom = std::max({1.0, std::fabs(a), std::fabs(n)});
    const double rel = std::fabs(a - n) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
    }
  }
  report.pass = report.max_rel_error <= tol;
  return report;
}

}  // namespace scfam::diff
