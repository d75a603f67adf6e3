#pragma once

// Central-difference gradient checking for scalar functions of one tensor.
// The function is re-invoked per perturbed coordinate, so it must rebuild
// its graph on every call.

#include <functional>
#include <vector>

#include "hoi/diff/tensor.hpp"

namespace hoi::diff {

struct GradCheckResult {
  double max_rel_err = 0.0;
  int64_t worst_index = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// fn must return a scalar tensor.  Relative error per coordinate is
// |analytic - numeric| / max(1, |numeric|).
inline GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& fn,
                                  const std::vector<double>& x0, const Shape& shape,
                                  double step = 1e-5) {
  Tensor x = Tensor::param(x0, shape);
  Tensor y = fn(x);
  if (y.numel() != 1) fail("grad_check: fn must return a scalar");
  backward(y);
  std::vector<double> analytic = x.grad();

  GradCheckResult res;
  for (size_t i = 0; i < x0.size(); ++i) {
    std::vector<double> xp = x0, xm = x0;
    xp[i] += step;
    xm[i] -= step;
    double fp = fn(Tensor::from(xp, shape)).item();
    double fm = fn(Tensor::from(xm, shape)).item();
    double numeric = (fp - fm) / (2.0 * step);
    if (!std::isfinite(numeric))
      fail_numeric(str_cat("grad_check: non-finite numeric gradient at coordinate ", i));
    double rel = std::fabs(analytic[i] - numeric) / std::max(1.0, std::fabs(numeric));
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_index = static_cast<int64_t>(i);
      res.analytic_at_worst = analytic[i];
      res.numeric_at_worst = numeric;
    }
  }
  return res;
}

// Variant that checks only the listed coordinates (for large parameter
// vectors where full central differencing is wasteful).
inline GradCheckResult grad_check_coords(const std::function<Tensor(const Tensor&)>& fn,
                                         const std::vector<double>& x0, const Shape& shape,
                                         const std::vector<int64_t>& coords, double step = 1e-5) {
  Tensor x = Tensor::param(x0, shape);
  Tensor y = fn(x);
  if (y.numel() != 1) fail("grad_check: fn must return a scalar");
  backward(y);
  std::vector<double> analytic = x.grad();

  GradCheckResult res;
  for (int64_t ci : coords) {
    size_t i = static_cast<size_t>(ci);
    std::vector<double> xp = x0, xm = x0;
    xp[i] += step;
    xm[i] -= step;
    double fp = fn(Tensor::from(xp, shape)).item();
    double fm = fn(Tensor::from(xm, shape)).item();
    double numeric = (fp - fm) / (2.0 * step);
    if (!std::isfinite(numeric))
      fail_numeric(str_cat("grad_check: non-finite numeric gradient at coordinate ", i));
    double rel = std::fabs(analytic[i] - numeric) / std::max(1.0, std::fabs(numeric));
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_index = ci;
      res.analytic_at_worst = analytic[i];
      res.numeric_at_worst = numeric;
    }
  }
  return res;
}

}  // namespace hoi::diff
