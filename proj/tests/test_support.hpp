#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "akd/rng.hpp"
#include "akd/tensor.hpp"

namespace akd::testing {

inline std::vector<double> random_values(int64_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

/// Bumps every entry away from relu/max-pool kinks so central differences
/// stay on one side of the nonlinearity.
inline void push_off_kinks(std::vector<double>& v, double margin = 5e-3) {
  for (double& x : v)
    if (std::abs(x) < margin) x = x < 0 ? -margin : margin;
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  int64_t checked = 0;
};

/// Central finite differences against the analytic gradient. loss_fn must
/// rebuild the graph from the tensor's current values on every call and
/// return the scalar loss; grads are read after one analytic backward.
inline GradCheckResult grad_check(
    Tensor param, const std::function<double()>& loss_fn,
    const std::function<std::vector<double>()>& analytic_grad_fn, double h = 1e-5) {
  std::vector<double> analytic = analytic_grad_fn();
  GradCheckResult result;
  for (int64_t i = 0; i < param.numel(); ++i) {
    double saved = param.data()[i];
    param.data()[i] = saved + h;
    double up = loss_fn();
    param.data()[i] = saved - h;
    double down = loss_fn();
    param.data()[i] = saved;
    double fd = (up - down) / (2.0 * h);
    double rel = std::abs(analytic[static_cast<size_t>(i)] - fd) /
                 std::max(1.0, std::abs(analytic[static_cast<size_t>(i)]));
    result.max_rel_err = std::max(result.max_rel_err, rel);
    ++result.checked;
  }
  return result;
}

}  // namespace akd::testing
