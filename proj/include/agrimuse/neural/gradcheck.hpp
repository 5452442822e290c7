#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>

#include "agrimuse/neural/tensor.hpp"

namespace agrimuse::nn {

/// |a - n| / max(|a|, |n|, floor). The floor keeps structurally zero
/// gradients (e.g. a bias feeding train-mode batchnorm) from turning
/// finite-difference roundoff into a large relative error.
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  Index checked = 0;
};

/// Compares each param's stored `grad` against central differences of
/// `loss` taken coordinate by coordinate. `loss` must read the current
/// param values and must not touch the stored grads. With eps = 1e-6 in
/// double precision the numeric derivative carries roughly 1e-9 of
/// roundoff, so relative errors are only resolvable above `floor` = 1e-5.
inline GradCheckResult gradient_check(const std::function<double()>& loss,
                                      std::span<Param<double>* const> params, double eps = 1e-6,
                                      double floor = 1e-5) {
  GradCheckResult res;
  for (auto* p : params) {
    for (Index i = 0; i < p->value.size(); ++i) {
      double& theta = p->value.data()[i];
      const double saved = theta;
      theta = saved + eps;
      const double up = loss();
      theta = saved - eps;
      const double down = loss();
      theta = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p->grad.data()[i];
      const double err = relative_error(analytic, numeric, floor);
      ++res.checked;
      if (err > res.max_rel_error || res.worst_index < 0) {
        res.max_rel_error = std::max(res.max_rel_error, err);
        res.worst_param = p->name;
        res.worst_index = i;
        res.analytic = analytic;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace agrimuse::nn
