#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "followup/document.hpp"
#include "followup/model.hpp"
#include "followup/rng.hpp"

namespace followup::model {

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
};

// Compares analytic gradients against central finite differences on a random
// subsample of parameter coordinates. `loss_fn` must re-evaluate the loss
// deterministically for the current parameter values (double precision, no
// dropout). `analytic` must be aligned with `params` (same traversal order).
inline GradCheckResult grad_check(std::vector<ParamView<double>> params,
                                  std::vector<ParamView<double>> analytic,
                                  const std::function<double()>& loss_fn,
                                  double eps = 1e-4, int n_samples = 200,
                                  Rng* rng = nullptr) {
  Rng local(12345);
  if (!rng) rng = &local;
  long long total = 0;
  for (const auto& v : params) total += v.size();
  if (total == 0) {
    throw Error(ErrorCode::invalid_config, "no parameters to check");
  }

  GradCheckResult result;
  for (int s = 0; s < n_samples; ++s) {
    long long flat = static_cast<long long>(
        rng->uniform_u64(static_cast<std::uint64_t>(total)));
    std::size_t tensor = 0;
    while (flat >= params[tensor].size()) {
      flat -= params[tensor].size();
      ++tensor;
    }
    double* theta = params[tensor].data + flat;
    const double saved = *theta;

    *theta = saved + eps;
    const double up = loss_fn();
    *theta = saved - eps;
    const double down = loss_fn();
    *theta = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw Error(ErrorCode::other, "non-finite loss during gradient check");
    }

    const double numeric = (up - down) / (2.0 * eps);
    const double exact = analytic[tensor].data[flat];
    const double denom = std::max(std::abs(numeric), std::abs(exact));
    double rel = 0.0;
    if (denom > 1e-7) {
      rel = std::abs(numeric - exact) / denom;
    } else {
      rel = std::abs(numeric - exact);  // both ~zero: absolute error
    }
    result.max_rel_error = std::max(result.max_rel_error, rel);
    ++result.checked;
  }
  return result;
}

}  // namespace followup::model
