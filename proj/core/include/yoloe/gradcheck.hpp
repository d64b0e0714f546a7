#pragma once

#include <functional>

#include "yoloe/tensor.hpp"

namespace yoloe::inline YOLOE_PRECISION_NS {

struct GradCheckResult {
  double max_rel_error = 0;
  std::int64_t worst_index = -1;
  double analytic_at_worst = 0;
  double numeric_at_worst = 0;
};

/// Compares the tape gradient of scalar f at x against central differences
/// (f(x+h e_i) - f(x-h e_i)) / 2h. Per coordinate the error is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6); the maximum is
/// reported. A non-finite value anywhere yields an infinite error.
GradCheckResult finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                  double h = 1e-3);

}  // namespace yoloe::inline YOLOE_PRECISION_NS
