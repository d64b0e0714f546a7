#include "yoloe/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "yoloe/autograd.hpp"
#include "yoloe/ops.hpp"

namespace yoloe::inline YOLOE_PRECISION_NS {

namespace {

struct FiniteChecksOff {
  bool saved = finite_checks_enabled();
  FiniteChecksOff() { set_finite_checks(false); }
  ~FiniteChecksOff() { set_finite_checks(saved); }
};

double eval(const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
  NoGradGuard guard;
  Tensor y = f(x);
  return static_cast<double>(y.item());
}

}  // namespace

GradCheckResult finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  GradCheckResult result;
  const FiniteChecksOff off;

  std::vector<real> analytic;
  {
    Tensor leaf = x.detach();
    leaf.set_requires_grad(true);
    GradTape tape;
    Tensor y = f(leaf);
    tape.backward(y);
    auto g = leaf.grad();
    analytic.assign(g.begin(), g.end());
  }

  Tensor probe = x.detach();
  auto data = probe.mutable_data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const real saved = data[i];
    data[i] = static_cast<real>(saved + h);
    const double fp = eval(f, probe);
    data[i] = static_cast<real>(saved - h);
    const double fm = eval(f, probe);
    data[i] = saved;
    // The step actually taken after rounding to `real`.
    const double step = static_cast<double>(static_cast<real>(saved + h)) - static_cast<double>(static_cast<real>(saved - h));
    const double numeric = (fp - fm) / step;
    const double a = static_cast<double>(analytic[i]);
    double err;
    if (!std::isfinite(numeric) || !std::isfinite(a)) {
      err = std::numeric_limits<double>::infinity();
    } else {
      err = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-6});
    }
    if (err > result.max_rel_error || result.worst_index < 0) {
      result.max_rel_error = err;
      result.worst_index = static_cast<std::int64_t>(i);
      result.analytic_at_worst = a;
      result.numeric_at_worst = numeric;
    }
  }
  return result;
}

}  // namespace yoloe::inline YOLOE_PRECISION_NS
