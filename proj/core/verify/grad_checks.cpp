// Built with YOLOE_REAL=double: every tensor here is 64-bit.
#include <algorithm>
#include <cmath>
#include <cstdio>

#include "yoloe/aligner.hpp"
#include "yoloe/gradcheck.hpp"
#include "yoloe/losses.hpp"
#include "yoloe/ops.hpp"
#include "yoloe/rng.hpp"
#include "yoloe/verify.hpp"

namespace yoloe::verify {

namespace {

constexpr double kStep = 1e-6;

Tensor uniform(Rng& rng, Shape shape, double lo, double hi) {
  std::vector<real> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

Tensor random_boxes(Rng& rng, std::int64_t n) {
  std::vector<real> v;
  for (std::int64_t i = 0; i < n; ++i) {
    const double x1 = rng.uniform(0, 40), y1 = rng.uniform(0, 40);
    v.insert(v.end(), {x1, y1, x1 + rng.uniform(2, 30), y1 + rng.uniform(2, 30)});
  }
  return Tensor({n, 4}, std::move(v));
}

double cls_instance(Rng& rng) {
  const auto N = rng.integer(1, 20), C = rng.integer(1, 4);
  std::vector<ClsTarget> pos;
  for (std::int64_t i = 0, k = rng.integer(0, std::min<std::int64_t>(N, 4)); i < k; ++i) {
    pos.push_back({rng.integer(0, N - 1), rng.integer(0, C - 1), rng.uniform(0.1, 1.0)});
  }
  const Tensor x = uniform(rng, {N, C}, -4, 4);
  return finite_diff_check([&](const Tensor& t) { return loss_cls(t, pos); }, x, kStep).max_rel_error;
}

double box_instance(Rng& rng) {
  const auto P = rng.integer(1, 8);
  const Tensor target = random_boxes(rng, P);
  // Predictions overlap their targets partially or not at all.
  const Tensor pred = add(target, uniform(rng, {P, 4}, -12, 12));
  std::vector<real> fixed(pred.data().begin(), pred.data().end());
  for (std::int64_t i = 0; i < P; ++i) {
    auto* b = &fixed[static_cast<std::size_t>(4 * i)];
    if (b[2] < b[0] + 1) b[2] = b[0] + 1 + rng.uniform(0, 3);
    if (b[3] < b[1] + 1) b[3] = b[1] + 1 + rng.uniform(0, 3);
  }
  return finite_diff_check([&](const Tensor& t) { return loss_box(t, target); }, Tensor({P, 4}, fixed), kStep)
      .max_rel_error;
}

double mask_instance(Rng& rng, bool dice) {
  const auto P = rng.integer(1, 3);
  const int H = static_cast<int>(rng.integer(4, 16)), W = static_cast<int>(rng.integer(4, 16));
  std::vector<MaskTarget> targets;
  for (std::int64_t p = 0; p < P; ++p) {
    MaskTarget t;
    t.height = H;
    t.width = W;
    t.coverage.resize(static_cast<std::size_t>(H * W));
    for (auto& c : t.coverage) {
      const double u = rng.uniform();
      c = u < 0.4 ? 0.0f : (u < 0.8 ? 1.0f : static_cast<float>(rng.uniform()));
    }
    const int x0 = static_cast<int>(rng.integer(0, W - 2)), y0 = static_cast<int>(rng.integer(0, H - 2));
    t.crop = {x0, y0, static_cast<int>(rng.integer(x0 + 1, W)), static_cast<int>(rng.integer(y0 + 1, H))};
    targets.push_back(std::move(t));
  }
  const Tensor x = uniform(rng, {P, static_cast<std::int64_t>(H) * W}, -3, 3);
  return finite_diff_check([&](const Tensor& t) { return loss_mask(t, targets, dice); }, x, kStep).max_rel_error;
}

// Gradient of the refine-path classification loss with respect to each
// aligner parameter in turn.
double refine_instance(Rng& rng, std::uint64_t seed) {
  const auto D = rng.integer(2, 8), C = rng.integer(1, 4), N = rng.integer(1, 20);
  const Tensor P = l2_normalize(uniform(rng, {C, D}, -1, 1), 1);
  const Tensor O = l2_normalize(uniform(rng, {N, D}, -1, 1), 1);
  const real tau = rng.uniform(1, 20);
  std::vector<ClsTarget> pos{{rng.integer(0, N - 1), rng.integer(0, C - 1), rng.uniform(0.2, 1.0)}};
  const AuxAligner base = AuxAligner::create(D, seed, 1.0);
  auto loss = [&](const AuxAligner& aux) {
    const Tensor refined = reprta_refine(P, aux);
    return loss_cls(mul_scalar(matmul(O, transpose(refined)), tau), pos);
  };
  double worst = 0;
  for (int which = 0; which < 4; ++which) {
    const Tensor start = which == 0 ? base.w1 : which == 1 ? base.b1 : which == 2 ? base.w2 : base.b2;
    // Biases start at zero; move them off it so every coordinate matters.
    const Tensor x = which % 2 == 1 ? uniform(rng, start.shape(), -0.5, 0.5) : start;
    auto f = [&](const Tensor& t) {
      AuxAligner a = base;
      (which == 0 ? a.w1 : which == 1 ? a.b1 : which == 2 ? a.w2 : a.b2) = t;
      return loss(a);
    };
    worst = std::max(worst, finite_diff_check(f, x, kStep).max_rel_error);
  }
  return worst;
}

}  // namespace

bool all_passed(const std::vector<CheckItem>& items) {
  return std::ranges::all_of(items, [](const CheckItem& c) { return c.passed; });
}

std::vector<GradSummary> gradient_suite(int instances, std::uint64_t seed) {
  std::vector<GradSummary> out;
  auto run = [&](const char* target, auto&& instance) {
    GradSummary s;
    s.target = target;
    s.instances = instances;
    for (int i = 0; i < instances; ++i) {
      Rng rng(mix_seed(seed, std::string(target) + "/" + std::to_string(i)));
      s.worst_rel_error = std::max(s.worst_rel_error, instance(rng, i));
    }
    out.push_back(s);
  };
  run("loss_cls", [](Rng& r, int) { return cls_instance(r); });
  run("loss_box", [](Rng& r, int) { return box_instance(r); });
  run("loss_mask_bce", [](Rng& r, int) { return mask_instance(r, false); });
  run("loss_mask_dice", [](Rng& r, int) { return mask_instance(r, true); });
  run("refine_theta", [&](Rng& r, int i) { return refine_instance(r, mix_seed(seed, "aux/" + std::to_string(i))); });
  return out;
}

std::vector<CheckItem> check_grads(int instances, std::uint64_t seed, double tolerance) {
  std::vector<CheckItem> items;
  for (const auto& s : gradient_suite(instances, seed)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%d instances, worst relative error %.3e (bound %.0e)", s.instances,
                  s.worst_rel_error, tolerance);
    items.push_back({"grad " + s.target, s.worst_rel_error <= tolerance, buf});
  }
  return items;
}

}  // namespace yoloe::verify
