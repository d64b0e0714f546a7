#include "yoloe/aligner.hpp"

#include <cmath>

#include "yoloe/ops.hpp"
#include "yoloe/rng.hpp"

namespace yoloe::inline YOLOE_PRECISION_NS {

AuxAligner AuxAligner::create(std::int64_t dim, std::uint64_t seed, double out_scale) {
  if (dim < 1) throw ConfigError("aux aligner: dimension must be >= 1");
  const std::int64_t hidden = 2 * dim;
  AuxAligner a;
  std::vector<real> w1(static_cast<std::size_t>(dim * hidden));
  Rng r1(mix_seed(seed, "aux.w1"));
  const double b = std::sqrt(6.0 / static_cast<double>(dim));
  for (auto& v : w1) v = static_cast<real>(r1.uniform(-b, b));
  std::vector<real> w2(static_cast<std::size_t>(hidden * dim), real(0));
  if (out_scale != 0.0) {
    Rng r2(mix_seed(seed, "aux.w2"));
    const double b2 = out_scale / std::sqrt(static_cast<double>(hidden));
    for (auto& v : w2) v = static_cast<real>(r2.uniform(-b2, b2));
  }
  a.w1 = Tensor({dim, hidden}, std::move(w1), true);
  a.b1 = Tensor::zeros({hidden}, true);
  a.w2 = Tensor({hidden, dim}, std::move(w2), true);
  a.b2 = Tensor::zeros({dim}, true);
  return a;
}

std::vector<std::pair<std::string, Tensor>> AuxAligner::named_parameters() const {
  return {{"aux.w1", w1}, {"aux.b1", b1}, {"aux.w2", w2}, {"aux.b2", b2}};
}

void AuxAligner::set_requires_grad(bool on) {
  w1.set_requires_grad(on);
  b1.set_requires_grad(on);
  w2.set_requires_grad(on);
  b2.set_requires_grad(on);
}

Tensor AuxAligner::forward(const Tensor& prompts) const {
  if (prompts.rank() != 2 || prompts.dim(1) != dim()) {
    throw DimensionError("aux aligner: expected C x " + std::to_string(dim()) + " prompts, got " +
                         shape_str(prompts.shape()));
  }
  Tensor h = silu(add_row_bias(matmul(prompts, w1), b1));
  return add(prompts, add_row_bias(matmul(h, w2), b2));
}

Tensor reprta_refine(const Tensor& prompts, const AuxAligner& aux) { return l2_normalize(aux.forward(prompts), 1); }

}  // namespace yoloe::inline YOLOE_PRECISION_NS
