#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "yoloe/tensor.hpp"

namespace yoloe::inline YOLOE_PRECISION_NS {

/// Residual two-layer perceptron refining prompt rows during training:
/// f(P) = P + SiLU(P W1 + b1) W2 + b2, with W1: D x 2D and W2: 2D x D.
struct AuxAligner {
  Tensor w1, b1, w2, b2;

  /// He-uniform W1, zero biases. W2 is drawn uniformly in +-out_scale/sqrt(2D)
  /// (zero by default, making the aligner an exact identity at start).
  static AuxAligner create(std::int64_t dim, std::uint64_t seed, double out_scale = 0.0);

  std::int64_t dim() const { return w1.dim(0); }
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  void set_requires_grad(bool on);

  /// P + MLP(P), rows not yet normalised.
  Tensor forward(const Tensor& prompts) const;
};

/// Refined prompt rows normalize(P + MLP(P)), C x D.
Tensor reprta_refine(const Tensor& prompts, const AuxAligner& aux);

}  // namespace yoloe::inline YOLOE_PRECISION_NS
