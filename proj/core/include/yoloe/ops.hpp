#pragma once

#include <cstdint>
#include <vector>

#include "yoloe/tensor.hpp"

// Differentiable operators. Each op records itself on the active GradTape
// when any input requires a gradient; otherwise it is a plain computation.

namespace yoloe::inline YOLOE_PRECISION_NS {

// -- linear algebra ---------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);  // [MxK]·[KxN]
Tensor transpose(const Tensor& a);                // 2-D only

/// Cross-correlation (no kernel flip) of a CxHxW input with a
/// C_out x C_in x k x k kernel. `bias` may be undefined.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride, int padding);
inline Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride = 1, int padding = 0) {
  return conv2d(input, kernel, Tensor{}, stride, padding);
}

// -- elementwise ------------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, real s);
Tensor mul_scalar(const Tensor& a, real s);
/// a * s where s is a one-element tensor (e.g. a learned temperature).
Tensor scale(const Tensor& a, const Tensor& s);
/// x[MxN] + b[N] broadcast over rows.
Tensor add_row_bias(const Tensor& x, const Tensor& b);
Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor sqrt(const Tensor& x);

/// Elementwise -[t log max(s,eps) + (1-t) log max(1-s,eps)] with s = sigmoid(x),
/// eps = 1e-7. The gradient is exact for the clamped expression.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);
inline constexpr double kBceEps = 1e-7;

// -- normalisation ----------------------------------------------------------
/// x / max(||x||_2, 1e-12) along `axis`.
Tensor l2_normalize(const Tensor& x, int axis);
inline constexpr double kNormEps = 1e-12;
Tensor softmax(const Tensor& x, int axis);
/// Softmax along the last axis restricted to positions where mask != 0;
/// masked-out positions are exactly zero. `mask` holds one entry per position
/// of the last axis. An all-zero mask is a UsageError.
Tensor masked_softmax(const Tensor& x, const std::vector<std::uint8_t>& mask);

// -- shape ------------------------------------------------------------------
Tensor reshape(const Tensor& x, Shape shape);
/// Nearest-neighbour upsampling of a CxHxW tensor by an integer factor.
Tensor upsample_nearest(const Tensor& x, int factor);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, std::int64_t begin, std::int64_t end);
/// Rows of a 2-D tensor (or elements of a 1-D tensor) in the given order.
Tensor index_rows(const Tensor& x, const std::vector<std::int64_t>& rows);

// -- reductions -------------------------------------------------------------
Tensor reduce_sum(const Tensor& x, int axis);
Tensor reduce_mean(const Tensor& x, int axis);
Tensor reduce_max(const Tensor& x, int axis);
Tensor sum(const Tensor& x);   // -> [1]
Tensor mean(const Tensor& x);  // -> [1]

/// When enabled (the default), every op checks its output for NaN/Inf and
/// throws NumericError naming the op.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

}  // namespace yoloe::inline YOLOE_PRECISION_NS
