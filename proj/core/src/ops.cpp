#include "yoloe/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "kernels.hpp"
#include "yoloe/autograd.hpp"
#include "yoloe/flops.hpp"

namespace yoloe::inline YOLOE_PRECISION_NS {

namespace {

bool g_finite_checks = true;

using Buffer = std::vector<real>;

Tensor new_tensor(Shape shape, Buffer data) { return Tensor(std::move(shape), std::move(data)); }

void finish(const char* op, const Tensor& out, std::uint64_t flops) {
  add_flops(flops);
  if (g_finite_checks) check_finite(out.data(), op);
}

int normalize_axis(int axis, int rank, const char* op) {
  int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  }
  return a;
}

struct AxisSplit {
  std::int64_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[static_cast<std::size_t>(i)];
  r.n = s[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

real sigmoid_scalar(real x) {
  if (x >= 0) return real(1) / (real(1) + std::exp(-x));
  const real e = std::exp(x);
  return e / (real(1) + e);
}

real softplus_scalar(real x) { return std::log1p(std::exp(-std::fabs(x))) + std::max(x, real(0)); }

// Unary elementwise op with derivative expressed through input and output.
template <typename F, typename D>
Tensor unary(const char* op, const Tensor& x, F f, D dfdx) {
  auto xd = x.data();
  Buffer out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
  Tensor y = new_tensor(x.shape(), std::move(out));
  finish(op, y, xd.size());
  if (should_record({&x})) {
    auto yi = y.impl();
    GradTape::active()->record(op, {x}, y, [x, yi, dfdx](std::span<const real> g) {
      auto xs = x.data();
      auto& gx = x.impl()->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(xs[i], yi->data[i]);
    });
  }
  return y;
}

enum class BinaryKind { kAdd, kSub, kMul, kDiv, kMin, kMax };

Tensor binary(const char* op, const Tensor& a, const Tensor& b, BinaryKind kind) {
  require_same_shape(a, b, op);
  auto ad = a.data();
  auto bd = b.data();
  Buffer out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) {
    switch (kind) {
      case BinaryKind::kAdd: out[i] = ad[i] + bd[i]; break;
      case BinaryKind::kSub: out[i] = ad[i] - bd[i]; break;
      case BinaryKind::kMul: out[i] = ad[i] * bd[i]; break;
      case BinaryKind::kDiv: out[i] = ad[i] / bd[i]; break;
      case BinaryKind::kMin: out[i] = std::min(ad[i], bd[i]); break;
      case BinaryKind::kMax: out[i] = std::max(ad[i], bd[i]); break;
    }
  }
  Tensor y = new_tensor(a.shape(), std::move(out));
  finish(op, y, ad.size());
  if (should_record({&a, &b})) {
    GradTape::active()->record(op, {a, b}, y, [a, b, kind](std::span<const real> g) {
      auto av = a.data();
      auto bv = b.data();
      const bool ga = a.requires_grad();
      const bool gb = b.requires_grad();
      real* da = ga ? a.impl()->grad_buffer().data() : nullptr;
      real* db = gb ? b.impl()->grad_buffer().data() : nullptr;
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (kind) {
          case BinaryKind::kAdd:
            if (ga) da[i] += g[i];
            if (gb) db[i] += g[i];
            break;
          case BinaryKind::kSub:
            if (ga) da[i] += g[i];
            if (gb) db[i] -= g[i];
            break;
          case BinaryKind::kMul:
            if (ga) da[i] += g[i] * bv[i];
            if (gb) db[i] += g[i] * av[i];
            break;
          case BinaryKind::kDiv:
            if (ga) da[i] += g[i] / bv[i];
            if (gb) db[i] -= g[i] * av[i] / (bv[i] * bv[i]);
            break;
          case BinaryKind::kMin:
            if (av[i] <= bv[i]) {
              if (ga) da[i] += g[i];
            } else if (gb) {
              db[i] += g[i];
            }
            break;
          case BinaryKind::kMax:
            if (av[i] >= bv[i]) {
              if (ga) da[i] += g[i];
            } else if (gb) {
              db[i] += g[i];
            }
            break;
        }
      }
    });
  }
  return y;
}

void im2col(const real* in, std::int64_t C, std::int64_t H, std::int64_t W, int k, int stride, int pad,
            std::int64_t Ho, std::int64_t Wo, real* col) {
  const std::int64_t hw = Ho * Wo;
  for (std::int64_t c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        real* row = col + ((c * k + ky) * k + kx) * hw;
        for (std::int64_t oy = 0; oy < Ho; ++oy) {
          const std::int64_t iy = oy * stride - pad + ky;
          real* dst = row + oy * Wo;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + Wo, real(0));
            continue;
          }
          const real* src = in + (c * H + iy) * W;
          for (std::int64_t ox = 0; ox < Wo; ++ox) {
            const std::int64_t ix = ox * stride - pad + kx;
            dst[ox] = (ix < 0 || ix >= W) ? real(0) : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const real* col, std::int64_t C, std::int64_t H, std::int64_t W, int k, int stride, int pad,
                std::int64_t Ho, std::int64_t Wo, real* out) {
  const std::int64_t hw = Ho * Wo;
  for (std::int64_t c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const real* row = col + ((c * k + ky) * k + kx) * hw;
        for (std::int64_t oy = 0; oy < Ho; ++oy) {
          const std::int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          real* dst = out + (c * H + iy) * W;
          const real* src = row + oy * Wo;
          for (std::int64_t ox = 0; ox < Wo; ++ox) {
            const std::int64_t ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks_enabled() { return g_finite_checks; }

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const auto M = a.dim(0), K = a.dim(1), N = b.dim(1);
  Buffer out(static_cast<std::size_t>(M * N), real(0));
  kernels::gemm_acc(M, N, K, a.data().data(), K, std::int64_t{1}, b.data().data(), N, out.data(), N);
  Tensor y = new_tensor({M, N}, std::move(out));
  finish("matmul", y, static_cast<std::uint64_t>(2 * M * N * K));
  if (should_record({&a, &b})) {
    GradTape::active()->record("matmul", {a, b}, y, [a, b, M, N, K](std::span<const real> g) {
      if (a.requires_grad()) {
        Buffer bt(static_cast<std::size_t>(K * N));
        kernels::transpose(K, N, b.data().data(), bt.data());
        kernels::gemm_acc(M, K, N, g.data(), N, std::int64_t{1}, bt.data(), K, a.impl()->grad_buffer().data(), K);
      }
      if (b.requires_grad()) {
        kernels::gemm_acc(K, N, M, a.data().data(), std::int64_t{1}, K, g.data(), N,
                          b.impl()->grad_buffer().data(), N);
      }
    });
  }
  return y;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose: expected 2-D, got " + shape_str(a.shape()));
  const auto R = a.dim(0), C = a.dim(1);
  Buffer out(static_cast<std::size_t>(R * C));
  kernels::transpose(R, C, a.data().data(), out.data());
  Tensor y = new_tensor({C, R}, std::move(out));
  finish("transpose", y, 0);
  if (should_record({&a})) {
    GradTape::active()->record("transpose", {a}, y, [a, R, C](std::span<const real> g) {
      auto& ga = a.impl()->grad_buffer();
      for (std::int64_t r = 0; r < R; ++r)
        for (std::int64_t c = 0; c < C; ++c) ga[static_cast<std::size_t>(r * C + c)] += g[static_cast<std::size_t>(c * R + r)];
    });
  }
  return y;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride, int padding) {
  if (input.rank() != 3 || kernel.rank() != 4) {
    throw DimensionError("conv2d: expected CxHxW input and OxCxkxk kernel, got " + shape_str(input.shape()) +
                         " and " + shape_str(kernel.shape()));
  }
  const auto C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const auto O = kernel.dim(0);
  const auto k = kernel.dim(2);
  if (kernel.dim(1) != C || kernel.dim(3) != k) {
    throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) + " incompatible with input " +
                         shape_str(input.shape()));
  }
  if (k % 2 == 0) throw ConfigError("conv2d: kernel size must be odd, got " + std::to_string(k));
  if (stride <= 0 || padding < 0) throw ConfigError("conv2d: stride must be positive and padding non-negative");
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != O)) {
    throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " does not match " + std::to_string(O) +
                         " output channels");
  }
  const std::int64_t Ho = (H + 2 * padding - k) / stride + 1;
  const std::int64_t Wo = (W + 2 * padding - k) / stride + 1;
  if (H + 2 * padding - k < 0 || W + 2 * padding - k < 0 || Ho < 1 || Wo < 1) {
    throw ConfigError("conv2d: non-positive output extent for input " + shape_str(input.shape()) + ", k=" +
                      std::to_string(k) + ", stride=" + std::to_string(stride) + ", padding=" +
                      std::to_string(padding));
  }
  const std::int64_t hw = Ho * Wo;
  const std::int64_t ckk = C * k * k;
  const bool pointwise = (k == 1 && stride == 1 && padding == 0);

  auto col = std::make_shared<Buffer>();
  const real* col_ptr = input.data().data();
  if (!pointwise) {
    col->resize(static_cast<std::size_t>(ckk * hw));
    im2col(input.data().data(), C, H, W, static_cast<int>(k), stride, padding, Ho, Wo, col->data());
    col_ptr = col->data();
  }

  Buffer out(static_cast<std::size_t>(O * hw), real(0));
  if (bias.defined()) {
    auto bd = bias.data();
    for (std::int64_t o = 0; o < O; ++o) std::fill(out.begin() + o * hw, out.begin() + (o + 1) * hw, bd[static_cast<std::size_t>(o)]);
  }
  kernels::gemm_acc(O, hw, ckk, kernel.data().data(), ckk, std::int64_t{1}, col_ptr, hw, out.data(), hw);
  Tensor y = new_tensor({O, Ho, Wo}, std::move(out));
  finish("conv2d", y, static_cast<std::uint64_t>(2 * O * hw * ckk + (bias.defined() ? O * hw : 0)));

  if (should_record({&input, &kernel, &bias})) {
    GradTape::active()->record(
        "conv2d", {input, kernel, bias}, y,
        [input, kernel, bias, col, pointwise, C, H, W, O, k, stride, padding, Ho, Wo, hw, ckk](std::span<const real> g) {
          const real* cols = pointwise ? input.data().data() : col->data();
          if (kernel.requires_grad()) {
            Buffer colt(static_cast<std::size_t>(hw * ckk));
            kernels::transpose(ckk, hw, cols, colt.data());
            kernels::gemm_acc(O, ckk, hw, g.data(), hw, std::int64_t{1}, colt.data(), ckk,
                              kernel.impl()->grad_buffer().data(), ckk);
          }
          if (bias.defined() && bias.requires_grad()) {
            auto& gb = bias.impl()->grad_buffer();
            for (std::int64_t o = 0; o < O; ++o) {
              real s = 0;
              for (std::int64_t i = 0; i < hw; ++i) s += g[static_cast<std::size_t>(o * hw + i)];
              gb[static_cast<std::size_t>(o)] += s;
            }
          }
          if (input.requires_grad()) {
            auto& gi = input.impl()->grad_buffer();
            if (pointwise) {
              kernels::gemm_acc(ckk, hw, O, kernel.data().data(), std::int64_t{1}, ckk, g.data(), hw, gi.data(), hw);
            } else {
              Buffer dcol(static_cast<std::size_t>(ckk * hw), real(0));
              kernels::gemm_acc(ckk, hw, O, kernel.data().data(), std::int64_t{1}, ckk, g.data(), hw, dcol.data(), hw);
              col2im_add(dcol.data(), C, H, W, static_cast<int>(k), stride, padding, Ho, Wo, gi.data());
            }
          }
        });
  }
  return y;
}

// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", a, b, BinaryKind::kAdd); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", a, b, BinaryKind::kSub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", a, b, BinaryKind::kMul); }
Tensor div(const Tensor& a, const Tensor& b) { return binary("div", a, b, BinaryKind::kDiv); }
Tensor minimum(const Tensor& a, const Tensor& b) { return binary("minimum", a, b, BinaryKind::kMin); }
Tensor maximum(const Tensor& a, const Tensor& b) { return binary("maximum", a, b, BinaryKind::kMax); }

Tensor add_scalar(const Tensor& a, real s) {
  return unary("add_scalar", a, [s](real x) { return x + s; }, [](real, real) { return real(1); });
}

Tensor mul_scalar(const Tensor& a, real s) {
  return unary("mul_scalar", a, [s](real x) { return x * s; }, [s](real, real) { return s; });
}

Tensor scale(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) throw DimensionError("scale: factor must have one element, got " + shape_str(s.shape()));
  const real f = s.item();
  auto ad = a.data();
  Buffer out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] * f;
  Tensor y = new_tensor(a.shape(), std::move(out));
  finish("scale", y, ad.size());
  if (should_record({&a, &s})) {
    GradTape::active()->record("scale", {a, s}, y, [a, s, f](std::span<const real> g) {
      if (a.requires_grad()) {
        auto& ga = a.impl()->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * f;
      }
      if (s.requires_grad()) {
        auto av = a.data();
        real acc = 0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
        s.impl()->grad_buffer()[0] += acc;
      }
    });
  }
  return y;
}

Tensor add_row_bias(const Tensor& x, const Tensor& b) {
  if (x.rank() != 2 || b.rank() != 1 || b.dim(0) != x.dim(1)) {
    throw DimensionError("add_row_bias: " + shape_str(x.shape()) + " + " + shape_str(b.shape()));
  }
  const auto M = x.dim(0), N = x.dim(1);
  auto xd = x.data();
  auto bd = b.data();
  Buffer out(xd.size());
  for (std::int64_t i = 0; i < M; ++i)
    for (std::int64_t j = 0; j < N; ++j)
      out[static_cast<std::size_t>(i * N + j)] = xd[static_cast<std::size_t>(i * N + j)] + bd[static_cast<std::size_t>(j)];
  Tensor y = new_tensor(x.shape(), std::move(out));
  finish("add_row_bias", y, xd.size());
  if (should_record({&x, &b})) {
    GradTape::active()->record("add_row_bias", {x, b}, y, [x, b, M, N](std::span<const real> g) {
      accumulate_grad(x, g);
      if (b.requires_grad()) {
        auto& gb = b.impl()->grad_buffer();
        for (std::int64_t i = 0; i < M; ++i)
          for (std::int64_t j = 0; j < N; ++j) gb[static_cast<std::size_t>(j)] += g[static_cast<std::size_t>(i * N + j)];
      }
    });
  }
  return y;
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x, sigmoid_scalar, [](real, real y) { return y * (real(1) - y); });
}

Tensor silu(const Tensor& x) {
  return unary(
      "silu", x, [](real v) { return v * sigmoid_scalar(v); },
      [](real v, real) {
        const real s = sigmoid_scalar(v);
        return s + v * s * (real(1) - s);
      });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](real v) { return v > 0 ? v : real(0); }, [](real v, real) { return v > 0 ? real(1) : real(0); });
}

Tensor softplus(const Tensor& x) {
  return unary("softplus", x, softplus_scalar, [](real v, real) { return sigmoid_scalar(v); });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      "sqrt", x, [](real v) { return std::sqrt(v); }, [](real, real y) { return y > 0 ? real(0.5) / y : real(0); });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  require_same_shape(logits, targets, "bce_with_logits");
  const real log_eps = static_cast<real>(std::log(kBceEps));
  auto xd = logits.data();
  auto td = targets.data();
  Buffer out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const real log_p = std::max(-softplus_scalar(-xd[i]), log_eps);
    const real log_q = std::max(-softplus_scalar(xd[i]), log_eps);
    out[i] = -(td[i] * log_p + (real(1) - td[i]) * log_q);
  }
  Tensor y = new_tensor(logits.shape(), std::move(out));
  finish("bce_with_logits", y, 4 * xd.size());
  if (should_record({&logits})) {
    GradTape::active()->record("bce_with_logits", {logits, targets}, y,
                               [logits, targets](std::span<const real> g) {
                                 const real eps = static_cast<real>(kBceEps);
                                 auto x = logits.data();
                                 auto t = targets.data();
                                 auto& gx = logits.impl()->grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i) {
                                   const real p = sigmoid_scalar(x[i]);
                                   const real q = sigmoid_scalar(-x[i]);
                                   real d = 0;
                                   if (p > eps) d -= t[i] * q;
                                   if (q > eps) d += (real(1) - t[i]) * p;
                                   gx[i] += g[i] * d;
                                 }
                               });
  }
  return y;
}

// ---------------------------------------------------------------------------

Tensor l2_normalize(const Tensor& x, int axis) {
  const int a = normalize_axis(axis, x.rank(), "l2_normalize");
  const auto sp = split_axis(x.shape(), a);
  auto xd = x.data();
  Buffer out(xd.size());
  auto norms = std::make_shared<Buffer>(static_cast<std::size_t>(sp.outer * sp.inner));
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    for (std::int64_t in = 0; in < sp.inner; ++in) {
      const std::int64_t base = o * sp.n * sp.inner + in;
      real ss = 0;
      for (std::int64_t i = 0; i < sp.n; ++i) {
        const real v = xd[static_cast<std::size_t>(base + i * sp.inner)];
        ss += v * v;
      }
      const real nrm = std::sqrt(ss);
      (*norms)[static_cast<std::size_t>(o * sp.inner + in)] = nrm;
      const real denom = std::max(nrm, static_cast<real>(kNormEps));
      for (std::int64_t i = 0; i < sp.n; ++i) {
        const auto idx = static_cast<std::size_t>(base + i * sp.inner);
        out[idx] = xd[idx] / denom;
      }
    }
  }
  Tensor y = new_tensor(x.shape(), std::move(out));
  finish("l2_normalize", y, 3 * xd.size());
  if (should_record({&x})) {
    auto yi = y.impl();
    GradTape::active()->record("l2_normalize", {x}, y, [x, yi, norms, sp](std::span<const real> g) {
      auto& gx = x.impl()->grad_buffer();
      const auto& yd = yi->data;
      for (std::int64_t o = 0; o < sp.outer; ++o) {
        for (std::int64_t in = 0; in < sp.inner; ++in) {
          const std::int64_t base = o * sp.n * sp.inner + in;
          const real nrm = (*norms)[static_cast<std::size_t>(o * sp.inner + in)];
          if (nrm > static_cast<real>(kNormEps)) {
            real dot = 0;
            for (std::int64_t i = 0; i < sp.n; ++i) {
              const auto idx = static_cast<std::size_t>(base + i * sp.inner);
              dot += g[idx] * yd[idx];
            }
            for (std::int64_t i = 0; i < sp.n; ++i) {
              const auto idx = static_cast<std::size_t>(base + i * sp.inner);
              gx[idx] += (g[idx] - yd[idx] * dot) / nrm;
            }
          } else {
            for (std::int64_t i = 0; i < sp.n; ++i) {
              const auto idx = static_cast<std::size_t>(base + i * sp.inner);
              gx[idx] += g[idx] / static_cast<real>(kNormEps);
            }
          }
        }
      }
    });
  }
  return y;
}

Tensor softmax(const Tensor& x, int axis) {
  const int a = normalize_axis(axis, x.rank(), "softmax");
  const auto sp = split_axis(x.shape(), a);
  auto xd = x.data();
  Buffer out(xd.size());
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    for (std::int64_t in = 0; in < sp.inner; ++in) {
      const std::int64_t base = o * sp.n * sp.inner + in;
      real mx = -std::numeric_limits<real>::infinity();
      for (std::int64_t i = 0; i < sp.n; ++i) mx = std::max(mx, xd[static_cast<std::size_t>(base + i * sp.inner)]);
      real s = 0;
      for (std::int64_t i = 0; i < sp.n; ++i) {
        const auto idx = static_cast<std::size_t>(base + i * sp.inner);
        out[idx] = std::exp(xd[idx] - mx);
        s += out[idx];
      }
      for (std::int64_t i = 0; i < sp.n; ++i) out[static_cast<std::size_t>(base + i * sp.inner)] /= s;
    }
  }
  Tensor y = new_tensor(x.shape(), std::move(out));
  finish("softmax", y, 4 * xd.size());
  if (should_record({&x})) {
    auto yi = y.impl();
    GradTape::active()->record("softmax", {x}, y, [x, yi, sp](std::span<const real> g) {
      auto& gx = x.impl()->grad_buffer();
      const auto& yd = yi->data;
      for (std::int64_t o = 0; o < sp.outer; ++o) {
        for (std::int64_t in = 0; in < sp.inner; ++in) {
          const std::int64_t base = o * sp.n * sp.inner + in;
          real dot = 0;
          for (std::int64_t i = 0; i < sp.n; ++i) {
            const auto idx = static_cast<std::size_t>(base + i * sp.inner);
            dot += g[idx] * yd[idx];
          }
          for (std::int64_t i = 0; i < sp.n; ++i) {
            const auto idx = static_cast<std::size_t>(base + i * sp.inner);
            gx[idx] += yd[idx] * (g[idx] - dot);
          }
        }
      }
    });
  }
  return y;
}

Tensor masked_softmax(const Tensor& x, const std::vector<std::uint8_t>& mask) {
  const auto L = x.dim(-1);
  if (static_cast<std::int64_t>(mask.size()) != L) {
    throw DimensionError("masked_softmax: mask of " + std::to_string(mask.size()) + " entries for last axis " +
                         std::to_string(L));
  }
  if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; })) {
    throw UsageError("masked_softmax: mask selects no positions");
  }
  const std::int64_t rows = x.numel() / L;
  auto xd = x.data();
  Buffer out(xd.size(), real(0));
  for (std::int64_t r = 0; r < rows; ++r) {
    const real* xr = xd.data() + r * L;
    real* yr = out.data() + r * L;
    real mx = -std::numeric_limits<real>::infinity();
    for (std::int64_t i = 0; i < L; ++i)
      if (mask[static_cast<std::size_t>(i)]) mx = std::max(mx, xr[i]);
    real s = 0;
    for (std::int64_t i = 0; i < L; ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      yr[i] = std::exp(xr[i] - mx);
      s += yr[i];
    }
    for (std::int64_t i = 0; i < L; ++i) yr[i] /= s;
  }
  Tensor y = new_tensor(x.shape(), std::move(out));
  finish("masked_softmax", y, 4 * xd.size());
  if (should_record({&x})) {
    auto yi = y.impl();
    GradTape::active()->record("masked_softmax", {x}, y, [x, yi, rows, L](std::span<const real> g) {
      auto& gx = x.impl()->grad_buffer();
      const auto& yd = yi->data;
      for (std::int64_t r = 0; r < rows; ++r) {
        real dot = 0;
        for (std::int64_t i = 0; i < L; ++i) dot += g[static_cast<std::size_t>(r * L + i)] * yd[static_cast<std::size_t>(r * L + i)];
        for (std::int64_t i = 0; i < L; ++i) {
          const auto idx = static_cast<std::size_t>(r * L + i);
          gx[idx] += yd[idx] * (g[idx] - dot);
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
  }
  auto xd = x.data();
  Tensor y = new_tensor(std::move(shape), Buffer(xd.begin(), xd.end()));
  finish("reshape", y, 0);
  if (should_record({&x})) {
    GradTape::active()->record("reshape", {x}, y, [x](std::span<const real> g) { accumulate_grad(x, g); });
  }
  return y;
}

Tensor upsample_nearest(const Tensor& x, int factor) {
  if (x.rank() != 3) throw DimensionError("upsample_nearest: expected CxHxW, got " + shape_str(x.shape()));
  if (factor < 1) throw ConfigError("upsample_nearest: factor must be >= 1");
  const auto C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const auto Ho = H * factor, Wo = W * factor;
  auto xd = x.data();
  Buffer out(static_cast<std::size_t>(C * Ho * Wo));
  for (std::int64_t c = 0; c < C; ++c)
    for (std::int64_t i = 0; i < Ho; ++i)
      for (std::int64_t j = 0; j < Wo; ++j)
        out[static_cast<std::size_t>((c * Ho + i) * Wo + j)] = xd[static_cast<std::size_t>((c * H + i / factor) * W + j / factor)];
  Tensor y = new_tensor({C, Ho, Wo}, std::move(out));
  finish("upsample_nearest", y, 0);
  if (should_record({&x})) {
    GradTape::active()->record("upsample_nearest", {x}, y, [x, C, H, W, Ho, Wo, factor](std::span<const real> g) {
      auto& gx = x.impl()->grad_buffer();
      for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t i = 0; i < Ho; ++i)
          for (std::int64_t j = 0; j < Wo; ++j)
            gx[static_cast<std::size_t>((c * H + i / factor) * W + j / factor)] += g[static_cast<std::size_t>((c * Ho + i) * Wo + j)];
    });
  }
  return y;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw UsageError("concat: no inputs");
  const auto& s0 = parts.front().shape();
  const int a = normalize_axis(axis, static_cast<int>(s0.size()), "concat");
  Shape out_shape = s0;
  out_shape[static_cast<std::size_t>(a)] = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != s0.size()) throw DimensionError("concat: rank mismatch " + shape_str(s0) + " vs " + shape_str(s));
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (static_cast<int>(d) != a && s[d] != s0[d]) {
        throw DimensionError("concat: extent mismatch " + shape_str(s0) + " vs " + shape_str(s) + " on axis " +
                             std::to_string(d));
      }
    }
    out_shape[static_cast<std::size_t>(a)] += s[static_cast<std::size_t>(a)];
  }
  const auto sp = split_axis(out_shape, a);
  Buffer out(static_cast<std::size_t>(shape_numel(out_shape)));
  std::int64_t offset = 0;
  std::vector<std::int64_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const auto n = p.dim(a);
    auto pd = p.data();
    for (std::int64_t o = 0; o < sp.outer; ++o) {
      std::copy_n(pd.begin() + o * n * sp.inner, n * sp.inner, out.begin() + (o * sp.n + offset) * sp.inner);
    }
    offset += n;
  }
  Tensor y = new_tensor(std::move(out_shape), std::move(out));
  finish("concat", y, 0);
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (any && GradTape::active()) {
    GradTape::active()->record("concat", parts, y, [parts, offsets, sp, a](std::span<const real> g) {
      for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& p = parts[k];
        if (!p.requires_grad()) continue;
        const auto n = p.dim(a);
        auto& gp = p.impl()->grad_buffer();
        for (std::int64_t o = 0; o < sp.outer; ++o) {
          const real* src = g.data() + (o * sp.n + offsets[k]) * sp.inner;
          real* dst = gp.data() + o * n * sp.inner;
          for (std::int64_t i = 0; i < n * sp.inner; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return y;
}

Tensor slice(const Tensor& x, int axis, std::int64_t begin, std::int64_t end) {
  const int a = normalize_axis(axis, x.rank(), "slice");
  const auto sp = split_axis(x.shape(), a);
  if (begin < 0 || end > sp.n || begin >= end) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                         shape_str(x.shape()) + " axis " + std::to_string(a));
  }
  Shape out_shape = x.shape();
  const auto n = end - begin;
  out_shape[static_cast<std::size_t>(a)] = n;
  auto xd = x.data();
  Buffer out(static_cast<std::size_t>(sp.outer * n * sp.inner));
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    std::copy_n(xd.begin() + (o * sp.n + begin) * sp.inner, n * sp.inner, out.begin() + o * n * sp.inner);
  }
  Tensor y = new_tensor(std::move(out_shape), std::move(out));
  finish("slice", y, 0);
  if (should_record({&x})) {
    GradTape::active()->record("slice", {x}, y, [x, sp, begin, n](std::span<const real> g) {
      auto& gx = x.impl()->grad_buffer();
      for (std::int64_t o = 0; o < sp.outer; ++o) {
        const real* src = g.data() + o * n * sp.inner;
        real* dst = gx.data() + (o * sp.n + begin) * sp.inner;
        for (std::int64_t i = 0; i < n * sp.inner; ++i) dst[i] += src[i];
      }
    });
  }
  return y;
}

Tensor index_rows(const Tensor& x, const std::vector<std::int64_t>& rows) {
  if (x.rank() != 1 && x.rank() != 2) throw DimensionError("index_rows: expected 1-D or 2-D, got " + shape_str(x.shape()));
  const auto R = x.dim(0);
  const std::int64_t F = x.rank() == 2 ? x.dim(1) : 1;
  auto xd = x.data();
  Buffer out(rows.size() * static_cast<std::size_t>(F));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= R) {
      throw DimensionError("index_rows: row " + std::to_string(rows[r]) + " out of range for " + shape_str(x.shape()));
    }
    std::copy_n(xd.begin() + rows[r] * F, F, out.begin() + static_cast<std::int64_t>(r) * F);
  }
  Shape out_shape = x.rank() == 2 ? Shape{static_cast<std::int64_t>(rows.size()), F}
                                  : Shape{static_cast<std::int64_t>(rows.size())};
  Tensor y = new_tensor(std::move(out_shape), std::move(out));
  finish("index_rows", y, 0);
  if (should_record({&x})) {
    GradTape::active()->record("index_rows", {x}, y, [x, rows, F](std::span<const real> g) {
      auto& gx = x.impl()->grad_buffer();
      for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::int64_t f = 0; f < F; ++f) gx[static_cast<std::size_t>(rows[r] * F + f)] += g[r * static_cast<std::size_t>(F) + static_cast<std::size_t>(f)];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------

namespace {

Shape reduced_shape(const Shape& s, int axis) {
  Shape out;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (static_cast<int>(i) != axis) out.push_back(s[i]);
  if (out.empty()) out.push_back(1);
  return out;
}

Tensor reduce_axis(const char* op, const Tensor& x, int axis, bool average) {
  const int a = normalize_axis(axis, x.rank(), op);
  const auto sp = split_axis(x.shape(), a);
  auto xd = x.data();
  Buffer out(static_cast<std::size_t>(sp.outer * sp.inner), real(0));
  for (std::int64_t o = 0; o < sp.outer; ++o)
    for (std::int64_t i = 0; i < sp.n; ++i)
      for (std::int64_t in = 0; in < sp.inner; ++in)
        out[static_cast<std::size_t>(o * sp.inner + in)] += xd[static_cast<std::size_t>((o * sp.n + i) * sp.inner + in)];
  const real scale_by = average ? real(1) / static_cast<real>(sp.n) : real(1);
  if (average)
    for (auto& v : out) v *= scale_by;
  Tensor y = new_tensor(reduced_shape(x.shape(), a), std::move(out));
  finish(op, y, xd.size());
  if (should_record({&x})) {
    GradTape::active()->record(op, {x}, y, [x, sp, scale_by](std::span<const real> g) {
      auto& gx = x.impl()->grad_buffer();
      for (std::int64_t o = 0; o < sp.outer; ++o)
        for (std::int64_t i = 0; i < sp.n; ++i)
          for (std::int64_t in = 0; in < sp.inner; ++in)
            gx[static_cast<std::size_t>((o * sp.n + i) * sp.inner + in)] += g[static_cast<std::size_t>(o * sp.inner + in)] * scale_by;
    });
  }
  return y;
}

}  // namespace

Tensor reduce_sum(const Tensor& x, int axis) { return reduce_axis("reduce_sum", x, axis, false); }
Tensor reduce_mean(const Tensor& x, int axis) { return reduce_axis("reduce_mean", x, axis, true); }

Tensor reduce_max(const Tensor& x, int axis) {
  const int a = normalize_axis(axis, x.rank(), "reduce_max");
  const auto sp = split_axis(x.shape(), a);
  if (sp.n == 0) throw DimensionError("reduce_max over an empty axis");
  auto xd = x.data();
  Buffer out(static_cast<std::size_t>(sp.outer * sp.inner));
  auto arg = std::make_shared<std::vector<std::int64_t>>(out.size());
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    for (std::int64_t in = 0; in < sp.inner; ++in) {
      std::int64_t best = 0;
      real bv = xd[static_cast<std::size_t>(o * sp.n * sp.inner + in)];
      for (std::int64_t i = 1; i < sp.n; ++i) {
        const real v = xd[static_cast<std::size_t>((o * sp.n + i) * sp.inner + in)];
        if (v > bv) {
          bv = v;
          best = i;
        }
      }
      out[static_cast<std::size_t>(o * sp.inner + in)] = bv;
      (*arg)[static_cast<std::size_t>(o * sp.inner + in)] = best;
    }
  }
  Tensor y = new_tensor(reduced_shape(x.shape(), a), std::move(out));
  finish("reduce_max", y, xd.size());
  if (should_record({&x})) {
    GradTape::active()->record("reduce_max", {x}, y, [x, sp, arg](std::span<const real> g) {
      auto& gx = x.impl()->grad_buffer();
      for (std::int64_t o = 0; o < sp.outer; ++o)
        for (std::int64_t in = 0; in < sp.inner; ++in) {
          const auto k = static_cast<std::size_t>(o * sp.inner + in);
          gx[static_cast<std::size_t>((o * sp.n + (*arg)[k]) * sp.inner + in)] += g[k];
        }
    });
  }
  return y;
}

Tensor sum(const Tensor& x) { return reduce_axis("sum", reshape(x, {x.numel()}), 0, false); }
Tensor mean(const Tensor& x) { return reduce_axis("mean", reshape(x, {x.numel()}), 0, true); }

}  // namespace yoloe::inline YOLOE_PRECISION_NS
