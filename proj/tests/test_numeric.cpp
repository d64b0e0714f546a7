#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "yoloe/autograd.hpp"
#include "yoloe/gradcheck.hpp"
#include "yoloe/losses.hpp"
#include "yoloe/ops.hpp"

using namespace yoloe;
using test::random_tensor;

TEST_SUITE("numeric-core") {

TEST_CASE("matmul by the identity returns the right operand") {
  const Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Rng rng(1);
  const Tensor b = random_tensor(rng, {3, 2});
  CHECK(bit_equal(matmul(eye, b), b));
}

TEST_CASE("matmul 2x2 by 2x1") {
  const Tensor c = matmul(Tensor({2, 2}, {1, 2, 3, 4}), Tensor({2, 1}, {5, 6}));
  CHECK(c.shape() == Shape{2, 1});
  CHECK(c.data()[0] == 17.0f);
  CHECK(c.data()[1] == 39.0f);
}

TEST_CASE("matmul matches a triple loop") {
  Rng rng(2);
  const Tensor a = random_tensor(rng, {4, 5}), b = random_tensor(rng, {5, 3});
  const Tensor c = matmul(a, b);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0;
      for (int k = 0; k < 5; ++k) acc += double(a.at({i, k})) * b.at({k, j});
      CHECK(std::abs(acc - c.at({i, j})) <= 1e-6);
    }
}

TEST_CASE("matmul rejects mismatched inner extents") {
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
}

TEST_CASE("1x1 conv equals a per-pixel matmul") {
  Rng rng(3);
  const Tensor x = random_tensor(rng, {4, 5, 6}), w = random_tensor(rng, {3, 4, 1, 1});
  const Tensor y = conv2d(x, w);
  const Tensor ref = matmul(reshape(w, {3, 4}), reshape(x, {4, 30}));
  CHECK(max_abs_diff(reshape(y, {3, 30}), ref) <= 1e-6f);
}

TEST_CASE("centred delta kernel with padding k/2 is the identity") {
  Rng rng(4);
  const Tensor x = random_tensor(rng, {1, 7, 5});
  std::vector<real> k(9, 0);
  k[4] = 1;
  CHECK(bit_equal(conv2d(x, Tensor({1, 1, 3, 3}, k), 1, 1), x));
}

TEST_CASE("conv2d matches a naive loop") {
  Rng rng(5);
  const Tensor x = random_tensor(rng, {2, 8, 8}), w = random_tensor(rng, {3, 2, 3, 3});
  for (int stride : {1, 2})
    for (int pad : {0, 1}) {
      const Tensor y = conv2d(x, w, stride, pad);
      const int Ho = (8 + 2 * pad - 3) / stride + 1;
      REQUIRE(y.shape() == Shape{3, Ho, Ho});
      double worst = 0;
      for (int o = 0; o < 3; ++o)
        for (int r = 0; r < Ho; ++r)
          for (int c = 0; c < Ho; ++c) {
            double acc = 0;
            for (int i = 0; i < 2; ++i)
              for (int dy = 0; dy < 3; ++dy)
                for (int dx = 0; dx < 3; ++dx) {
                  const int yy = r * stride + dy - pad, xx = c * stride + dx - pad;
                  if (yy >= 0 && yy < 8 && xx >= 0 && xx < 8) acc += double(x.at({i, yy, xx})) * w.at({o, i, dy, dx});
                }
            worst = std::max(worst, std::abs(acc - y.at({o, r, c})));
          }
      CHECK(worst <= 1e-5);
    }
}

TEST_CASE("elementwise reference values") {
  CHECK(sigmoid(Tensor::scalar(0)).item() == 0.5f);
  const Tensor n = l2_normalize(Tensor({1, 2}, {3, 4}), 1);
  CHECK(n.data()[0] == doctest::Approx(0.6).epsilon(1e-7));
  CHECK(n.data()[1] == doctest::Approx(0.8).epsilon(1e-7));
  for (int len : {1, 3, 7}) {
    const Tensor s = softmax(Tensor::full({1, len}, 2.5f), 1);
    for (real v : s.data()) CHECK(v == doctest::Approx(1.0 / len).epsilon(1e-7));
  }
  CHECK(relu(Tensor({2}, {-1, 2})).data()[0] == 0.0f);
  CHECK(silu(Tensor::scalar(0)).item() == 0.0f);
}

TEST_CASE("shape ops") {
  Rng rng(6);
  const Tensor x = random_tensor(rng, {2, 3, 4});
  const Tensor up = upsample_nearest(x, 2);
  CHECK(up.shape() == Shape{2, 6, 8});
  CHECK(up.at({1, 5, 7}) == x.at({1, 2, 3}));
  const Tensor cat = concat({x, x}, 0);
  CHECK(cat.shape() == Shape{4, 3, 4});
  CHECK(bit_equal(slice(cat, 0, 2, 4), x));
  CHECK(reduce_sum(Tensor({2, 2}, {1, 2, 3, 4}), 1).data()[1] == 7.0f);
  CHECK(reduce_mean(Tensor({2, 2}, {1, 2, 3, 4}), 0).data()[0] == 2.0f);
  CHECK(reduce_max(Tensor({2, 2}, {1, 5, 3, 4}), 1).data()[0] == 5.0f);
}

TEST_CASE("non-finite values raise") {
  CHECK_THROWS_AS(sqrt(Tensor::scalar(-1)), NumericError);
  CHECK_THROWS_AS(div(Tensor::scalar(1), Tensor::scalar(0)), NumericError);
  CHECK_THROWS_AS(check_finite(Tensor({1}, {INFINITY}).data(), "x"), NumericError);
}

TEST_CASE("backward of sum is all ones") {
  Rng rng(7);
  Tensor x = random_tensor(rng, {2, 3, 2}, -1, 1, true);
  GradTape tape;
  tape.backward(sum(x));
  for (real g : x.grad()) CHECK(g == 1.0f);
}

TEST_CASE("backward of half the sum of squares is x") {
  Rng rng(8);
  Tensor x = random_tensor(rng, {5}, -2, 2, true);
  GradTape tape;
  tape.backward(mul_scalar(sum(mul(x, x)), 0.5f));
  for (int i = 0; i < 5; ++i) CHECK(x.grad()[i] == doctest::Approx(x.data()[i]).epsilon(1e-6));
}

TEST_CASE("gradients accumulate over multiple consumers") {
  Tensor x({2}, {1.5f, -2.0f}, true);
  GradTape tape;
  tape.backward(add(sum(x), sum(mul_scalar(x, 3))));
  CHECK(x.grad()[0] == 4.0f);
  CHECK(x.grad()[1] == 4.0f);
}

TEST_CASE("finite_diff_check of a sum of squares at zero") {
  const auto r = finite_diff_check([](const Tensor& t) { return sum(mul(t, t)); }, Tensor::zeros({4}));
  CHECK(r.max_rel_error == 0.0);
}

TEST_CASE("finite_diff_check in 32-bit on BCE and GIoU") {
  Rng rng(9);
  const Tensor logits = random_tensor(rng, {3, 2}, -3, 3);
  const Tensor targets = random_tensor(rng, {3, 2}, 0, 1);
  const auto bce = finite_diff_check([&](const Tensor& t) { return mean(bce_with_logits(t, targets)); }, logits, 3e-3);
  CHECK(bce.max_rel_error <= 1e-3);
  const Tensor target({2, 4}, {2, 2, 10, 12, 20, 20, 30, 26});
  const Tensor pred({2, 4}, {3, 1, 11, 10, 18, 22, 27, 29});
  const auto iou = finite_diff_check([&](const Tensor& t) { return loss_box(t, target); }, pred, 1e-2);
  CHECK(iou.max_rel_error <= 1e-3);
}

TEST_CASE("composite conv, silu, matmul, BCE chain matches finite differences") {
  Rng rng(10);
  const Tensor x = random_tensor(rng, {2, 5, 5});
  const Tensor w2 = random_tensor(rng, {25, 2});
  const Tensor t = random_tensor(rng, {3, 2}, 0, 1);
  const Tensor k = random_tensor(rng, {3, 2, 3, 3}, -0.5, 0.5);
  auto f = [&](const Tensor& kernel) {
    const Tensor h = silu(conv2d(x, kernel, 1, 1));
    return mean(bce_with_logits(matmul(reshape(h, {3, 25}), w2), t));
  };
  CHECK(finite_diff_check(f, k, 1e-2).max_rel_error <= 1e-2);
}

TEST_CASE("forward ops are deterministic") {
  Rng rng(11);
  const Tensor x = random_tensor(rng, {3, 9, 9}), w = random_tensor(rng, {4, 3, 3, 3});
  CHECK(bit_equal(silu(conv2d(x, w, 2, 1)), silu(conv2d(x, w, 2, 1))));
}

TEST_CASE("splitting a batch and summing gradients matches the full batch") {
  Rng rng(12);
  std::vector<Tensor> images;
  for (int i = 0; i < 4; ++i) images.push_back(random_tensor(rng, {2, 6, 6}));
  const Tensor w0 = random_tensor(rng, {3, 2, 3, 3});
  Tensor wfull = w0.clone();
  wfull.set_requires_grad(true);
  Tensor wsplit = w0.clone();
  wsplit.set_requires_grad(true);
  auto loss_with = [&](Tensor& w, int begin, int end) {
    Tensor total;
    for (int i = begin; i < end; ++i) {
      const Tensor h = silu(conv2d(images[static_cast<std::size_t>(i)], w, 1, 1));
      const Tensor l = mean(mul(h, h));
      total = total.defined() ? add(total, l) : l;
    }
    return total;
  };
  {
    GradTape tape;
    tape.backward(loss_with(wfull, 0, 4));
  }
  {
    GradTape tape;
    tape.backward(loss_with(wsplit, 0, 2));
  }
  {
    GradTape tape;
    tape.backward(loss_with(wsplit, 2, 4));
  }
  double worst = 0;
  for (std::size_t i = 0; i < wfull.grad().size(); ++i) {
    worst = std::max(worst, std::abs(double(wfull.grad()[i]) - wsplit.grad()[i]));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("no-grad guard stops recording") {
  Tensor x({2}, {1, 2}, true);
  GradTape tape;
  {
    NoGradGuard ng;
    (void)sum(x);
  }
  CHECK(tape.size() == 0);
  (void)sum(x);
  CHECK(tape.size() > 0);
}

}  // TEST_SUITE
