#include <benchmark/benchmark.h>

#include "yoloe/autograd.hpp"
#include "yoloe/ops.hpp"
#include "yoloe/rng.hpp"

using namespace yoloe;

namespace {

Tensor random(Rng& rng, Shape shape) {
  std::vector<real> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<real>(rng.uniform(-1, 1));
  return Tensor(std::move(shape), std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = state.range(0);
  Rng rng(1);
  const Tensor a = random(rng, {n, n}), b = random(rng, {n, n});
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_Conv3x3(benchmark::State& state) {
  const auto c = state.range(0), hw = state.range(1);
  Rng rng(2);
  const Tensor x = random(rng, {c, hw, hw}), k = random(rng, {c, c, 3, 3});
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, 1, 1));
  state.SetItemsProcessed(state.iterations() * 2 * c * c * 9 * hw * hw);
}
BENCHMARK(BM_Conv3x3)->Args({16, 48})->Args({32, 24})->Args({64, 12});

void BM_ConvBackward(benchmark::State& state) {
  Rng rng(3);
  const Tensor k = random(rng, {16, 16, 3, 3});
  for (auto _ : state) {
    Tensor x = random(rng, {16, 48, 48});
    Tensor kk = k.detach();
    kk.set_requires_grad(true);
    GradTape tape;
    tape.backward(sum(conv2d(x, kk, 1, 1)));
    benchmark::DoNotOptimize(kk.grad().data());
  }
}
BENCHMARK(BM_ConvBackward);

}  // namespace
