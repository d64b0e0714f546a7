#include <benchmark/benchmark.h>

#include <limits>
#include <string>
#include <vector>

#include "yoloe/autograd.hpp"
#include "yoloe/fold.hpp"
#include "yoloe/inference.hpp"
#include "yoloe/rng.hpp"

using namespace yoloe;

namespace {

ModelConfig desk(int width) {
  ModelConfig c;
  c.width = width;
  c.depth = 1;
  c.embed_dim = 32;
  c.num_prototypes = 8;
  c.input_height = c.input_width = 96;
  c.seed = 7;
  return c;
}

Tensor image(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<real> v(3 * 96 * 96);
  for (auto& x : v) x = static_cast<real>(rng.uniform(0, 1));
  return Tensor({3, 96, 96}, std::move(v));
}

std::vector<std::string> names(std::int64_t n) {
  std::vector<std::string> v;
  for (std::int64_t i = 0; i < n; ++i) v.push_back("thing " + std::to_string(i));
  return v;
}

void BM_Forward(benchmark::State& state) {
  const Model m(desk(static_cast<int>(state.range(0))));
  const Tensor img = image(1);
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(m.forward(img));
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_TextInference(benchmark::State& state) {
  const Model m(desk(16));
  const Tensor img = image(2);
  const auto prompts = encode_text(names(state.range(0)), TextEncoder(32));
  const auto aux = AuxAligner::create(32, 11);
  const auto mode = state.range(1) ? FoldMode::kFused : FoldMode::kStacked;
  const auto fold = reprta_fold(prompts, aux, m, mode);
  InferOptions o;
  o.score_threshold = 0.25f;
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(infer_text(m, img, fold, o));
}
BENCHMARK(BM_TextInference)->Args({16, 0})->Args({16, 1})->Args({256, 0})->Args({256, 1})
    ->Unit(benchmark::kMillisecond);

void BM_PromptFree(benchmark::State& state) {
  const Model m(desk(16));
  const Tensor img = image(3);
  const auto vocab = build_vocabulary(names(4585), TextEncoder(32));
  NoGradGuard ng;
  const auto fwd = m.forward(img);
  const double delta = state.range(0) ? 0.0 : -std::numeric_limits<double>::infinity();
  InferOptions o;
  o.score_threshold = 0.25f;
  for (auto _ : state) benchmark::DoNotOptimize(infer_prompt_free(m, fwd, vocab, delta, o));
}
BENCHMARK(BM_PromptFree)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
