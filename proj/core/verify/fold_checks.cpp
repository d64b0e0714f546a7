#include <algorithm>
#include <cmath>
#include <cstdio>

#include "yoloe/autograd.hpp"
#include "yoloe/flops.hpp"
#include "yoloe/fold.hpp"
#include "yoloe/inference.hpp"
#include "yoloe/ops.hpp"
#include "yoloe/rng.hpp"
#include "yoloe/verify.hpp"

namespace yoloe::verify {

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo, double hi) {
  std::vector<real> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<real>(rng.uniform(lo, hi));
  return Tensor(std::move(shape), std::move(v));
}

std::int64_t row_argmax(const Tensor& t, std::int64_t row) {
  const auto C = t.dim(1);
  const auto* r = t.data().data() + row * C;
  return std::max_element(r, r + C) - r;
}

}  // namespace

FoldSummary fold_suite(int triples, std::uint64_t seed) {
  NoGradGuard ng;
  FoldSummary s;
  s.triples = triples;
  std::int64_t rows = 0, agree_stacked = 0, agree_fused = 0;
  for (int t = 0; t < triples; ++t) {
    Rng rng(mix_seed(seed, "fold/" + std::to_string(t)));
    ModelConfig cfg;
    cfg.width = static_cast<int>(4 * rng.integer(1, 3));
    cfg.embed_dim = static_cast<int>(8 * rng.integer(1, 4));
    cfg.num_prototypes = 4;
    cfg.seed = mix_seed(seed, "fold/model/" + std::to_string(t));
    const Model model(cfg);
    const auto C = rng.integer(1, 12);
    PromptSet prompts;
    prompts.embeddings = l2_normalize(random_tensor(rng, {C, cfg.embed_dim}, -1, 1), 1);
    for (std::int64_t c = 0; c < C; ++c) prompts.labels.push_back("prompt" + std::to_string(c));
    const AuxAligner aux = AuxAligner::create(cfg.embed_dim, mix_seed(seed, "fold/aux/" + std::to_string(t)), 1.0);
    const Tensor image = random_tensor(rng, {3, cfg.input_height, cfg.input_width}, 0, 1);

    const ForwardResult fwd = model.forward(image);
    const Tensor reference =
        classify(fwd.head.embeddings, refine_prompts(prompts, aux), model.temperature()).scores;
    const FoldedClassifier stacked = reprta_fold(prompts, aux, model, FoldMode::kStacked);
    const FoldedClassifier fused = reprta_fold(prompts, aux, model, FoldMode::kFused);

    std::uint64_t flops_s = 0, flops_f = 0;
    Tensor out_s, out_f;
    {
      const FlopScope scope;
      out_s = stacked.scores_from_hidden(fwd.embed_hidden, model);
      flops_s = scope.flops();
    }
    {
      const FlopScope scope;
      out_f = fused.scores_from_hidden(fwd.embed_hidden, model);
      flops_f = scope.flops();
    }
    s.flops_stacked += flops_s;
    s.flops_fused += flops_f;
    s.fused_cheaper_every_triple = s.fused_cheaper_every_triple && flops_f < flops_s;
    s.max_diff_stacked = std::max(s.max_diff_stacked, static_cast<double>(max_abs_diff(out_s, reference)));
    s.max_diff_fused = std::max(s.max_diff_fused, static_cast<double>(max_abs_diff(out_f, reference)));
    for (std::int64_t i = 0; i < reference.dim(0); ++i) {
      const auto want = row_argmax(reference, i);
      agree_stacked += row_argmax(out_s, i) == want ? 1 : 0;
      agree_fused += row_argmax(out_f, i) == want ? 1 : 0;
      ++rows;
    }
  }
  if (rows > 0) {
    s.argmax_agree_stacked = static_cast<double>(agree_stacked) / static_cast<double>(rows);
    s.argmax_agree_fused = static_cast<double>(agree_fused) / static_cast<double>(rows);
  }
  return s;
}

std::vector<CheckItem> check_fold(int triples, std::uint64_t seed, double tolerance) {
  const FoldSummary s = fold_suite(triples, seed);
  char buf[200];
  std::vector<CheckItem> items;
  std::snprintf(buf, sizeof buf, "%d triples, max |diff| %.3e, argmax agreement %.4f", s.triples, s.max_diff_stacked,
                s.argmax_agree_stacked);
  items.push_back({"fold stacked", s.max_diff_stacked <= tolerance && s.argmax_agree_stacked == 1.0, buf});
  std::snprintf(buf, sizeof buf, "%d triples, max |diff| %.3e, argmax agreement %.4f", s.triples, s.max_diff_fused,
                s.argmax_agree_fused);
  items.push_back({"fold fused", s.max_diff_fused <= tolerance && s.argmax_agree_fused == 1.0, buf});
  std::snprintf(buf, sizeof buf, "classification FLOPs stacked %llu, fused %llu",
                static_cast<unsigned long long>(s.flops_stacked), static_cast<unsigned long long>(s.flops_fused));
  items.push_back({"fold flops", s.fused_cheaper_every_triple, buf});
  return items;
}

}  // namespace yoloe::verify
