#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "yoloe/autograd.hpp"
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

std::string fmt(const char* f, double v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

CheckItem matmul_oracle(Rng& rng) {
  double worst = 0;
  for (int t = 0; t < 10; ++t) {
    const auto M = rng.integer(1, 17), K = rng.integer(1, 33), N = rng.integer(1, 17);
    const Tensor a = random_tensor(rng, {M, K}, -1, 1), b = random_tensor(rng, {K, N}, -1, 1);
    const Tensor c = matmul(a, b);
    for (std::int64_t i = 0; i < M; ++i)
      for (std::int64_t j = 0; j < N; ++j) {
        double acc = 0;
        for (std::int64_t k = 0; k < K; ++k) acc += double(a.data()[i * K + k]) * b.data()[k * N + j];
        worst = std::max(worst, std::abs(acc - c.data()[i * N + j]));
      }
  }
  return {"oracle matmul", worst <= 1e-5, fmt("max |diff| %.3e", worst)};
}

CheckItem conv_oracle(Rng& rng) {
  double worst = 0;
  for (int t = 0; t < 10; ++t) {
    const auto Ci = rng.integer(1, 4), Co = rng.integer(1, 4), H = rng.integer(3, 12), W = rng.integer(3, 12);
    const int k = rng.uniform() < 0.5 ? 1 : 3, stride = static_cast<int>(rng.integer(1, 2));
    const int pad = k == 3 ? static_cast<int>(rng.integer(0, 1)) : 0;
    const Tensor x = random_tensor(rng, {Ci, H, W}, -1, 1), w = random_tensor(rng, {Co, Ci, k, k}, -1, 1);
    const Tensor b = random_tensor(rng, {Co}, -1, 1);
    const Tensor y = conv2d(x, w, b, stride, pad);
    const auto Ho = (H + 2 * pad - k) / stride + 1, Wo = (W + 2 * pad - k) / stride + 1;
    if (y.dim(1) != Ho || y.dim(2) != Wo) return {"oracle conv2d", false, "output shape mismatch"};
    for (std::int64_t o = 0; o < Co; ++o)
      for (std::int64_t r = 0; r < Ho; ++r)
        for (std::int64_t c = 0; c < Wo; ++c) {
          double acc = b.data()[o];
          for (std::int64_t i = 0; i < Ci; ++i)
            for (int dy = 0; dy < k; ++dy)
              for (int dx = 0; dx < k; ++dx) {
                const auto yy = r * stride + dy - pad, xx = c * stride + dx - pad;
                if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                acc += double(x.data()[(i * H + yy) * W + xx]) * w.data()[((o * Ci + i) * k + dy) * k + dx];
              }
          worst = std::max(worst, std::abs(acc - y.data()[(o * Ho + r) * Wo + c]));
        }
  }
  return {"oracle conv2d", worst <= 1e-5, fmt("max |diff| %.3e", worst)};
}

CheckItem classify_oracle(Rng& rng) {
  const std::int64_t N = 5, C = 3, D = 8;
  const Tensor O = l2_normalize(random_tensor(rng, {N, D}, -1, 1), 1);
  const Tensor P = l2_normalize(random_tensor(rng, {C, D}, -1, 1), 1);
  const double tau = rng.uniform(1, 20);
  const Tensor p = classify(O, P, Tensor::scalar(static_cast<real>(tau))).probabilities();
  double worst = 0;
  for (std::int64_t i = 0; i < N; ++i)
    for (std::int64_t j = 0; j < C; ++j) {
      double dot = 0;
      for (std::int64_t d = 0; d < D; ++d) dot += double(O.data()[i * D + d]) * P.data()[j * D + d];
      worst = std::max(worst, std::abs(1.0 / (1.0 + std::exp(-tau * dot)) - p.data()[i * C + j]));
    }
  return {"oracle classify", worst <= 1e-6, fmt("max |diff| %.3e", worst)};
}

CheckItem rle_oracle(Rng& rng) {
  for (int t = 0; t < 20; ++t) {
    BinaryMask m(static_cast<int>(rng.integer(1, 20)), static_cast<int>(rng.integer(1, 20)));
    const double density = rng.uniform();
    for (auto& b : m.bits) b = rng.uniform() < density ? 1 : 0;
    const auto counts = rle_encode(m);
    std::int64_t total = 0;
    for (auto c : counts) total += c;
    if (total != static_cast<std::int64_t>(m.bits.size()) || rle_decode(counts, m.height, m.width) != m) {
      return {"oracle rle", false, "round trip failed at case " + std::to_string(t)};
    }
  }
  return {"oracle rle", true, "20 random masks round trip"};
}

}  // namespace

std::vector<CheckItem> check_oracle(std::uint64_t seed) {
  NoGradGuard ng;
  Rng rng(mix_seed(seed, "oracle"));
  std::vector<CheckItem> items{matmul_oracle(rng), conv_oracle(rng), classify_oracle(rng), rle_oracle(rng)};

  ModelConfig cfg;
  cfg.seed = mix_seed(seed, "oracle/model");
  const Model model(cfg);
  const Tensor image = random_tensor(rng, {3, cfg.input_height, cfg.input_width}, 0, 1);
  const ForwardResult fwd = model.forward(image);
  const auto N = fwd.head.num_anchors();

  PromptSet prompts;
  prompts.embeddings = l2_normalize(random_tensor(rng, {3, cfg.embed_dim}, -1, 1), 1);
  prompts.labels = {"a", "b", "c"};
  const Tensor boxes = decode_boxes(fwd.head.box_deltas, model.anchors(), cfg.input_height, cfg.input_width);
  const auto cands = nms_free_decode(boxes, classify(fwd.head.embeddings, prompts, model.temperature()), 0.0f);
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(N), 0);
  bool injective = true;
  for (const auto& c : cands) {
    auto& s = seen[static_cast<std::size_t>(c.anchor_id)];
    injective = injective && s == 0;
    s = 1;
  }
  items.push_back({"oracle decode threshold 0", injective && static_cast<std::int64_t>(cands.size()) == N,
                   std::to_string(cands.size()) + " detections for " + std::to_string(N) + " anchors"});

  Vocabulary vocab;
  vocab.prompts = prompts;
  vocab.prompts.embeddings = l2_normalize(random_tensor(rng, {40, cfg.embed_dim}, -1, 1), 1);
  vocab.prompts.labels.clear();
  for (int c = 0; c < 40; ++c) vocab.prompts.labels.push_back("w" + std::to_string(c));
  vocab.prompts.kind = PromptKind::kVocabulary;
  vocab.objectness = objectness_prompt(cfg.embed_dim);
  InferOptions opts;
  opts.score_threshold = 0.0f;
  const auto brute = brute_force_vocab_match(model, fwd, vocab, opts);
  const auto [lazy, report] =
      infer_prompt_free(model, fwd, vocab, -std::numeric_limits<double>::infinity(), opts);
  bool same = brute.size() == lazy.size();
  for (std::size_t i = 0; same && i < brute.size(); ++i) {
    same = brute[i].anchor_id == lazy[i].anchor_id && brute[i].label == lazy[i].label &&
           brute[i].score == lazy[i].score && brute[i].box == lazy[i].box;
  }
  items.push_back({"oracle lrpc delta -inf", same && report.anchors_kept == N,
                   std::to_string(lazy.size()) + " lazy vs " + std::to_string(brute.size()) + " brute-force"});
  return items;
}

}  // namespace yoloe::verify
