#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "support.hpp"
#include "yoloe/autograd.hpp"
#include "yoloe/fold.hpp"
#include "yoloe/inference.hpp"
#include "yoloe/ops.hpp"

using namespace yoloe;
using test::random_tensor;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ModelConfig small_config() {
  ModelConfig c;
  c.width = 8;
  c.embed_dim = 16;
  c.num_prototypes = 4;
  c.input_height = c.input_width = 64;
  c.seed = 21;
  return c;
}

std::vector<std::string> vocab_names(int n) {
  std::vector<std::string> v;
  const char* colors[] = {"red", "green", "blue", "yellow", "violet", "black", "white"};
  const char* things[] = {"circle", "square", "triangle", "cross", "car", "tree", "lamp", "boat"};
  for (int i = 0; static_cast<int>(v.size()) < n; ++i) v.push_back(std::string(colors[i % 7]) + " " + things[i / 7 % 8] + std::to_string(i / 56));
  return v;
}

double sigmoid_d(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Best vocabulary label per anchor, by hand.
struct OracleHit {
  std::int64_t anchor, label;
  double score;
};
std::vector<OracleHit> oracle_vocab(const HeadOutputs& head, const Tensor& prompts, double tau, float threshold,
                                    const std::vector<std::int64_t>& anchors) {
  std::vector<OracleHit> out;
  const auto C = prompts.dim(0), D = prompts.dim(1);
  for (auto n : anchors) {
    double best = -kInf;
    std::int64_t arg = 0;
    for (std::int64_t c = 0; c < C; ++c) {
      double s = 0;
      for (std::int64_t d = 0; d < D; ++d) s += double(head.embeddings.at({n, d})) * prompts.at({c, d});
      if (s > best) {
        best = s;
        arg = c;
      }
    }
    const double p = sigmoid_d(tau * best);
    if (p >= threshold) out.push_back({n, arg, p});
  }
  return out;
}

}  // namespace

TEST_SUITE("inference-pipeline") {

TEST_CASE("identical embedding and prompt score sigmoid of the temperature") {
  const Tensor o({1, 2}, {0.6f, 0.8f});
  const Tensor tau = Tensor::scalar(7.5f);
  const auto sim = classify(o, o, tau);
  CHECK(sim.scores.item() == doctest::Approx(7.5).epsilon(1e-6));
  CHECK(sim.probabilities().item() == doctest::Approx(sigmoid_d(7.5)).epsilon(1e-6));
  const auto ortho = classify(o, Tensor({1, 2}, {-0.8f, 0.6f}), tau);
  CHECK(ortho.probabilities().item() == doctest::Approx(0.5).epsilon(1e-7));
}

TEST_CASE("classify matches a double loop") {
  Rng rng(1);
  const Tensor o = l2_normalize(random_tensor(rng, {5, 6}), 1);
  const Tensor p = l2_normalize(random_tensor(rng, {3, 6}), 1);
  const auto sim = classify(o, p, Tensor::scalar(4.0f));
  REQUIRE(sim.scores.shape() == Shape{5, 3});
  double worst = 0;
  for (int n = 0; n < 5; ++n)
    for (int c = 0; c < 3; ++c) {
      double s = 0;
      for (int d = 0; d < 6; ++d) s += double(o.at({n, d})) * p.at({c, d});
      worst = std::max(worst, std::abs(sigmoid_d(4.0 * s) - sim.probabilities().at({n, c})));
    }
  CHECK(worst <= 1e-6);
}

TEST_CASE("decode keeps exactly the anchors at or above the threshold") {
  const Tensor boxes = Tensor::zeros({4, 4});
  SimilarityMatrix sim{Tensor({4, 2}, {-5, -6, -4, -3, 3, -2, -7, -9})};
  CHECK(nms_free_decode(boxes, sim, 0.99f).empty());
  const auto one = nms_free_decode(boxes, sim, 0.5f);
  REQUIRE(one.size() == 1);
  CHECK(one[0].anchor_id == 2);
  CHECK(one[0].label_index == 0);
  CHECK(nms_free_decode(boxes, sim, 0.0f).size() == 4);
  CHECK(nms_free_decode(boxes, sim, 0.0f, true).size() == 8);
}

TEST_CASE("threshold zero keeps every anchor once, overlaps included") {
  const Model m(small_config());
  NoGradGuard ng;
  Rng rng(2);
  const auto p = encode_text({"a", "b", "c"}, TextEncoder(16));
  InferOptions o;
  o.score_threshold = 0;
  const auto dets = infer_text(m, random_tensor(rng, {3, 64, 64}, 0, 1), p, o);
  CHECK(dets.size() == 84);
  std::set<std::int64_t> ids;
  for (const auto& d : dets) ids.insert(d.anchor_id);
  CHECK(ids.size() == 84);
  for (std::size_t i = 1; i < dets.size(); ++i) CHECK(dets[i - 1].score >= dets[i].score);
}

TEST_CASE("zero coefficients give an empty mask") {
  Rng rng(3);
  const Tensor protos = random_tensor(rng, {4, 16, 16}, -5, 5);
  const std::vector<real> zero(4, 0);
  CHECK(assemble_mask(protos, zero, {0, 0, 64, 64}, 64, 64).area() == 0);
}

TEST_CASE("a large prototype selected by a unit vector fills the box") {
  Tensor protos = Tensor::zeros({4, 16, 16});
  for (std::int64_t y = 0; y < 16; ++y)
    for (std::int64_t x = 0; x < 16; ++x) protos.mutable_data()[static_cast<std::size_t>(2 * 256 + y * 16 + x)] = 20;
  const std::vector<real> e2{0, 0, 1, 0};
  const std::array<float, 4> box{12, 20, 40, 36};
  const auto m = assemble_mask(protos, e2, box, 64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const float cx = x + 0.5f, cy = y + 0.5f;
      const bool inside = cx >= box[0] && cx <= box[2] && cy >= box[1] && cy <= box[3];
      const bool padded = cx >= box[0] - kMaskBoxPad && cx <= box[2] + kMaskBoxPad && cy >= box[1] - kMaskBoxPad &&
                          cy <= box[3] + kMaskBoxPad;
      if (inside) CHECK(m.at(y, x) == 1);
      if (!padded) CHECK(m.at(y, x) == 0);
    }
}

TEST_CASE("mask logits are linear in the coefficients") {
  Rng rng(4);
  const Tensor protos = random_tensor(rng, {4, 16, 16});
  const std::vector<real> a{0.3f, -1.2f, 0.5f, 2.0f}, b{-0.7f, 0.1f, 1.4f, -0.2f};
  std::vector<real> mix(4);
  for (int k = 0; k < 4; ++k) mix[static_cast<std::size_t>(k)] = 2 * a[static_cast<std::size_t>(k)] - 3 * b[static_cast<std::size_t>(k)];
  const auto la = mask_logits(protos, a), lb = mask_logits(protos, b), lm = mask_logits(protos, mix);
  double worst = 0;
  for (std::size_t i = 0; i < lm.size(); ++i) worst = std::max(worst, std::abs(2.0 * la[i] - 3.0 * lb[i] - lm[i]));
  CHECK(worst <= 1e-5);
  double oracle = 0;
  for (std::size_t i = 0; i < la.size(); ++i) {
    double s = 0;
    for (int k = 0; k < 4; ++k) s += double(a[static_cast<std::size_t>(k)]) * protos.data()[static_cast<std::size_t>(k) * 256 + i];
    oracle = std::max(oracle, std::abs(s - la[i]));
  }
  CHECK(oracle <= 1e-6);
}

TEST_CASE("threshold one on a blank image gives nothing") {
  const Model m(small_config());
  InferOptions o;
  o.score_threshold = 1.0f;
  CHECK(infer_text(m, Tensor::zeros({3, 64, 64}), encode_text({"a", "b"}, TextEncoder(16)), o).empty());
}

TEST_CASE("folded and unfolded text inference agree") {
  const Model m(small_config());
  Rng rng(5);
  const Tensor img = random_tensor(rng, {3, 64, 64}, 0, 1);
  const auto p = encode_text({"red circle", "blue square", "green cross"}, TextEncoder(16));
  const auto aux = AuxAligner::create(16, 4, 1.0);
  InferOptions o;
  o.score_threshold = 0.3f;
  const auto ref = infer_text(m, img, refine_prompts(p, aux), o);
  for (auto mode : {FoldMode::kStacked, FoldMode::kFused}) {
    const auto got = infer_text(m, img, reprta_fold(p, aux, m, mode), o);
    REQUIRE(got.size() == ref.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].anchor_id == ref[i].anchor_id);
      CHECK(got[i].label == ref[i].label);
      CHECK(std::abs(got[i].score - ref[i].score) <= 1e-5f);
      CHECK(got[i].box == ref[i].box);
    }
  }
}

TEST_CASE("visual prompting with two classes") {
  const Model m(small_config());
  Rng rng(6);
  const Tensor img = random_tensor(rng, {3, 64, 64}, 0, 1);
  std::vector<VisualCue> cues{{3, {4, 4, 24, 24}, {}}, {9, {30, 30, 60, 60}, {}}};
  InferOptions o;
  o.score_threshold = 0;
  o.multi_label = true;
  const auto dets = infer_visual(m, img, img, cues, {{3, "three"}, {9, "nine"}}, o);
  CHECK(dets.size() == 2 * 84);
  std::set<std::string> labels;
  for (const auto& d : dets) labels.insert(d.label);
  CHECK(labels == std::set<std::string>{"three", "nine"});
  CHECK_THROWS_AS(infer_visual(m, img, img, {}), UsageError);

  // A separate reference image changes the prompts but not the query pass.
  const Tensor ref = random_tensor(rng, {3, 64, 64}, 0, 1);
  const auto cross = infer_visual(m, img, ref, cues, {}, o);
  CHECK(cross.size() == 2 * 84);
}

TEST_CASE("lazy vocabulary matching against a brute-force oracle") {
  const Model m(small_config());
  NoGradGuard ng;
  const auto vocab = build_vocabulary(vocab_names(60), TextEncoder(16));
  const auto C = vocab.prompts.size();
  Rng rng(7);
  InferOptions o;
  o.score_threshold = 0.2f;
  const double tau = m.temperature().item();
  for (int img = 0; img < 3; ++img) {
    const auto fwd = m.forward(random_tensor(rng, {3, 64, 64}, 0, 1));
    const auto obj = objectness_scores(fwd.head, vocab);
    REQUIRE(obj.size() == 84);
    for (std::size_t n = 0; n < 84; ++n) CHECK(obj[n] == fwd.head.objectness.data()[n]);

    std::vector<real> sorted = obj;
    std::ranges::sort(sorted);
    const std::vector<double> deltas{-kInf, sorted[20], sorted[60], sorted[83], kInf};
    std::int64_t prev_kept = 85;
    std::set<std::int64_t> prev_anchors;
    for (std::size_t k = 0; k < deltas.size(); ++k) {
      const double delta = deltas[k];
      const auto [dets, rep] = infer_prompt_free(m, fwd, vocab, delta, o);
      std::vector<std::int64_t> pass;
      for (std::size_t n = 0; n < 84; ++n)
        if (obj[n] > delta) pass.push_back(static_cast<std::int64_t>(n));
      auto hits = oracle_vocab(fwd.head, vocab.prompts.embeddings, tau, o.score_threshold, pass);
      REQUIRE(dets.size() == hits.size());
      std::ranges::sort(hits, [](const OracleHit& a, const OracleHit& b) { return a.anchor < b.anchor; });
      auto sorted_dets = dets;
      std::ranges::sort(sorted_dets, [](const Detection& a, const Detection& b) { return a.anchor_id < b.anchor_id; });
      for (std::size_t i = 0; i < hits.size(); ++i) {
        CHECK(sorted_dets[i].anchor_id == hits[i].anchor);
        CHECK(sorted_dets[i].label_index == hits[i].label);
        CHECK(std::abs(sorted_dets[i].score - hits[i].score) <= 1e-5);
      }

      CHECK(rep.anchors_total == 84);
      CHECK(rep.anchors_kept == static_cast<std::int64_t>(pass.size()));
      CHECK(rep.dot_products_full == 84 * C);
      CHECK(rep.anchors_kept <= prev_kept);
      prev_kept = rep.anchors_kept;

      // Raising delta only removes detections.
      std::set<std::int64_t> anchors;
      for (const auto& d : dets) anchors.insert(d.anchor_id);
      if (k > 0) CHECK(std::ranges::includes(prev_anchors, anchors));
      prev_anchors = anchors;

      if (delta == -kInf) {
        CHECK(rep.anchors_kept == 84);
        CHECK(rep.savings_ratio() == doctest::Approx(-84.0 / (84.0 * C)));
        const auto brute = brute_force_vocab_match(m, fwd, vocab, o);
        CHECK(brute.size() == dets.size());
      }
      if (delta == kInf) {
        CHECK(dets.empty());
        CHECK(rep.anchors_kept == 0);
        CHECK(rep.dot_products_lazy == 84);
      }
    }
  }
}

TEST_CASE("prompt-free inference is deterministic") {
  const Model m(small_config());
  const auto vocab = build_vocabulary(vocab_names(30), TextEncoder(16));
  Rng rng(8);
  const Tensor img = random_tensor(rng, {3, 64, 64}, 0, 1);
  InferOptions o;
  o.score_threshold = 0.1f;
  const auto a = infer_prompt_free(m, img, vocab, -4.0, o).first;
  const auto b = infer_prompt_free(m, img, vocab, -4.0, o).first;
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].anchor_id == b[i].anchor_id);
    CHECK(a[i].score == b[i].score);
    CHECK(a[i].mask == b[i].mask);
  }
}

}  // TEST_SUITE
