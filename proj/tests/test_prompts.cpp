#include <doctest.h>

#include <cmath>
#include <fstream>

#include "support.hpp"
#include "yoloe/aligner.hpp"
#include "yoloe/autograd.hpp"
#include "yoloe/error.hpp"
#include "yoloe/flops.hpp"
#include "yoloe/fold.hpp"
#include "yoloe/inference.hpp"
#include "yoloe/ops.hpp"
#include "yoloe/prompts.hpp"
#include "yoloe/savpe.hpp"
#include "yoloe/verify.hpp"

using namespace yoloe;
using test::random_tensor;

namespace {

ModelConfig small_config(int groups = 4) {
  ModelConfig c;
  c.width = 8;
  c.embed_dim = 16;
  c.num_prototypes = 4;
  c.savpe_groups = groups;
  c.input_height = c.input_width = 64;
  c.seed = 11;
  return c;
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += double(a[i]) * b[i];
    aa += double(a[i]) * a[i];
    bb += double(b[i]) * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

double row_norm(const Tensor& t, std::int64_t r) {
  double s = 0;
  for (std::int64_t d = 0; d < t.dim(1); ++d) s += double(t.at({r, d})) * t.at({r, d});
  return std::sqrt(s);
}

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
  std::ofstream f(p);
  for (const auto& l : lines) f << l << '\n';
}

// Semantic map of the SAVPE branch, D x HW, computed layer by layer.
Tensor semantic_map(const Model& m, const Tensor& features) {
  Tensor sem = m.savpe_conv("sem.out")(silu(m.savpe_conv("sem.hidden")(features)));
  return reshape(sem, {sem.dim(0), sem.dim(1) * sem.dim(2)});
}

std::vector<std::uint8_t> square_cue(int hp, int wp, int y0, int y1, int x0, int x1) {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(hp * wp), 0);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m[static_cast<std::size_t>(y * wp + x)] = 1;
  return m;
}

}  // namespace

TEST_SUITE("prompt-engine") {

TEST_CASE("text encoding is deterministic and unit norm") {
  const TextEncoder enc(16);
  const auto a = encode_text({"person", "red circle"}, enc);
  const auto b = encode_text({"person", "red circle"}, TextEncoder(16));
  CHECK(bit_equal(a.embeddings, b.embeddings));
  CHECK(a.labels == std::vector<std::string>{"person", "red circle"});
  for (std::int64_t r = 0; r < 2; ++r) CHECK(std::abs(row_norm(a.embeddings, r) - 1.0) <= 1e-5);
  CHECK_NOTHROW(a.validate());
}

TEST_CASE("near-identical spellings stay distinct but similar") {
  const TextEncoder enc(32);
  const double c = cosine(enc.encode_one("person"), enc.encode_one("persom"));
  CHECK(c < 1.0);
  CHECK(c > cosine(enc.encode_one("person"), enc.encode_one("zebra")));
}

TEST_CASE("table rows are normalised and scale invariant") {
  EmbeddingTable table;
  table.insert("cat", {3, 0, 4, 0});
  table.insert("dog", {0, 1, 0, 0});
  const TextEncoder enc(4);
  const auto p = encode_text({"cat", "dog"}, enc, &table);
  CHECK(p.embeddings.at({0, 0}) == doctest::Approx(0.6));
  CHECK(p.embeddings.at({0, 2}) == doctest::Approx(0.8));
  CHECK(p.embeddings.at({1, 1}) == 1.0f);

  for (float c : {0.01f, 2.5f, 1000.0f}) {
    EmbeddingTable scaled;
    scaled.insert("cat", {3 * c, 0, 4 * c, 0});
    scaled.insert("dog", {0, c, 0, 0});
    const auto q = encode_text({"cat", "dog"}, enc, &scaled);
    CHECK(max_abs_diff(q.embeddings, p.embeddings) <= 1e-6f);
  }
  CHECK_THROWS_AS(encode_text({"bird"}, enc, &table), LookupError);
}

TEST_CASE("duplicate or empty names are rejected") {
  const TextEncoder enc(8);
  CHECK_THROWS_AS(encode_text({"a", "a"}, enc), UsageError);
  CHECK_THROWS_AS(encode_text({}, enc), UsageError);
  CHECK_THROWS_AS(encode_text({"  "}, enc), UsageError);
}

TEST_CASE("aligner with zero output layer is the identity") {
  const TextEncoder enc(16);
  const auto p = encode_text({"red circle", "blue square", "green cross"}, enc);
  const auto aux = AuxAligner::create(16, 3);
  CHECK(max_abs_diff(reprta_refine(p.embeddings, aux), p.embeddings) <= 1e-5f);
}

TEST_CASE("refined rows are unit norm") {
  Rng rng(4);
  const auto aux = AuxAligner::create(16, 5, 1.0);
  const Tensor raw = l2_normalize(random_tensor(rng, {7, 16}), 1);
  const Tensor r = reprta_refine(raw, aux);
  for (std::int64_t i = 0; i < 7; ++i) CHECK(std::abs(row_norm(r, i) - 1.0) <= 1e-5);
  CHECK(max_abs_diff(r, raw) > 1e-3f);
}

TEST_CASE("loss and aligner gradients match finite differences in double precision") {
  // The suite runs in double precision on random instances of every loss term
  // and of the aligner parameters.
  for (const auto& s : verify::gradient_suite(20, 1)) {
    INFO(s.target);
    CHECK(s.instances == 20);
    CHECK(s.worst_rel_error <= 1e-3);
  }
}

TEST_CASE("stacked fold of an identity aligner reproduces the prompts") {
  const Model m(small_config());
  const TextEncoder enc(16);
  const auto p = encode_text({"red circle", "blue square"}, enc);
  const auto fold = reprta_fold(p, AuxAligner::create(16, 3), m, FoldMode::kStacked);
  CHECK(max_abs_diff(fold.prompt_kernel(), p.embeddings) <= 1e-6f);
  CHECK(fold.labels() == p.labels);
}

TEST_CASE("folded scores match the aligner path on random triples") {
  const auto s = verify::fold_suite(25, 3);
  CHECK(s.triples == 25);
  CHECK(s.max_diff_stacked <= 1e-5);
  CHECK(s.max_diff_fused <= 1e-5);
  CHECK(s.argmax_agree_stacked == 1.0);
  CHECK(s.argmax_agree_fused == 1.0);
  CHECK(s.flops_fused < s.flops_stacked);
  CHECK(s.fused_cheaper_every_triple);
}

TEST_CASE("fold tensors round trip") {
  const Model m(small_config());
  const TextEncoder enc(16);
  const auto p = encode_text({"red circle", "blå fyrkant", "x"}, enc);
  const auto aux = AuxAligner::create(16, 9, 1.0);
  for (auto mode : {FoldMode::kStacked, FoldMode::kFused}) {
    const auto fold = reprta_fold(p, aux, m, mode);
    const auto back = fold_from_tensors(fold_tensors(fold), m);
    CHECK(back.mode() == mode);
    CHECK(back.labels() == p.labels);
    CHECK(bit_equal(back.prompt_kernel(), fold.prompt_kernel()));
  }
  CHECK(decode_labels(encode_labels({"a", "", "ü"})) == std::vector<std::string>{"a", "", "ü"});
}

TEST_CASE("fused fold requires a linear projection") {
  ModelConfig c = small_config();
  c.embed_final_activation = true;
  const Model m(c);
  const auto p = encode_text({"a"}, TextEncoder(16));
  CHECK_THROWS_AS(reprta_fold(p, AuxAligner::create(16, 1), m, FoldMode::kFused), ConfigError);
  CHECK_NOTHROW(reprta_fold(p, AuxAligner::create(16, 1), m, FoldMode::kStacked));
}

TEST_CASE("zero activation logits pool the cue-masked mean per slice") {
  Model m(small_config());
  for (const char* n : {"savpe.act.out.weight", "savpe.act.out.bias"}) {
    for (auto& v : m.parameter(n).mutable_data()) v = 0;
  }
  NoGradGuard ng;
  Rng rng(6);
  const Tensor features = random_tensor(rng, {16, 16, 16});
  const auto cue = square_cue(16, 16, 3, 9, 5, 8);
  const Tensor agg = savpe_aggregate(m, features, cue);
  const Tensor sem = semantic_map(m, features);
  REQUIRE(agg.shape() == Shape{1, 16});
  double worst = 0;
  for (std::int64_t d = 0; d < 16; ++d) {
    double acc = 0;
    int n = 0;
    for (std::int64_t k = 0; k < 256; ++k) {
      if (!cue[static_cast<std::size_t>(k)]) continue;
      acc += sem.at({d, k});
      ++n;
    }
    worst = std::max(worst, std::abs(acc / n - agg.at({0, d})));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("a single group is one softmax-weighted mean") {
  const Model m(small_config(1));
  NoGradGuard ng;
  Rng rng(7);
  const Tensor features = random_tensor(rng, {16, 16, 16});
  const auto cue = square_cue(16, 16, 0, 4, 10, 16);
  const Tensor agg = savpe_aggregate(m, features, cue);
  const Tensor sem = semantic_map(m, features);

  std::vector<real> c(cue.begin(), cue.end());
  const Tensor act_in = concat({features, Tensor({1, 16, 16}, std::move(c))}, 0);
  const Tensor logits = reshape(m.savpe_conv("act.out")(silu(m.savpe_conv("act.hidden")(act_in))), {1, 256});
  double zmax = -1e30;
  for (std::int64_t k = 0; k < 256; ++k)
    if (cue[static_cast<std::size_t>(k)]) zmax = std::max(zmax, double(logits.at({0, k})));
  std::vector<double> w(256, 0);
  double z = 0;
  for (std::int64_t k = 0; k < 256; ++k) {
    if (!cue[static_cast<std::size_t>(k)]) continue;
    w[static_cast<std::size_t>(k)] = std::exp(logits.at({0, k}) - zmax);
    z += w[static_cast<std::size_t>(k)];
  }
  double worst = 0;
  for (std::int64_t d = 0; d < 16; ++d) {
    double acc = 0;
    for (std::int64_t k = 0; k < 256; ++k) acc += w[static_cast<std::size_t>(k)] / z * sem.at({d, k});
    worst = std::max(worst, std::abs(acc - agg.at({0, d})));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("features outside the cue do not affect the prompt") {
  const Model m(small_config());
  NoGradGuard ng;
  Rng rng(8);
  const Tensor features = random_tensor(rng, {16, 16, 16});
  const auto cue = square_cue(16, 16, 4, 12, 2, 7);
  Tensor masked = features.clone();
  auto d = masked.mutable_data();
  for (std::int64_t ch = 0; ch < 16; ++ch)
    for (std::int64_t k = 0; k < 256; ++k)
      if (!cue[static_cast<std::size_t>(k)]) d[static_cast<std::size_t>(ch * 256 + k)] = 0;
  CHECK(max_abs_diff(savpe_embed(m, features, cue), savpe_embed(m, masked, cue)) <= 1e-5f);
}

TEST_CASE("cues of one class pool into a single unit row") {
  const Model m(small_config());
  NoGradGuard ng;
  Rng rng(9);
  const auto fwd = m.forward(random_tensor(rng, {3, 64, 64}, 0, 1));
  std::vector<VisualCue> cues(3);
  cues[0] = {7, {4, 4, 30, 30}, {}};
  cues[1] = {7, {32, 10, 60, 50}, {}};
  cues[2] = {2, {10, 40, 20, 60}, {}};
  const auto p = savpe_encode(m, fwd.features, cues, {{7, "seven"}});
  REQUIRE(p.size() == 2);
  CHECK(p.kind == PromptKind::kVisual);
  CHECK(p.labels == std::vector<std::string>{"class2", "seven"});
  for (std::int64_t r = 0; r < 2; ++r) CHECK(std::abs(row_norm(p.embeddings, r) - 1.0) <= 1e-5);
  CHECK_THROWS_AS(savpe_encode(m, fwd.features, {}), UsageError);
  std::vector<VisualCue> tiny{{0, {1, 1, 1.5f, 1.5f}, {}}};
  CHECK_THROWS_AS(savpe_encode(m, fwd.features, tiny), DegenerateCueError);
}

TEST_CASE("vocabulary files") {
  const test::TempDir dir("vocab");
  const TextEncoder enc(16);
  write_lines(dir / "three.txt", {"# comment", "cat", "", "  dog  ", "bird"});
  const auto v = build_vocabulary(dir / "three.txt", enc);
  CHECK(v.prompts.size() == 3);
  CHECK(v.prompts.labels == std::vector<std::string>{"cat", "dog", "bird"});
  CHECK(v.prompts.kind == PromptKind::kVocabulary);
  REQUIRE(v.objectness.embeddings.shape() == Shape{1, 17});
  CHECK(v.objectness.embeddings.at({0, 16}) == 1.0f);

  write_lines(dir / "dup.txt", {"cat", "dog", "cat"});
  try {
    (void)build_vocabulary(dir / "dup.txt", enc);
    FAIL("duplicate accepted");
  } catch (const UsageError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("lines 1 and 3") != std::string::npos);
  }
}

TEST_CASE("the shipped vocabulary has 4585 entries") {
  const auto v = build_vocabulary(std::filesystem::path(YOLOE_DATA_DIR) / "vocabulary.txt", TextEncoder(16));
  CHECK(v.prompts.size() == 4585);
  CHECK_NOTHROW(v.prompts.validate());
}

}  // TEST_SUITE
