#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <fstream>
#include <set>

#include "support.hpp"
#include "yoloe/assign.hpp"
#include "yoloe/autograd.hpp"
#include "yoloe/dataset.hpp"
#include "yoloe/inference.hpp"
#include "yoloe/losses.hpp"
#include "yoloe/ops.hpp"
#include "yoloe/pipeline.hpp"
#include "yoloe/trainer.hpp"

using namespace yoloe;
using test::random_tensor;

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.width = 8;
  c.embed_dim = 16;
  c.num_prototypes = 4;
  c.input_height = c.input_width = 64;
  c.seed = 31;
  return c;
}

DatasetSpec tiny_spec(int count, std::uint64_t seed) {
  DatasetSpec s;
  s.count = count;
  s.height = s.width = 64;
  s.min_radius = 7;
  s.max_radius = 14;
  s.max_instances = 3;
  s.seed = seed;
  return s;
}

double ln2() { return std::log(2.0); }

// Shape from the geometry of a visible mask alone.
std::string classify_shape(const BinaryMask& m) {
  const auto b = m.tight_box();
  const int x0 = static_cast<int>(b[0]), y0 = static_cast<int>(b[1]);
  const int x1 = static_cast<int>(b[2]), y1 = static_cast<int>(b[3]);
  auto row = [&](int y) {
    int n = 0;
    for (int x = x0; x < x1; ++x) n += m.at(y, x);
    return n;
  };
  const int h = y1 - y0;
  if (row(y0 + 3 * h / 4) > 1.8 * row(y0 + h / 4)) return "triangle";
  const double fill = static_cast<double>(m.area()) / (double(x1 - x0) * (y1 - y0));
  if (fill > 0.9) return "square";
  if (fill > 0.68) return "circle";
  return "cross";
}

std::string classify_color(const Tensor& img, const BinaryMask& m) {
  double rgb[3] = {0, 0, 0};
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.at(y, x))
        for (int c = 0; c < 3; ++c) rgb[c] += img.at({c, y, x});
  for (double& v : rgb) v /= static_cast<double>(m.area());
  if (rgb[0] > 0.6 && rgb[1] > 0.6) return "yellow";
  if (rgb[0] > 0.6) return "red";
  if (rgb[1] > 0.5) return "green";
  return "blue";
}

AnchorGrid four_anchors() {
  AnchorGrid g;
  g.centers = {{10, 10}, {20, 10}, {10, 20}, {20, 20}};
  g.stride_of = {8, 8, 8, 8};
  g.level_offsets = {0, 4, 4, 4};
  return g;
}

// Best total quality over all injective ground-truth to anchor maps.
double optimal_total(const std::vector<std::vector<double>>& q) {
  std::vector<int> perm(4);
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0;
  do {
    double s = 0;
    for (std::size_t g = 0; g < q.size(); ++g) s += q[g][static_cast<std::size_t>(perm[g])];
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double giou_oracle(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  const double iw = std::max(0.0, std::min(a[2], b[2]) - std::max(a[0], b[0]));
  const double ih = std::max(0.0, std::min(a[3], b[3]) - std::max(a[1], b[1]));
  const double inter = iw * ih;
  const double uni = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
  const double hull = (std::max(a[2], b[2]) - std::min(a[0], b[0])) * (std::max(a[3], b[3]) - std::min(a[1], b[1]));
  return inter / uni - (hull - uni) / hull;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("a lone circle covers pi r^2 within 5%") {
  for (float r : {8.0f, 12.5f, 20.0f}) {
    DatasetSpec s;
    s.only = {"green circle"};
    s.max_instances = 1;
    s.min_radius = s.max_radius = r;
    s.count = 3;
    for (const auto& scene : generate_dataset(s)) {
      REQUIRE(scene.instances.size() == 1);
      const double area = static_cast<double>(scene.instances[0].mask.area());
      CHECK(std::abs(area / (std::numbers::pi * r * r) - 1.0) <= 0.05);
    }
  }
}

TEST_CASE("scenes are a pure function of the spec") {
  const auto a = generate_dataset(tiny_spec(5, 9));
  const auto b = generate_dataset(tiny_spec(5, 9));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(bit_equal(a[i].image, b[i].image));
    REQUIRE(a[i].instances.size() == b[i].instances.size());
    for (std::size_t k = 0; k < a[i].instances.size(); ++k) CHECK(a[i].instances[k].mask == b[i].instances[k].mask);
  }
  CHECK(bit_equal(generate_scene(tiny_spec(5, 9), 3).image, a[3].image));
  CHECK_FALSE(bit_equal(generate_dataset(tiny_spec(1, 10))[0].image, a[0].image));
}

TEST_CASE("boxes are tight, masks disjoint, categories match colour and shape") {
  DatasetSpec s;
  s.count = 40;
  s.seed = 4;
  int checked = 0;
  for (const auto& scene : generate_dataset(s)) {
    std::vector<int> hits(static_cast<std::size_t>(s.height * s.width), 0);
    for (const auto& in : scene.instances) {
      const auto& m = in.mask;
      CHECK(in.box == m.tight_box());
      const int x0 = static_cast<int>(in.box[0]), y0 = static_cast<int>(in.box[1]);
      const int x1 = static_cast<int>(in.box[2]) - 1, y1 = static_cast<int>(in.box[3]) - 1;
      bool top = false, bottom = false, left = false, right = false;
      for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
          if (!m.at(y, x)) continue;
          CHECK((x >= x0 && x <= x1 && y >= y0 && y <= y1));
          top |= y == y0;
          bottom |= y == y1;
          left |= x == x0;
          right |= x == x1;
          ++hits[static_cast<std::size_t>(y * m.width + x)];
        }
      CHECK((top && bottom && left && right));
      CHECK(in.category == category_name(classify_color(scene.image, m), classify_shape(m)));
      ++checked;
    }
    CHECK(std::ranges::all_of(hits, [](int h) { return h <= 1; }));
  }
  CHECK(checked > 60);
}

TEST_CASE("excluded categories never appear") {
  DatasetSpec s = tiny_spec(30, 5);
  s.exclude = {"red cross", "blue circle"};
  CHECK(s.categories().size() == 14);
  for (const auto& scene : generate_dataset(s))
    for (const auto& in : scene.instances) CHECK((in.category != "red cross" && in.category != "blue circle"));
}

TEST_CASE("one ground truth with one anchor inside gets that anchor") {
  const auto grid = four_anchors();
  const Tensor boxes({4, 4}, {5, 5, 15, 15, 15, 5, 25, 15, 5, 15, 15, 25, 15, 15, 25, 25});
  const Tensor probs = Tensor::full({4, 1}, 0.5f);
  const auto r = assign_one_to_one(boxes, probs, grid, {{{16, 16, 24, 24}, 0}});
  REQUIRE(r.pairs.size() == 1);
  CHECK(r.pairs[0].anchor == 3);
  CHECK(r.fallbacks == 0);
  CHECK(r.injective(1));
}

TEST_CASE("greedy assignment against the optimal matching") {
  Rng rng(6);
  const auto grid = four_anchors();
  double worst_gap = 0;
  int instances = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int G = static_cast<int>(rng.integer(1, 4));
    std::vector<real> b(16), p(4 * static_cast<std::size_t>(G));
    for (int n = 0; n < 4; ++n) {
      const auto& c = grid.centers[static_cast<std::size_t>(n)];
      const float w = static_cast<float>(rng.uniform(2, 10));
      b[static_cast<std::size_t>(4 * n)] = c[0] - w;
      b[static_cast<std::size_t>(4 * n + 1)] = c[1] - static_cast<float>(rng.uniform(2, 10));
      b[static_cast<std::size_t>(4 * n + 2)] = c[0] + static_cast<float>(rng.uniform(2, 10));
      b[static_cast<std::size_t>(4 * n + 3)] = c[1] + w;
    }
    for (auto& v : p) v = static_cast<real>(rng.uniform(0.05, 1));
    std::vector<GroundTruth> gts;
    for (int g = 0; g < G; ++g) {
      gts.push_back({{static_cast<float>(rng.uniform(0, 9)), static_cast<float>(rng.uniform(0, 9)),
                      static_cast<float>(rng.uniform(21, 30)), static_cast<float>(rng.uniform(21, 30))},
                     g});
    }
    const Tensor boxes({4, 4}, b), probs({4, G}, p);
    const auto r = assign_one_to_one(boxes, probs, grid, gts, 1.0, 2.0);
    REQUIRE(r.injective(G));
    CHECK(r.fallbacks == 0);

    std::vector<std::vector<double>> q(static_cast<std::size_t>(G), std::vector<double>(4));
    for (int g = 0; g < G; ++g)
      for (int n = 0; n < 4; ++n) {
        const std::size_t o = static_cast<std::size_t>(4 * n);
        const double iou = box_iou({b[o], b[o + 1], b[o + 2], b[o + 3]}, gts[static_cast<std::size_t>(g)].box);
        q[static_cast<std::size_t>(g)][static_cast<std::size_t>(n)] = p[static_cast<std::size_t>(n * G + g)] * iou * iou;
      }
    double greedy = 0;
    for (const auto& pr : r.pairs) greedy += q[static_cast<std::size_t>(pr.gt)][static_cast<std::size_t>(pr.anchor)];
    const double opt = optimal_total(q);
    CHECK(greedy <= opt + 1e-12);
    worst_gap = std::max(worst_gap, (opt - greedy) / opt);
    ++instances;

    // Scaling every probability by one factor keeps the pairing.
    std::vector<real> scaled = p;
    for (auto& v : scaled) v *= 0.37f;
    const auto r2 = assign_one_to_one(boxes, Tensor({4, G}, scaled), grid, gts, 1.0, 2.0);
    for (std::size_t i = 0; i < r.pairs.size(); ++i) CHECK(r2.pairs[i].anchor == r.pairs[i].anchor);
  }
  MESSAGE("greedy vs optimal matching: worst relative gap " << worst_gap << " over " << instances << " instances");
}

TEST_CASE("crowded ground truths fall back to free anchors and stay injective") {
  const auto grid = four_anchors();
  const Tensor boxes = Tensor::full({4, 4}, 0);
  const Tensor probs = Tensor::full({4, 1}, 0.5f);
  std::vector<GroundTruth> gts(4, GroundTruth{{9, 9, 11, 11}, 0});
  const auto r = assign_one_to_one(boxes, probs, grid, gts);
  CHECK(r.injective(4));
  CHECK(r.fallbacks == 3);
  CHECK(r.pairs[0].anchor == 0);
}

TEST_CASE("classification loss reference values") {
  std::vector<ClsTarget> pos{{0, 1, 1.0}, {2, 0, 1.0}};
  std::vector<real> perfect(6, -20);
  perfect[1] = perfect[4] = 20;
  CHECK(loss_cls(Tensor({3, 2}, perfect), pos).item() <= 1e-3);
  CHECK(loss_cls(Tensor::zeros({3, 2}), pos).item() == doctest::Approx(ln2()).epsilon(1e-6));
  std::vector<ClsTarget> soft{{1, 1, 0.3}};
  CHECK(loss_cls(Tensor::zeros({3, 2}), soft).item() == doctest::Approx(ln2()).epsilon(1e-6));
}

TEST_CASE("box loss reference values") {
  const Tensor a({2, 4}, {1, 2, 5, 9, 10, 10, 30, 20});
  CHECK(loss_box(a, a).item() == doctest::Approx(0).epsilon(1e-7));
  const Tensor far({1, 4}, {0, 0, 1, 1}), other({1, 4}, {100, 100, 101, 101});
  const double l = loss_box(far, other).item();
  CHECK(l > 1.0);
  CHECK(l < 2.0);

  Rng rng(7);
  std::vector<real> p(40), t(40);
  for (int i = 0; i < 10; ++i) {
    for (auto* v : {&p, &t}) {
      const double x = rng.uniform(0, 50), y = rng.uniform(0, 50);
      (*v)[static_cast<std::size_t>(4 * i)] = static_cast<real>(x);
      (*v)[static_cast<std::size_t>(4 * i + 1)] = static_cast<real>(y);
      (*v)[static_cast<std::size_t>(4 * i + 2)] = static_cast<real>(x + rng.uniform(1, 30));
      (*v)[static_cast<std::size_t>(4 * i + 3)] = static_cast<real>(y + rng.uniform(1, 30));
    }
  }
  const Tensor g = giou(Tensor({10, 4}, p), Tensor({10, 4}, t));
  double worst = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    const double ref = giou_oracle({p[4 * i], p[4 * i + 1], p[4 * i + 2], p[4 * i + 3]},
                                   {t[4 * i], t[4 * i + 1], t[4 * i + 2], t[4 * i + 3]});
    worst = std::max(worst, std::abs(ref - g.data()[i]));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("mask loss reference values") {
  MaskTarget t;
  t.height = t.width = 4;
  t.coverage = {0, 0, 0, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0};
  t.crop = {0, 0, 4, 4};
  std::vector<real> perfect(16);
  for (std::size_t i = 0; i < 16; ++i) perfect[i] = t.coverage[i] > 0 ? 20.0f : -20.0f;
  CHECK(loss_mask(Tensor({1, 16}, perfect), {t}, false).item() <= 1e-3);
  CHECK(loss_mask(Tensor({1, 16}, perfect), {t}, true).item() <= 1e-3);
  CHECK(loss_mask(Tensor::zeros({1, 16}), {t}, false).item() == doctest::Approx(ln2()).epsilon(1e-6));
}

TEST_CASE("total loss weights") {
  const Tensor c = Tensor::scalar(0.7f), b = Tensor::scalar(0.4f), m = Tensor::scalar(1.3f), r = Tensor::scalar(0.2f);
  LossWeights w{0, 0, 0, 0};
  CHECK(total_loss(c, b, m, r, w).total_value == 0.0);
  for (int k = 0; k < 4; ++k) {
    LossWeights one{k == 0 ? 1.0 : 0.0, k == 1 ? 1.0 : 0.0, k == 2 ? 1.0 : 0.0, k == 3 ? 1.0 : 0.0};
    const double expect = std::array<double, 4>{0.7, 0.4, 1.3, 0.2}[static_cast<std::size_t>(k)];
    CHECK(total_loss(c, b, m, r, one).total_value == doctest::Approx(expect).epsilon(1e-6));
  }
  const LossWeights d;
  const double ref = d.cls * 0.7 + d.box * 0.4 + d.mask * 1.3 + d.ref * 0.2;
  CHECK(std::abs(total_loss(c, b, m, r, d).total_value - ref) <= 1e-6);
  CHECK(total_loss(c, b, m, Tensor(), d).total_value == doctest::Approx(d.cls * 0.7 + d.box * 0.4 + d.mask * 1.3));
  CHECK_THROWS_AS((LossWeights{-1, 0, 0, 0}.validate()), ConfigError);
}

TEST_CASE("one text epoch on eight scenes lowers the loss") {
  Model model(tiny_model());
  auto aux = AuxAligner::create(16, 2);
  const auto scenes = generate_dataset(tiny_spec(8, 11));
  const auto prompts = encode_text(tiny_spec(8, 11).categories(), TextEncoder(16));
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 4;
  tc.lr = 0.02;
  tc.weights.cls = 300;
  tc.seed = 3;
  Trainer tr(Stage::kText, model, aux, scenes, prompts, tc);
  const double before = tr.evaluate().total;
  const auto res = tr.run();
  CHECK(res.completed);
  CHECK(res.injectivity_violations == 0);
  CHECK(tr.evaluate().total < before);
}

TEST_CASE("zero learning rate leaves every parameter bit-identical") {
  Model model(tiny_model());
  auto aux = AuxAligner::create(16, 2);
  const auto scenes = generate_dataset(tiny_spec(4, 12));
  const auto prompts = encode_text(tiny_spec(4, 12).categories(), TextEncoder(16));
  const auto before = model.parameter_hash();
  const auto aux_before = aux.w1.clone();
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 2;
  tc.lr = 0;
  Trainer tr(Stage::kText, model, aux, scenes, prompts, tc);
  tr.run();
  CHECK(model.parameter_hash() == before);
  CHECK(bit_equal(aux.w1, aux_before));
}

TEST_CASE("resuming from a state checkpoint is bit-exact") {
  const auto scenes = generate_dataset(tiny_spec(8, 13));
  const auto prompts = encode_text(tiny_spec(8, 13).categories(), TextEncoder(16));
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.lr = 0.02;
  tc.hflip = true;
  tc.seed = 5;

  Model straight(tiny_model());
  auto aux_a = AuxAligner::create(16, 2);
  Trainer ta(Stage::kText, straight, aux_a, scenes, prompts, tc);
  ta.run();

  Checkpoint mid;
  {
    Model m(tiny_model());
    auto aux = AuxAligner::create(16, 2);
    Trainer tr(Stage::kText, m, aux, scenes, prompts, tc);
    TrainHooks h;
    h.stop_at_step = 3;
    tr.run(h);
    mid = tr.state();
  }
  const test::TempDir dir("resume");
  save_checkpoint(dir / "mid.y26", mid);
  Model resumed(tiny_model());
  auto aux_b = AuxAligner::create(16, 7);
  Trainer tb(Stage::kText, resumed, aux_b, scenes, prompts, tc);
  tb.load_state(load_checkpoint(dir / "mid.y26"));
  CHECK(tb.step() == 3);
  tb.run();
  CHECK(resumed.parameter_hash() == straight.parameter_hash());
  CHECK(bit_equal(aux_b.w2, aux_a.w2));
}

TEST_CASE("visual stage updates only the SAVPE branch") {
  Model model(tiny_model());
  auto aux = AuxAligner::create(16, 2, 1.0);
  const auto scenes = generate_dataset(tiny_spec(6, 14));
  const auto prompts = encode_text(tiny_spec(6, 14).categories(), TextEncoder(16));
  const auto frozen = model.parameter_hash_excluding("savpe.");
  const auto branch = model.parameter_hash("savpe.");
  const Tensor aux_w1 = aux.w1.clone();
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 3;
  tc.lr = 2e-3;
  tc.weight_decay = 0.01;
  Trainer tr(Stage::kSavpe, model, aux, scenes, prompts, tc);
  TrainHooks h;
  h.stop_at_step = 1;
  tr.run(h);
  CHECK(model.parameter_hash_excluding("savpe.") == frozen);
  CHECK(model.parameter_hash("savpe.") != branch);
  CHECK(bit_equal(aux.w1, aux_w1));
}

TEST_CASE("prompt-free stage updates only the objectness head") {
  Model model(tiny_model());
  auto aux = AuxAligner::create(16, 2, 1.0);
  const auto scenes = generate_dataset(tiny_spec(6, 15));
  const auto prompts = encode_text(tiny_spec(6, 15).categories(), TextEncoder(16));
  const auto vocab = build_vocabulary(std::vector<std::string>{"red circle", "tree", "lamp"}, TextEncoder(16));
  const Tensor refined_before = refine_prompts(vocab.prompts, aux).embeddings;
  const auto frozen = model.parameter_hash_excluding("head.obj");
  const auto head = model.parameter_hash("head.obj");
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 3;
  tc.lr = 2e-3;
  Trainer tr(Stage::kPromptFree, model, aux, scenes, prompts, tc);
  tr.run();
  CHECK(model.parameter_hash_excluding("head.obj") == frozen);
  CHECK(model.parameter_hash("head.obj") != head);
  CHECK(bit_equal(refine_prompts(vocab.prompts, aux).embeddings, refined_before));
}

TEST_CASE("three stages on a small split") {
  DatasetSpec spec = tiny_spec(96, 21);
  spec.max_instances = 2;
  spec.colors = {"red", "blue"};
  spec.shapes = {"circle", "square"};
  const auto train = generate_dataset(spec);
  DatasetSpec vspec = spec;
  vspec.count = 48;
  vspec.seed = 22;
  const auto val = generate_dataset(vspec);
  const auto prompts = encode_text(spec.categories(), TextEncoder(16));

  Model model(tiny_model());
  auto aux = AuxAligner::create(16, 2);
  TrainConfig text;
  text.epochs = 8;
  text.batch_size = 8;
  text.lr = 0.02;
  text.weights.cls = 300;
  text.seed = 1;
  Trainer(Stage::kText, model, aux, train, prompts, text).run();

  const auto refined = refine_prompts(prompts, aux);
  TrainConfig visual;
  visual.epochs = 6;
  visual.batch_size = 8;
  visual.lr = 5e-3;
  visual.weight_decay = 0.01;
  visual.weights.cls = 300;
  visual.seed = 2;
  Trainer(Stage::kSavpe, model, aux, train, prompts, visual).run();
  const auto cc = savpe_cue_cosine(model, val, refined);
  MESSAGE("cue cosine same " << cc.same << " cross " << cc.cross);
  CHECK(cc.same > cc.cross);

  TrainConfig pf = visual;
  pf.weights = LossWeights{};
  pf.seed = 3;
  Trainer(Stage::kPromptFree, model, aux, train, prompts, pf).run();
  const auto cal = calibrate_delta(model, train, refined, 0.95);
  const auto on_val = calibrate_delta(model, val, refined, 0.95);
  CHECK(cal.positive_mean > cal.negative_mean);
  CHECK(on_val.positive_mean > on_val.negative_mean);

  // Recall of the training-set delta on held-out scenes.
  std::int64_t kept = 0, total = 0;
  const Vocabulary vocab = build_vocabulary(spec.categories(), TextEncoder(16));
  for (const auto& s : val) {
    const auto fwd = model.forward(s.image);
    const auto obj = objectness_scores(fwd.head, vocab);
    for (const auto& p : match_scene(model, fwd, s, refined).pairs) {
      ++total;
      kept += obj[static_cast<std::size_t>(p.anchor)] > cal.delta ? 1 : 0;
    }
  }
  const double recall = static_cast<double>(kept) / static_cast<double>(total);
  MESSAGE("delta " << cal.delta << " validation recall " << recall);
  CHECK(recall >= 0.95);
}

TEST_CASE("negative pool leaves out every colour and shape composition") {
  const test::TempDir dir("negpool");
  RunConfig cfg;
  cfg.model.input_height = cfg.model.input_width = 64;
  cfg.dataset.count = 8;
  cfg.dataset.height = cfg.dataset.width = 64;
  cfg.dataset.seed = 4;
  cfg.dataset.exclude = {"red cross"};
  cfg.text.epochs = 1;
  cfg.text.batch_size = 4;
  cfg.text.seed = 1;
  const auto scenes = generate_dataset(cfg.dataset);

  // Only grid names, held-out one included: the pool is empty.
  {
    std::ofstream f(dir / "grid.txt");
    for (const auto& c : kAllColors)
      for (const auto& s : kAllShapes) f << category_name(c, s) << '\n';
  }
  cfg.paths.vocabulary = (dir / "grid.txt").string();
  const auto train = [&](int negatives) {
    RunConfig c = cfg;
    c.text.negatives_per_step = negatives;
    Model m(c.model);
    AuxAligner aux = initial_aligner(c.model);
    return run_stage(c, Stage::kText, m, aux, scenes).checkpoint;
  };
  const Checkpoint plain = train(0), with_grid = train(4);
  REQUIRE(plain.tensors.size() == with_grid.tensors.size());
  for (std::size_t i = 0; i < plain.tensors.size(); ++i)
    CHECK(test::values(plain.tensors[i].tensor) == test::values(with_grid.tensors[i].tensor));

  // One foreign name makes the run differ.
  {
    std::ofstream f(dir / "grid.txt", std::ios::app);
    f << "rubber tree\n";
  }
  const Checkpoint with_other = train(4);
  bool differs = false;
  for (std::size_t i = 0; i < plain.tensors.size(); ++i)
    differs = differs || test::values(plain.tensors[i].tensor) != test::values(with_other.tensors[i].tensor);
  CHECK(differs);
}

}  // TEST_SUITE
