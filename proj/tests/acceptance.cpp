// Acceptance run: trains the desk-scale models (or reuses checkpoints cached
// in the work directory) and prints one PASS/FAIL line per criterion.
//
// Usage: yoloe_acceptance [work dir] [config dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "yoloe/checkpoint.hpp"
#include "yoloe/config.hpp"
#include "yoloe/fold.hpp"
#include "yoloe/image_io.hpp"
#include "yoloe/inference.hpp"
#include "yoloe/metrics.hpp"
#include "yoloe/pipeline.hpp"
#include "yoloe/verify.hpp"

using namespace yoloe;
namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

struct Report {
  int failed = 0;
  void line(int id, bool ok, const std::string& name, const std::string& detail) {
    std::printf("%s [%d] %s: %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failed;
  }
};

void progress(const std::string& s) {
  std::fprintf(stderr, "... %s\n", s.c_str());
  std::fflush(stderr);
}

// One trained stage, either fresh or from the cache.
struct StageOut {
  Checkpoint ckpt;
  double seconds = 0;
  int epochs = 0;
  int violations = 0;
};

constexpr const char* kMetaSeconds = "acceptance_seconds";
constexpr const char* kMetaEpochs = "acceptance_epochs";
constexpr const char* kMetaViolations = "acceptance_violations";
constexpr const char* kMetaConfig = "acceptance_config";

StageOut train_or_load(const RunConfig& config, Stage stage, const Checkpoint* init,
                       const std::vector<SyntheticScene>& scenes, const fs::path& file) {
  const std::string key = run_config_to_json(config) + (init ? init->metadata.extra.at(kMetaSeconds) : "");
  if (fs::exists(file)) {
    Checkpoint c = load_checkpoint(file);
    auto it = c.metadata.extra.find(kMetaConfig);
    if (it != c.metadata.extra.end() && it->second == key) {
      progress("reusing " + file.string());
      return {c, std::stod(c.metadata.extra.at(kMetaSeconds)), std::stoi(c.metadata.extra.at(kMetaEpochs)),
              std::stoi(c.metadata.extra.at(kMetaViolations))};
    }
  }
  progress(std::string("training ") + stage_name(stage) + " -> " + file.string());
  Model model = init ? model_from_checkpoint(*init) : Model(config.model);
  AuxAligner aux = init && has_aligner(*init) ? aligner_from_checkpoint(*init) : initial_aligner(config.model);
  StageOptions so;
  so.hooks.on_epoch = [](const EpochLog& e) {
    std::fprintf(stderr, "    epoch %d loss %.4f violations %d %.1fs\n", e.epoch, e.total, e.injectivity_violations,
                 e.seconds);
  };
  const auto t0 = std::chrono::steady_clock::now();
  StageRun run = run_stage(config, stage, model, aux, scenes, so);
  StageOut out{std::move(run.checkpoint), seconds_since(t0), static_cast<int>(run.result.epochs.size()),
               run.result.injectivity_violations};
  out.ckpt.metadata.extra[kMetaSeconds] = fmt("%.3f", out.seconds);
  out.ckpt.metadata.extra[kMetaEpochs] = std::to_string(out.epochs);
  out.ckpt.metadata.extra[kMetaViolations] = std::to_string(out.violations);
  out.ckpt.metadata.extra[kMetaConfig] = key;
  save_checkpoint_atomic(file, out.ckpt);
  return out;
}

struct Loaded {
  Model model;
  AuxAligner aux;
};
Loaded load(const Checkpoint& c) { return {model_from_checkpoint(c), aligner_from_checkpoint(c)}; }

std::vector<std::vector<GroundTruthMask>> ground_truth(const std::vector<SyntheticScene>& scenes) {
  std::vector<std::vector<GroundTruthMask>> g;
  for (const auto& s : scenes) g.push_back(scene_ground_truth(s));
  return g;
}

InferOptions eval_options() {
  InferOptions o;
  o.score_threshold = 0.001f;
  return o;
}

double text_map50(const Loaded& m, const RunConfig& config, const std::vector<SyntheticScene>& scenes,
                  const std::vector<std::string>& names) {
  const auto fold = reprta_fold(text_prompts(config, names), m.aux, m.model, FoldMode::kFused);
  return compute_map(detect_text(m.model, scenes, fold, eval_options()), ground_truth(scenes), coco_iou_thresholds(),
                     names)
      .map50;
}

Vocabulary refined_vocabulary(const Loaded& m, const RunConfig& config) {
  Vocabulary v = build_vocabulary(config.paths.vocabulary, TextEncoder(m.model.config().embed_dim));
  const auto kind = v.prompts.kind;
  v.prompts = refine_prompts(v.prompts, m.aux);
  v.prompts.kind = kind;
  return v;
}

bool same_tensors(const Checkpoint& a, const Checkpoint& b) {
  if (a.tensors.size() != b.tensors.size()) return false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    const auto& x = a.tensors[i];
    const auto& y = b.tensors[i];
    if (x.name != y.name || x.tensor.shape() != y.tensor.shape()) return false;
    if (!std::ranges::equal(x.tensor.data(), y.tensor.data(),
                            [](real p, real q) { return std::memcmp(&p, &q, sizeof p) == 0; }))
      return false;
  }
  return true;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

BinaryMask rect(int x0, int y0, int x1, int y1) {
  BinaryMask m(16, 16);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.at(y, x) = 1;
  return m;
}

Detection det(const std::string& label, float score, BinaryMask mask) {
  Detection d;
  d.label = label;
  d.score = score;
  d.mask = std::move(mask);
  return d;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_work");
  const fs::path configs = argc > 2 ? fs::path(argv[2]) : fs::path(YOLOE_CONFIG_DIR);
  fs::create_directories(work);
  Report report;

  try {
    // 1. Fold equivalence.
    {
      const auto t0 = std::chrono::steady_clock::now();
      const auto f = verify::fold_suite(100, 1);
      const double secs = seconds_since(t0);
      const bool ok = f.triples == 100 && f.max_diff_stacked <= 1e-5 && f.max_diff_fused <= 1e-5 &&
                      f.argmax_agree_stacked == 1.0 && f.argmax_agree_fused == 1.0 && f.fused_cheaper_every_triple &&
                      f.flops_fused < f.flops_stacked && secs <= 120;
      std::ostringstream d;
      d << f.triples << " triples, max diff stacked " << f.max_diff_stacked << " fused " << f.max_diff_fused
        << ", argmax agreement " << f.argmax_agree_stacked * 100 << "% / " << f.argmax_agree_fused * 100
        << "%, flops fused " << f.flops_fused << " < stacked " << f.flops_stacked << ", " << fmt("%.1fs", secs);
      report.line(1, ok, "fold equivalence", d.str());
    }

    const RunConfig w16 = load_run_config(configs / "desk_w16.json");
    const RunConfig w32 = load_run_config(configs / "desk_w32.json");
    progress("generating desk scenes");
    const auto train = training_scenes(w16);
    const auto val = validation_scenes(w16);
    const auto seen = training_categories(w16);
    DatasetSpec zs = w16.dataset;
    zs.count = 200;
    zs.seed = 3;
    zs.only = zs.exclude;
    zs.exclude.clear();
    const auto held = zs.only;
    const auto zero_shot = generate_dataset(zs);

    const StageOut text = train_or_load(w16, Stage::kText, nullptr, train, work / "desk_w16_text.y26");
    const StageOut savpe = train_or_load(w16, Stage::kSavpe, &text.ckpt, train, work / "desk_w16_savpe.y26");
    const StageOut pf = train_or_load(w16, Stage::kPromptFree, &savpe.ckpt, train, work / "desk_w16_pf.y26");
    const StageOut text32 = train_or_load(w32, Stage::kText, nullptr, train, work / "desk_w32_text.y26");

    const Loaded m_text = load(text.ckpt);
    const Loaded m_savpe = load(savpe.ckpt);
    const Loaded m_pf = load(pf.ckpt);
    const Loaded m_text32 = load(text32.ckpt);

    // 2. LRPC against brute force with the full vocabulary.
    {
      progress("LRPC comparison");
      const Vocabulary vocab = refined_vocabulary(m_pf, w16);
      const double delta = checkpoint_delta(pf.ckpt).value_or(0.0);
      std::vector<Tensor> images;
      for (const auto& s : val) images.push_back(s.image);
      const InferOptions o = eval_options();
      const auto t0 = std::chrono::steady_clock::now();
      const auto at = compare_lrpc_with_brute_force(m_pf.model, images, vocab, delta, o);
      const auto all = compare_lrpc_with_brute_force(m_pf.model, images, vocab, -kInf, o);
      const double secs = seconds_since(t0);
      const double savings = at.report.savings_ratio();
      const bool ok = vocab.prompts.size() == 4585 && at.exact() && at.max_score_diff <= 1e-6 && savings >= 0.90 &&
                      all.exact() && all.max_score_diff == 0 && secs <= 300;
      std::ostringstream d;
      d << "C=" << vocab.prompts.size() << ", delta " << delta << ": " << at.detections << " detections, "
        << at.mismatches << " mismatches, max score diff " << at.max_score_diff << ", savings " << savings
        << "; delta -inf: " << all.mismatches << " mismatches of " << all.detections << ", max score diff "
        << all.max_score_diff << ", " << fmt("%.1fs", secs);
      report.line(2, ok, "lazy region-prompt matching", d.str());
    }

    // 3. Gradients.
    {
      const auto t0 = std::chrono::steady_clock::now();
      const auto g = verify::gradient_suite(20, 1);
      const double secs = seconds_since(t0);
      bool ok = secs <= 60 && g.size() == 5;
      std::ostringstream d;
      for (const auto& s : g) {
        ok = ok && s.instances == 20 && s.worst_rel_error <= 1e-3;
        d << s.target << " " << s.worst_rel_error << ", ";
      }
      d << fmt("%.1fs", secs);
      report.line(3, ok, "finite-difference gradients", d.str());
    }

    // 4. Threshold-0 decode and injectivity during the desk run.
    {
      InferOptions o;
      o.score_threshold = 0;
      const auto prompts = refine_prompts(text_prompts(w16, seen), m_text.aux);
      bool exact = true;
      std::int64_t n = 0;
      for (const Loaded* m : {&m_text, &m_text32, &m_pf}) {
        for (int i = 0; i < 10; ++i) {
          const auto fwd = m->model.forward(val[static_cast<std::size_t>(i)].image);
          n = fwd.head.num_anchors();
          const auto dets = infer_text(m->model, val[static_cast<std::size_t>(i)].image, prompts, o);
          std::set<std::int64_t> ids;
          for (const auto& x : dets) ids.insert(x.anchor_id);
          exact = exact && static_cast<std::int64_t>(dets.size()) == n && static_cast<std::int64_t>(ids.size()) == n;
        }
      }
      const int violations = text.violations + savpe.violations + pf.violations + text32.violations;
      std::ostringstream d;
      d << "threshold 0 emits N=" << n << " distinct anchors on 30 images: " << (exact ? "yes" : "no")
        << ", injectivity violations " << violations;
      report.line(4, exact && violations == 0, "one-to-one decoding", d.str());
    }

    // 5. Text-prompted desk run.
    {
      progress("text evaluation");
      const double map16 = text_map50(m_text, w16, val, seen);
      const double zero = text_map50(m_text, w16, zero_shot, held);
      const double map32 = text_map50(m_text32, w32, val, seen);
      const bool ok = map16 >= 0.60 && zero >= 0.30 && map32 >= map16 && text.epochs <= 20 && text.seconds <= 1800;
      std::ostringstream d;
      d << "w16 mAP50 " << map16 << ", zero-shot " << zero << ", w32 " << map32 << ", " << text.epochs
        << " epochs in " << fmt("%.0fs", text.seconds) << " (w32 " << fmt("%.0fs", text32.seconds) << ")";
      report.line(5, ok, "desk text prompting", d.str());
    }

    // 6. Visual prompting after the SAVPE stage.
    {
      progress("visual evaluation");
      const bool frozen = m_text.model.parameter_hash_excluding("savpe.") ==
                              m_savpe.model.parameter_hash_excluding("savpe.") &&
                          m_text.model.parameter_hash("savpe.") != m_savpe.model.parameter_hash("savpe.");
      const auto probe = text_prompts(w16, seen);
      const auto ra = refine_prompts(probe, m_text.aux), rb = refine_prompts(probe, m_savpe.aux);
      const bool aux_frozen = std::ranges::equal(ra.embeddings.data(), rb.embeddings.data());
      const double text_map = text_map50(m_savpe, w16, val, seen);
      const auto visual = reference_visual_prompts(m_savpe.model, train, seen, 16);
      const double visual_map = compute_map(detect_with_prompts(m_savpe.model, val, visual, eval_options()),
                                            ground_truth(val), coco_iou_thresholds(), seen)
                                    .map50;
      const bool ok = frozen && aux_frozen && visual_map >= 0.8 * text_map;
      std::ostringstream d;
      d << "non-SAVPE parameters frozen: " << (frozen && aux_frozen ? "yes" : "no") << ", visual mAP50 " << visual_map
        << " vs 0.8 x text " << 0.8 * text_map;
      report.line(6, ok, "visual prompting", d.str());
    }

    // 7. Prompt-free inference.
    {
      progress("prompt-free evaluation");
      const Vocabulary vocab = refined_vocabulary(m_pf, w16);
      const double delta = checkpoint_delta(pf.ckpt).value_or(0.0);
      const double pf_map = compute_map(detect_prompt_free(m_pf.model, val, vocab, delta, eval_options()),
                                        ground_truth(val), coco_iou_thresholds(), seen)
                                .map50;
      const double text_map = text_map50(m_pf, w16, val, seen);
      const auto refined = refine_prompts(text_prompts(w16, seen), m_pf.aux);
      std::int64_t kept = 0, total = 0;
      for (const auto& s : val) {
        const auto fwd = m_pf.model.forward(s.image);
        const auto obj = objectness_scores(fwd.head, vocab);
        for (const auto& p : match_scene(m_pf.model, fwd, s, refined).pairs) {
          ++total;
          kept += obj[static_cast<std::size_t>(p.anchor)] > delta ? 1 : 0;
        }
      }
      const double recall = total ? static_cast<double>(kept) / static_cast<double>(total) : 0;
      std::ostringstream d;
      d << "prompt-free mAP50 " << pf_map << " <= text " << text_map << ", matched-anchor recall at delta " << delta
        << " " << recall << " (" << kept << "/" << total << ")";
      report.line(7, pf_map <= text_map && recall >= 0.95, "prompt-free", d.str());
    }

    // 8. Persistence, resume and metric fixture.
    {
      progress("persistence");
      const fs::path a = work / "roundtrip_a.y26", b = work / "roundtrip_b.y26";
      save_checkpoint(a, pf.ckpt);
      const Checkpoint back = load_checkpoint(a);
      save_checkpoint(b, back);
      const bool ckpt_ok = same_tensors(back, pf.ckpt) && read_bytes(a) == read_bytes(b);

      const auto& scene = val.front();
      write_ppm(work / "scene.ppm", scene.image);
      const Tensor img = read_ppm(work / "scene.ppm");
      double worst = 0;
      for (std::size_t i = 0; i < img.data().size(); ++i)
        worst = std::max(worst, std::abs(double(img.data()[i]) - scene.image.data()[i]));
      const auto& mask = scene.instances.front().mask;
      write_pgm(work / "mask.pgm", mask);
      const bool image_ok = worst <= 0.5 / 255 + 1e-7 && read_pgm(work / "mask.pgm") == mask;

      // Resume on the smoke config: stop after 3 steps, reload, continue.
      RunConfig small = load_run_config(configs / "smoke.json");
      small.dataset.count = 32;
      small.text.epochs = 2;
      const auto few = training_scenes(small);
      Model full_model(small.model);
      AuxAligner full_aux = initial_aligner(small.model);
      const auto full = run_stage(small, Stage::kText, full_model, full_aux, few);
      Model part_model(small.model);
      AuxAligner part_aux = initial_aligner(small.model);
      StageOptions stop;
      stop.hooks.stop_at_step = 3;
      const auto part = run_stage(small, Stage::kText, part_model, part_aux, few, stop);
      save_checkpoint(work / "partial.y26", part.checkpoint);
      const Checkpoint state = load_checkpoint(work / "partial.y26");
      Model resumed_model(small.model);
      AuxAligner resumed_aux = initial_aligner(small.model);
      StageOptions cont;
      cont.resume = &state;
      const auto resumed = run_stage(small, Stage::kText, resumed_model, resumed_aux, few, cont);
      const bool resume_ok = part.result.steps == 3 && resumed.result.completed && same_tensors(full.checkpoint, resumed.checkpoint);

      const BinaryMask g1 = rect(0, 0, 4, 4), g2 = rect(8, 8, 14, 14), off = rect(4, 10, 7, 15);
      const std::vector<std::vector<GroundTruthMask>> gts{{{"a", g1}, {"a", g2}}};
      const double got =
          compute_map({{det("a", 0.9f, g1), det("a", 0.8f, off), det("a", 0.7f, g2)}}, gts).map50;
      const double expected = (51.0 + 50.0 * 2.0 / 3.0) / 101.0;
      const bool map_ok = std::abs(got - expected) <= 1e-6;

      std::ostringstream d;
      d << "checkpoint round trip " << (ckpt_ok ? "bit-identical" : "differs") << ", PPM max error " << worst * 255
        << "/255, PGM " << (image_ok ? "exact" : "mismatch") << ", resume " << (resume_ok ? "bit-equal" : "differs")
        << ", mAP fixture error " << std::abs(got - expected);
      report.line(8, ckpt_ok && image_ok && resume_ok && map_ok, "persistence and metrics", d.str());
    }
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance run aborted: %s\n", e.what());
    return 1;
  }

  std::printf("%d criterion(s) failed\n", report.failed);
  return report.failed == 0 ? 0 : 1;
}
