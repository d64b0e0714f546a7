#include "yoloe/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "yoloe/autograd.hpp"
#include "yoloe/ops.hpp"
#include "yoloe/savpe.hpp"

namespace yoloe {

std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

namespace {

struct Ranked {
  std::size_t image, order;
  float score;
  const Detection* det;
};

// 101-point interpolated AP from a ranked TP/FP sequence.
double average_precision(const std::vector<std::uint8_t>& tp, std::size_t num_gt) {
  const std::size_t n = tp.size();
  std::vector<double> precision(n), recall(n);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    hits += tp[i];
    precision[i] = static_cast<double>(hits) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(hits) / static_cast<double>(num_gt);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0;
  std::size_t j = 0;
  for (int r = 0; r <= 100; ++r) {
    const double level = r / 100.0;
    while (j < n && recall[j] < level - 1e-12) ++j;
    if (j < n) ap += precision[j];
  }
  return ap / 101.0;
}

}  // namespace

MapResult compute_map(const std::vector<std::vector<Detection>>& detections,
                      const std::vector<std::vector<GroundTruthMask>>& ground_truth,
                      const std::vector<double>& thresholds, const std::vector<std::string>& categories) {
  if (detections.size() != ground_truth.size()) {
    throw UsageError("compute_map: " + std::to_string(detections.size()) + " detection lists for " +
                     std::to_string(ground_truth.size()) + " images");
  }
  if (thresholds.empty()) throw UsageError("compute_map: no IoU thresholds");
  const auto it50 = std::ranges::find_if(thresholds, [](double t) { return std::abs(t - 0.5) < 1e-9; });
  if (it50 == thresholds.end()) throw UsageError("compute_map: thresholds must include 0.5");
  const auto i50 = static_cast<std::size_t>(it50 - thresholds.begin());

  std::set<std::string> cats;
  for (const auto& img : ground_truth)
    for (const auto& g : img) {
      if (categories.empty() || std::ranges::find(categories, g.label) != categories.end()) cats.insert(g.label);
    }

  MapResult result;
  for (const auto& cat : cats) {
    std::vector<Ranked> ranked;
    std::size_t num_gt = 0;
    for (std::size_t i = 0; i < ground_truth.size(); ++i) {
      for (const auto& g : ground_truth[i]) num_gt += g.label == cat ? 1 : 0;
      for (std::size_t k = 0; k < detections[i].size(); ++k) {
        if (detections[i][k].label == cat) ranked.push_back({i, k, detections[i][k].score, &detections[i][k]});
      }
    }
    std::ranges::stable_sort(ranked, [](const Ranked& a, const Ranked& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.image != b.image) return a.image < b.image;
      return a.order < b.order;
    });
    // IoU of each ranked detection with each same-label ground truth.
    std::vector<std::vector<std::pair<std::size_t, double>>> ious(ranked.size());
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      const auto& gts = ground_truth[ranked[r].image];
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (gts[g].label == cat) ious[r].push_back({g, mask_iou(ranked[r].det->mask, gts[g].mask)});
      }
    }
    std::vector<double> aps;
    for (double thr : thresholds) {
      std::vector<std::vector<std::uint8_t>> used(ground_truth.size());
      for (std::size_t i = 0; i < ground_truth.size(); ++i) used[i].assign(ground_truth[i].size(), 0);
      std::vector<std::uint8_t> tp(ranked.size(), 0);
      for (std::size_t r = 0; r < ranked.size(); ++r) {
        double best = -1;
        std::size_t best_g = 0;
        for (const auto& [g, iou] : ious[r]) {
          if (!used[ranked[r].image][g] && iou >= thr && iou > best) {
            best = iou;
            best_g = g;
          }
        }
        if (best >= 0) {
          used[ranked[r].image][best_g] = 1;
          tp[r] = 1;
        }
      }
      aps.push_back(average_precision(tp, num_gt));
    }
    double mean = 0;
    for (double a : aps) mean += a;
    result.ap50[cat] = aps[i50];
    result.ap50_95[cat] = mean / static_cast<double>(aps.size());
  }
  if (!cats.empty()) {
    for (const auto& c : cats) {
      result.map50 += result.ap50[c];
      result.map50_95 += result.ap50_95[c];
    }
    result.map50 /= static_cast<double>(cats.size());
    result.map50_95 /= static_cast<double>(cats.size());
  }
  return result;
}

std::vector<GroundTruthMask> scene_ground_truth(const SyntheticScene& scene) {
  std::vector<GroundTruthMask> out;
  for (const auto& in : scene.instances) out.push_back({in.category, in.mask});
  return out;
}

std::vector<std::vector<Detection>> detect_text(const Model& model, const std::vector<SyntheticScene>& scenes,
                                                const FoldedClassifier& fold, const InferOptions& options) {
  std::vector<std::vector<Detection>> out;
  for (const auto& s : scenes) out.push_back(infer_text(model, s.image, fold, options));
  return out;
}

std::vector<std::vector<Detection>> detect_with_prompts(const Model& model, const std::vector<SyntheticScene>& scenes,
                                                        const PromptSet& prompts, const InferOptions& options) {
  std::vector<std::vector<Detection>> out;
  for (const auto& s : scenes) out.push_back(infer_text(model, s.image, prompts, options));
  return out;
}

std::vector<std::vector<Detection>> detect_prompt_free(const Model& model, const std::vector<SyntheticScene>& scenes,
                                                       const Vocabulary& vocab, double delta,
                                                       const InferOptions& options, LrpcReport* report) {
  std::vector<std::vector<Detection>> out;
  for (const auto& s : scenes) {
    auto [dets, rep] = infer_prompt_free(model, s.image, vocab, delta, options);
    out.push_back(std::move(dets));
    if (report) *report += rep;
  }
  return out;
}

LrpcComparison compare_lrpc_with_brute_force(const Model& model, const std::vector<Tensor>& images,
                                             const Vocabulary& vocab, double delta, const InferOptions& options) {
  NoGradGuard ng;
  using clock = std::chrono::steady_clock;
  LrpcComparison out;
  for (const auto& image : images) {
    const auto fwd = model.forward(image);
    auto t0 = clock::now();
    auto [lazy, report] = infer_prompt_free(model, fwd, vocab, delta, options);
    auto t1 = clock::now();
    const auto brute = brute_force_vocab_match(model, fwd, vocab, options);
    auto t2 = clock::now();
    out.seconds_lazy += std::chrono::duration<double>(t1 - t0).count();
    out.seconds_brute += std::chrono::duration<double>(t2 - t1).count();
    out.report += report;
    ++out.images;
    out.detections += static_cast<std::int64_t>(lazy.size());

    const auto obj = objectness_scores(fwd.head, vocab);
    std::vector<const Detection*> expected;
    for (const auto& d : brute) {
      if (static_cast<double>(obj[static_cast<std::size_t>(d.anchor_id)]) > delta) expected.push_back(&d);
    }
    const auto n = std::max(expected.size(), lazy.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (i >= expected.size() || i >= lazy.size()) {
        ++out.mismatches;
        continue;
      }
      const Detection& a = lazy[i];
      const Detection& b = *expected[i];
      const double ds = std::abs(static_cast<double>(a.score) - b.score);
      out.max_score_diff = std::max(out.max_score_diff, ds);
      if (a.anchor_id != b.anchor_id || a.label != b.label || a.box != b.box || ds > 1e-6 || !(a.mask == b.mask)) {
        ++out.mismatches;
      }
    }
  }
  return out;
}

PromptSet reference_visual_prompts(const Model& model, const std::vector<SyntheticScene>& scenes,
                                   const std::vector<std::string>& categories, int per_class) {
  NoGradGuard ng;
  const auto D = model.config().embed_dim;
  std::vector<std::vector<Tensor>> rows(categories.size());
  for (const auto& s : scenes) {
    bool needed = false;
    for (const auto& in : s.instances) {
      auto it = std::ranges::find(categories, in.category);
      if (it != categories.end() && static_cast<int>(rows[static_cast<std::size_t>(it - categories.begin())].size()) < per_class) {
        needed = true;
      }
    }
    if (!needed) continue;
    const auto fwd = model.forward(s.image);
    const Tensor input = model.savpe_input(fwd.features);
    for (const auto& in : s.instances) {
      auto it = std::ranges::find(categories, in.category);
      if (it == categories.end()) continue;
      auto& list = rows[static_cast<std::size_t>(it - categories.begin())];
      if (static_cast<int>(list.size()) >= per_class) continue;
      VisualCue cue;
      cue.box = in.box;
      try {
        list.push_back(savpe_embed(model, input, rasterize_cue(cue, model.config())));
      } catch (const DegenerateCueError&) {
      }
    }
  }
  PromptSet p;
  p.kind = PromptKind::kVisual;
  std::vector<Tensor> pooled;
  for (std::size_t c = 0; c < categories.size(); ++c) {
    if (rows[c].empty()) throw UsageError("no visual cue found for category '" + categories[c] + "'");
    pooled.push_back(l2_normalize(reshape(reduce_mean(concat(rows[c], 0), 0), {1, D}), 1));
    p.labels.push_back(categories[c]);
  }
  p.embeddings = concat(pooled, 0);
  return p;
}

std::vector<SyntheticScene> scenes_with_only(const std::vector<SyntheticScene>& scenes,
                                             const std::vector<std::string>& categories) {
  std::vector<SyntheticScene> out;
  for (const auto& s : scenes) {
    if (s.instances.empty()) continue;
    const bool ok = std::ranges::all_of(s.instances, [&](const Instance& in) {
      return std::ranges::find(categories, in.category) != categories.end();
    });
    if (ok) out.push_back(s);
  }
  return out;
}

}  // namespace yoloe
