#pragma once

#include <map>
#include <string>
#include <vector>

#include "yoloe/dataset.hpp"
#include "yoloe/fold.hpp"
#include "yoloe/inference.hpp"

namespace yoloe {

struct GroundTruthMask {
  std::string label;
  BinaryMask mask;
};

struct MapResult {
  double map50 = 0;
  double map50_95 = 0;
  std::map<std::string, double> ap50;     // per category
  std::map<std::string, double> ap50_95;  // per category
  std::size_t categories() const { return ap50.size(); }
};

/// IoU thresholds 0.50, 0.55, ..., 0.95.
std::vector<double> coco_iou_thresholds();

/// Mask mAP. For every category with at least one ground truth (restricted to
/// `categories` when non-empty) and every threshold: detections of that
/// category are ranked by descending score (ties by image, then list order)
/// and each takes the unmatched same-label ground truth of its image with the
/// highest mask IoU, if that IoU reaches the threshold. AP is the 101-point
/// interpolated area under the precision envelope. mAP50 uses threshold 0.5
/// (which must be among `thresholds`), mAP50-95 averages all thresholds.
MapResult compute_map(const std::vector<std::vector<Detection>>& detections,
                      const std::vector<std::vector<GroundTruthMask>>& ground_truth,
                      const std::vector<double>& thresholds = coco_iou_thresholds(),
                      const std::vector<std::string>& categories = {});

std::vector<GroundTruthMask> scene_ground_truth(const SyntheticScene& scene);

/// Detections of every scene under one prompting mode.
std::vector<std::vector<Detection>> detect_text(const Model& model, const std::vector<SyntheticScene>& scenes,
                                                const FoldedClassifier& fold, const InferOptions& options);
std::vector<std::vector<Detection>> detect_with_prompts(const Model& model, const std::vector<SyntheticScene>& scenes,
                                                        const PromptSet& prompts, const InferOptions& options);
std::vector<std::vector<Detection>> detect_prompt_free(const Model& model, const std::vector<SyntheticScene>& scenes,
                                                       const Vocabulary& vocab, double delta,
                                                       const InferOptions& options, LrpcReport* report = nullptr);

/// Lazy prompt-free inference against brute-force vocabulary matching
/// restricted to the anchors that pass the objectness filter.
struct LrpcComparison {
  std::int64_t images = 0;
  std::int64_t detections = 0;       // emitted by the lazy path
  std::int64_t mismatches = 0;       // detections differing in anchor, label, box, score or mask
  double max_score_diff = 0;
  LrpcReport report;
  double seconds_lazy = 0, seconds_brute = 0;
  bool exact() const { return mismatches == 0; }
};
LrpcComparison compare_lrpc_with_brute_force(const Model& model, const std::vector<Tensor>& images,
                                             const Vocabulary& vocab, double delta, const InferOptions& options);

/// Reference visual prompts: per category, box cues from up to `per_class`
/// instances (first occurrences in scene order) of `scenes`, each encoded in
/// its own image and mean-pooled. Labels are the category names.
PromptSet reference_visual_prompts(const Model& model, const std::vector<SyntheticScene>& scenes,
                                   const std::vector<std::string>& categories, int per_class = 16);

/// Scenes whose instances all belong to `categories` (and have at least one).
std::vector<SyntheticScene> scenes_with_only(const std::vector<SyntheticScene>& scenes,
                                             const std::vector<std::string>& categories);

}  // namespace yoloe
