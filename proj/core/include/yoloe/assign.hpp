#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "yoloe/model.hpp"

namespace yoloe {

struct GroundTruth {
  std::array<float, 4> box{};
  std::int64_t column = 0;  // prompt column of the category
};

struct AssignmentResult {
  struct Pair {
    std::int64_t gt = 0;
    std::int64_t anchor = 0;
    double quality = 0;  // p^alpha * IoU^beta
    double iou = 0;
    double target = 0;   // normalised soft target
  };
  std::vector<Pair> pairs;  // one per ground truth, in ground-truth order
  int fallbacks = 0;        // ground truths placed on the nearest free anchor

  /// Each ground truth appears exactly once, each anchor at most once.
  bool injective(std::int64_t num_gt) const;
};

/// Plain IoU of two boxes (x1, y1, x2, y2); 0 when the union is empty.
double box_iou(const std::array<float, 4>& a, const std::array<float, 4>& b);

/// Greedy one-to-one task-aligned assignment. Candidates for a ground truth
/// are the anchors whose centre lies inside its box; pairs are taken in
/// descending quality (ties: lower anchor, then lower ground-truth index)
/// while both sides are free. A ground truth left without a free candidate
/// goes to the nearest free anchor by centre distance.
///
/// Soft target of a pair: quality / max candidate quality * max candidate IoU
/// of that ground truth.
AssignmentResult assign_one_to_one(const Tensor& boxes, const Tensor& probabilities, const AnchorGrid& anchors,
                                   const std::vector<GroundTruth>& gts, double alpha = 1.0, double beta = 6.0);

}  // namespace yoloe
