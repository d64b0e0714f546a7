#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "yoloe/tensor.hpp"

namespace yoloe {

/// Positive entry of the classification target matrix.
struct ClsTarget {
  std::int64_t anchor = 0;
  std::int64_t column = 0;
  double value = 1.0;
};

/// Mask supervision for one assigned pair at prototype resolution: the
/// fraction of each cell covered by the ground-truth mask, and the crop
/// (cells x0 <= x < x1, y0 <= y < y1) overlapping the ground-truth box.
struct MaskTarget {
  int height = 0, width = 0;
  std::vector<float> coverage;  // height x width, in [0, 1]
  std::array<int, 4> crop{0, 0, 0, 0};
};

struct LossWeights {
  double cls = 1.0;
  double box = 5.0;
  double mask = 2.0;
  double ref = 0.0;
  void validate() const {
    for (double w : {cls, box, mask, ref}) {
      if (!std::isfinite(w) || w < 0) throw ConfigError("loss weights must be finite and non-negative");
    }
  }
};

}  // namespace yoloe

namespace yoloe::inline YOLOE_PRECISION_NS {

/// Mean BCE over all N x C logits. Listed positives take their target value,
/// every other entry targets 0.
Tensor loss_cls(const Tensor& logits, const std::vector<ClsTarget>& positives);

/// Generalised IoU of paired boxes (x1, y1, x2, y2), P x 4 each, returned as P.
Tensor giou(const Tensor& pred, const Tensor& target);
/// Mean of 1 - GIoU over pairs.
Tensor loss_box(const Tensor& pred, const Tensor& target);

/// Per pair: mean BCE inside the crop between the logit map (row p of the
/// P x (H*W) input) and the coverage target, plus the soft dice term
/// 1 - 2 sum(s g) / (sum s + sum g) over the crop when `use_dice`. Averaged
/// over pairs.
Tensor loss_mask(const Tensor& logits, const std::vector<MaskTarget>& targets, bool use_dice);

struct LossReport {
  Tensor cls, box, mask, ref;  // undefined terms count as 0
  Tensor total;
  double cls_value = 0, box_value = 0, mask_value = 0, ref_value = 0, total_value = 0;
};

/// total = w.cls cls + w.box box + w.mask mask + w.ref ref.
LossReport total_loss(const Tensor& cls, const Tensor& box, const Tensor& mask, const Tensor& ref,
                      const LossWeights& weights);

}  // namespace yoloe::inline YOLOE_PRECISION_NS
