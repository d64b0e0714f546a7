#include "yoloe/losses.hpp"

#include <cmath>
#include <string>

#include "yoloe/ops.hpp"

namespace yoloe::inline YOLOE_PRECISION_NS {

Tensor loss_cls(const Tensor& logits, const std::vector<ClsTarget>& positives) {
  if (logits.rank() != 2) throw DimensionError("loss_cls: expected N x C logits, got " + shape_str(logits.shape()));
  const auto N = logits.dim(0), C = logits.dim(1);
  std::vector<real> t(static_cast<std::size_t>(N * C), real(0));
  for (const auto& p : positives) {
    if (p.anchor < 0 || p.anchor >= N || p.column < 0 || p.column >= C) {
      throw DimensionError("loss_cls: positive (" + std::to_string(p.anchor) + ", " + std::to_string(p.column) +
                           ") outside " + shape_str(logits.shape()));
    }
    t[static_cast<std::size_t>(p.anchor * C + p.column)] = static_cast<real>(p.value);
  }
  return mean(bce_with_logits(logits, Tensor({N, C}, std::move(t))));
}

Tensor giou(const Tensor& pred, const Tensor& target) {
  if (pred.rank() != 2 || pred.dim(1) != 4 || pred.shape() != target.shape()) {
    throw DimensionError("giou: expected matching P x 4 boxes, got " + shape_str(pred.shape()) + " and " +
                         shape_str(target.shape()));
  }
  auto col = [](const Tensor& b, int i) { return slice(b, 1, i, i + 1); };
  const Tensor px1 = col(pred, 0), py1 = col(pred, 1), px2 = col(pred, 2), py2 = col(pred, 3);
  const Tensor tx1 = col(target, 0), ty1 = col(target, 1), tx2 = col(target, 2), ty2 = col(target, 3);
  const Tensor area_p = mul(relu(sub(px2, px1)), relu(sub(py2, py1)));
  const Tensor area_t = mul(relu(sub(tx2, tx1)), relu(sub(ty2, ty1)));
  const Tensor iw = relu(sub(minimum(px2, tx2), maximum(px1, tx1)));
  const Tensor ih = relu(sub(minimum(py2, ty2), maximum(py1, ty1)));
  const Tensor inter = mul(iw, ih);
  const Tensor uni = sub(add(area_p, area_t), inter);
  const Tensor iou = div(inter, uni);
  const Tensor cw = sub(maximum(px2, tx2), minimum(px1, tx1));
  const Tensor ch = sub(maximum(py2, ty2), minimum(py1, ty1));
  const Tensor enclose = mul(cw, ch);
  const Tensor g = sub(iou, div(sub(enclose, uni), enclose));
  return reshape(g, {pred.dim(0)});
}

Tensor loss_box(const Tensor& pred, const Tensor& target) {
  if (pred.dim(0) == 0) return Tensor::zeros({1});
  return mean(add_scalar(mul_scalar(giou(pred, target), real(-1)), real(1)));
}

Tensor loss_mask(const Tensor& logits, const std::vector<MaskTarget>& targets, bool use_dice) {
  if (targets.empty()) return Tensor::zeros({1});
  if (logits.rank() != 2 || logits.dim(0) != static_cast<std::int64_t>(targets.size())) {
    throw DimensionError("loss_mask: " + shape_str(logits.shape()) + " logits for " + std::to_string(targets.size()) +
                         " targets");
  }
  std::vector<Tensor> per_pair;
  per_pair.reserve(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = targets[i];
    if (logits.dim(1) != static_cast<std::int64_t>(t.height) * t.width ||
        t.coverage.size() != static_cast<std::size_t>(t.height) * static_cast<std::size_t>(t.width)) {
      throw DimensionError("loss_mask: target " + std::to_string(i) + " does not match the logit map");
    }
    const auto [x0, y0, x1, y1] = t.crop;
    if (!(0 <= x0 && x0 < x1 && x1 <= t.width && 0 <= y0 && y0 < y1 && y1 <= t.height)) {
      throw UsageError("loss_mask: empty or out-of-range crop for target " + std::to_string(i));
    }
    Tensor map = reshape(slice(logits, 0, static_cast<std::int64_t>(i), static_cast<std::int64_t>(i) + 1),
                         {t.height, t.width});
    Tensor crop = slice(slice(map, 0, y0, y1), 1, x0, x1);
    std::vector<real> g;
    g.reserve(static_cast<std::size_t>((y1 - y0) * (x1 - x0)));
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) g.push_back(static_cast<real>(t.coverage[static_cast<std::size_t>(y * t.width + x)]));
    Tensor gt({y1 - y0, x1 - x0}, std::move(g));
    Tensor term = mean(bce_with_logits(crop, gt));
    if (use_dice) {
      Tensor s = sigmoid(crop);
      Tensor ratio = div(mul_scalar(sum(mul(s, gt)), real(2)), add(sum(s), sum(gt)));
      term = add(term, add_scalar(mul_scalar(ratio, real(-1)), real(1)));
    }
    per_pair.push_back(term);
  }
  return mean(concat(per_pair, 0));
}

LossReport total_loss(const Tensor& cls, const Tensor& box, const Tensor& mask, const Tensor& ref,
                      const LossWeights& weights) {
  weights.validate();
  LossReport r;
  r.cls = cls;
  r.box = box;
  r.mask = mask;
  r.ref = ref;
  Tensor total = Tensor::zeros({1});
  auto acc = [&](const Tensor& term, double w, double& value) {
    if (!term.defined()) return;
    value = static_cast<double>(term.item());
    if (w != 0.0) total = add(total, mul_scalar(reshape(term, {1}), static_cast<real>(w)));
  };
  acc(cls, weights.cls, r.cls_value);
  acc(box, weights.box, r.box_value);
  acc(mask, weights.mask, r.mask_value);
  acc(ref, weights.ref, r.ref_value);
  r.total = total;
  r.total_value = static_cast<double>(total.item());
  return r;
}

}  // namespace yoloe::inline YOLOE_PRECISION_NS
