#include "yoloe/assign.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <tuple>

namespace yoloe {

bool AssignmentResult::injective(std::int64_t num_gt) const {
  if (static_cast<std::int64_t>(pairs.size()) != num_gt) return false;
  std::set<std::int64_t> gts, anchors;
  for (const auto& p : pairs) {
    if (!gts.insert(p.gt).second || !anchors.insert(p.anchor).second) return false;
  }
  return true;
}

double box_iou(const std::array<float, 4>& a, const std::array<float, 4>& b) {
  const double iw = std::max(0.0, double(std::min(a[2], b[2])) - std::max(a[0], b[0]));
  const double ih = std::max(0.0, double(std::min(a[3], b[3])) - std::max(a[1], b[1]));
  const double inter = iw * ih;
  const double area_a = std::max(0.0, double(a[2]) - a[0]) * std::max(0.0, double(a[3]) - a[1]);
  const double area_b = std::max(0.0, double(b[2]) - b[0]) * std::max(0.0, double(b[3]) - b[1]);
  const double uni = area_a + area_b - inter;
  return uni > 0 ? inter / uni : 0.0;
}

AssignmentResult assign_one_to_one(const Tensor& boxes, const Tensor& probabilities, const AnchorGrid& anchors,
                                   const std::vector<GroundTruth>& gts, double alpha, double beta) {
  const auto N = anchors.size();
  if (boxes.dim(0) != N || probabilities.dim(0) != N) {
    throw DimensionError("assign_one_to_one: boxes/probabilities do not cover " + std::to_string(N) + " anchors");
  }
  const auto C = probabilities.dim(1);
  auto bd = boxes.data();
  auto pd = probabilities.data();

  struct Cand {
    double q, iou;
    std::int64_t anchor, gt;
  };
  std::vector<Cand> cands;
  std::vector<double> max_q(gts.size(), 0.0), max_iou(gts.size(), 0.0);
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const auto& g = gts[i];
    if (g.column < 0 || g.column >= C) throw DimensionError("assign_one_to_one: ground-truth column out of range");
    for (std::int64_t n = 0; n < N; ++n) {
      const auto& c = anchors.centers[static_cast<std::size_t>(n)];
      if (c[0] < g.box[0] || c[0] > g.box[2] || c[1] < g.box[1] || c[1] > g.box[3]) continue;
      const std::size_t b = static_cast<std::size_t>(n * 4);
      const double iou = box_iou({bd[b], bd[b + 1], bd[b + 2], bd[b + 3]}, g.box);
      const double p = pd[static_cast<std::size_t>(n * C + g.column)];
      const double q = std::pow(p, alpha) * std::pow(iou, beta);
      cands.push_back({q, iou, n, static_cast<std::int64_t>(i)});
      max_q[i] = std::max(max_q[i], q);
      max_iou[i] = std::max(max_iou[i], iou);
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.q != b.q) return a.q > b.q;
    if (a.anchor != b.anchor) return a.anchor < b.anchor;
    return a.gt < b.gt;
  });

  std::vector<char> anchor_used(static_cast<std::size_t>(N), 0);
  std::vector<std::int64_t> gt_anchor(gts.size(), -1);
  std::vector<AssignmentResult::Pair> by_gt(gts.size());
  for (const auto& c : cands) {
    if (gt_anchor[static_cast<std::size_t>(c.gt)] >= 0 || anchor_used[static_cast<std::size_t>(c.anchor)]) continue;
    gt_anchor[static_cast<std::size_t>(c.gt)] = c.anchor;
    anchor_used[static_cast<std::size_t>(c.anchor)] = 1;
    const double t = max_q[static_cast<std::size_t>(c.gt)] > 0
                         ? c.q / max_q[static_cast<std::size_t>(c.gt)] * max_iou[static_cast<std::size_t>(c.gt)]
                         : max_iou[static_cast<std::size_t>(c.gt)];
    by_gt[static_cast<std::size_t>(c.gt)] = {c.gt, c.anchor, c.q, c.iou, t};
  }

  AssignmentResult r;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (gt_anchor[i] < 0) {
      const auto& g = gts[i].box;
      const double gx = 0.5 * (double(g[0]) + g[2]), gy = 0.5 * (double(g[1]) + g[3]);
      std::int64_t best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::int64_t n = 0; n < N; ++n) {
        if (anchor_used[static_cast<std::size_t>(n)]) continue;
        const auto& c = anchors.centers[static_cast<std::size_t>(n)];
        const double d = (c[0] - gx) * (c[0] - gx) + (c[1] - gy) * (c[1] - gy);
        if (d < best_d) {
          best_d = d;
          best = n;
        }
      }
      if (best < 0) throw UsageError("assign_one_to_one: more ground truths than anchors");
      anchor_used[static_cast<std::size_t>(best)] = 1;
      gt_anchor[i] = best;
      const std::size_t b = static_cast<std::size_t>(best * 4);
      const double iou = box_iou({bd[b], bd[b + 1], bd[b + 2], bd[b + 3]}, g);
      const double p = pd[static_cast<std::size_t>(best * C + gts[i].column)];
      by_gt[i] = {static_cast<std::int64_t>(i), best, std::pow(p, alpha) * std::pow(iou, beta), iou, iou};
      ++r.fallbacks;
    }
    r.pairs.push_back(by_gt[i]);
  }
  return r;
}

}  // namespace yoloe
