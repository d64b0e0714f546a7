#include "yoloe/savpe.hpp"

#include <algorithm>
#include <cmath>

#include "yoloe/ops.hpp"

namespace yoloe {

std::vector<std::uint8_t> rasterize_cue(const VisualCue& cue, const ModelConfig& config) {
  const int s = config.prototype_stride();
  const int hp = config.prototype_height(), wp = config.prototype_width();
  const int H = config.input_height, W = config.input_width;
  std::vector<std::uint8_t> out(static_cast<std::size_t>(hp * wp), 0);
  if (!cue.mask.empty()) {
    if (cue.mask.size() != static_cast<std::size_t>(H * W)) {
      throw DimensionError("visual cue mask has " + std::to_string(cue.mask.size()) + " pixels, expected " +
                           std::to_string(H * W));
    }
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        if (cue.mask[static_cast<std::size_t>(y * W + x)]) out[static_cast<std::size_t>((y / s) * wp + x / s)] = 1;
  } else {
    const auto& b = cue.box;
    if (!(b[0] <= b[2] && b[1] <= b[3]) || b[0] < 0 || b[1] < 0 || b[2] > static_cast<float>(W) ||
        b[3] > static_cast<float>(H)) {
      throw UsageError("visual cue box lies outside the image or is inverted");
    }
    for (int y = 0; y < hp; ++y) {
      const float cy = (static_cast<float>(y) + 0.5f) * static_cast<float>(s);
      if (cy < b[1] || cy > b[3]) continue;
      for (int x = 0; x < wp; ++x) {
        const float cx = (static_cast<float>(x) + 0.5f) * static_cast<float>(s);
        if (cx >= b[0] && cx <= b[2]) out[static_cast<std::size_t>(y * wp + x)] = 1;
      }
    }
  }
  if (std::none_of(out.begin(), out.end(), [](std::uint8_t v) { return v != 0; })) {
    throw DegenerateCueError("visual cue for class " + std::to_string(cue.class_id) +
                             " covers no prototype cell");
  }
  return out;
}

Tensor savpe_aggregate(const Model& model, const Tensor& features, const std::vector<std::uint8_t>& cue_mask) {
  const auto& cfg = model.config();
  const std::int64_t hw = features.dim(1) * features.dim(2);
  if (static_cast<std::int64_t>(cue_mask.size()) != hw) {
    throw DimensionError("savpe: cue mask has " + std::to_string(cue_mask.size()) + " cells, features have " +
                         std::to_string(hw));
  }
  const int A = cfg.savpe_groups;
  const std::int64_t slice_dim = cfg.embed_dim / A;

  Tensor sem = model.savpe_conv("sem.out")(silu(model.savpe_conv("sem.hidden")(features)));
  sem = reshape(sem, {sem.dim(0), hw});

  std::vector<real> cue(cue_mask.begin(), cue_mask.end());
  Tensor cue_channel({1, features.dim(1), features.dim(2)}, std::move(cue));
  Tensor act_in = concat({features, cue_channel}, 0);
  Tensor act = model.savpe_conv("act.out")(silu(model.savpe_conv("act.hidden")(act_in)));
  Tensor weights = masked_softmax(reshape(act, {A, hw}), cue_mask);

  std::vector<Tensor> groups;
  groups.reserve(static_cast<std::size_t>(A));
  for (int i = 0; i < A; ++i) {
    Tensor w = slice(weights, 0, i, i + 1);
    Tensor s = cfg.savpe_shared_semantic ? sem : slice(sem, 0, i * slice_dim, (i + 1) * slice_dim);
    groups.push_back(matmul(w, transpose(s)));
  }
  return concat(groups, 1);
}

Tensor savpe_embed(const Model& model, const Tensor& features, const std::vector<std::uint8_t>& cue_mask) {
  return l2_normalize(savpe_aggregate(model, features, cue_mask), 1);
}

PromptSet savpe_encode(const Model& model, const FeaturePyramid& features, const std::vector<VisualCue>& cues,
                       const std::map<int, std::string>& class_names) {
  if (cues.empty()) throw UsageError("savpe_encode: no visual cues given");
  const Tensor input = model.savpe_input(features);
  std::map<int, std::vector<Tensor>> by_class;
  for (const auto& cue : cues) {
    by_class[cue.class_id].push_back(savpe_embed(model, input, rasterize_cue(cue, model.config())));
  }
  std::vector<Tensor> rows;
  PromptSet p;
  p.kind = PromptKind::kVisual;
  for (auto& [id, list] : by_class) {
    Tensor pooled = list.size() == 1 ? list[0] : reduce_mean(concat(list, 0), 0);
    rows.push_back(l2_normalize(reshape(pooled, {1, model.config().embed_dim}), 1));
    auto it = class_names.find(id);
    p.labels.push_back(it != class_names.end() ? it->second : "class" + std::to_string(id));
  }
  p.embeddings = concat(rows, 0);
  return p;
}

}  // namespace yoloe
