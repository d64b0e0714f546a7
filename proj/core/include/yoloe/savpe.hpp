#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "yoloe/model.hpp"
#include "yoloe/prompts.hpp"

namespace yoloe {

/// A visual example: either a box in input pixels or a full-resolution binary
/// mask (row-major, input_height x input_width).
struct VisualCue {
  int class_id = 0;
  std::array<float, 4> box{0, 0, 0, 0};
  std::vector<std::uint8_t> mask;  // empty when the cue is a box
};

/// Rasterises a cue onto the prototype grid. A box covers the cells whose
/// centres lie inside it; a mask covers every cell containing a set pixel.
/// Throws DegenerateCueError when nothing is covered.
std::vector<std::uint8_t> rasterize_cue(const VisualCue& cue, const ModelConfig& config);

/// Unnormalised grouped aggregate for one rasterised cue, 1 x D:
/// G_i = softmax_cue(W_i) . S_i^T, concatenated over the A groups. S_i is the
/// i-th D/A channel slice of the semantic map (or the shared D/A map).
/// `features` is the SAVPE input (C x H/4 x W/4). Differentiable.
Tensor savpe_aggregate(const Model& model, const Tensor& features, const std::vector<std::uint8_t>& cue_mask);

/// One unit row per cue.
Tensor savpe_embed(const Model& model, const Tensor& features, const std::vector<std::uint8_t>& cue_mask);

/// Visual prompts: one row per distinct class id (ascending), cues of the
/// same class mean-pooled then renormalised. Labels come from `class_names`
/// or default to "class<id>".
PromptSet savpe_encode(const Model& model, const FeaturePyramid& features, const std::vector<VisualCue>& cues,
                       const std::map<int, std::string>& class_names = {});

}  // namespace yoloe
