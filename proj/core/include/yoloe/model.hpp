#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "yoloe/tensor.hpp"

namespace yoloe {

struct ModelConfig {
  int width = 8;           // base channel count
  int depth = 1;           // residual pairs per pyramid stage
  int embed_dim = 16;      // D
  int num_prototypes = 4;  // K_p
  std::vector<int> strides{8, 16, 32};
  int savpe_groups = 4;  // A; embed_dim must be divisible by it
  int input_height = 64;
  int input_width = 64;
  std::uint64_t seed = 0;
  // SAVPE variant: one D/A-channel semantic map reused by every group instead
  // of a D-channel map sliced per group.
  bool savpe_shared_semantic = false;
  // Appends SiLU after the embedding projection. The projection is then no
  // longer linear and cannot be fused with prompt kernels.
  bool embed_final_activation = false;

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;
  int prototype_stride() const { return 4; }
  int prototype_height() const { return input_height / prototype_stride(); }
  int prototype_width() const { return input_width / prototype_stride(); }
  /// Channels of pyramid level l (0 = finest).
  int level_channels(std::size_t level) const { return width * (level == 0 ? 2 : 4); }
  int head_hidden() const { return 2 * width; }
};

std::string model_config_to_json(const ModelConfig& c);
/// Unknown keys are rejected.
ModelConfig model_config_from_json(const std::string& text);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Anchor centres in input pixels, level-major then row-major.
struct AnchorGrid {
  std::vector<std::array<float, 2>> centers;
  std::vector<int> stride_of;
  std::vector<std::int64_t> level_offsets;  // first anchor index of each level, plus N at the end
  std::int64_t size() const { return static_cast<std::int64_t>(centers.size()); }
};

AnchorGrid make_anchor_grid(const ModelConfig& config);

struct FeaturePyramid {
  std::vector<Tensor> levels;  // neck outputs, finest first
};

/// Raw per-image predictions. `box_deltas` are softplus-activated distances
/// (left, top, right, bottom) in stride units.
struct HeadOutputs {
  Tensor box_deltas;   // N x 4
  Tensor embeddings;   // N x D, unit rows
  Tensor mask_coeffs;  // N x K_p
  Tensor objectness;   // N logits
  Tensor prototypes;   // K_p x H/4 x W/4
  std::int64_t num_anchors() const { return box_deltas.defined() ? box_deltas.dim(0) : 0; }
};

struct ForwardResult {
  FeaturePyramid features;
  HeadOutputs head;
  // Per level: input of the embedding projection (hidden x H_l x W_l).
  std::vector<Tensor> embed_hidden;
  // Per level: unit-normalised embedding field (D x H_l x W_l).
  std::vector<Tensor> embed_maps;
};

/// Conv layer with optional bias.
struct Conv {
  std::string name;
  Tensor weight;  // out x in x k x k
  Tensor bias;    // may be undefined
  int stride = 1;
  int padding = 0;

  Tensor operator()(const Tensor& x) const;
};

class Model {
 public:
  explicit Model(ModelConfig config);
  // Parameters are shared buffers; copying would alias them.
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return config_; }
  const AnchorGrid& anchors() const { return anchors_; }

  /// All parameters in construction order. Names are stable identifiers
  /// ("backbone.stem0.weight", "head.emb.p3.proj.weight", "savpe...", ...).
  const std::vector<NamedTensor>& parameters() const { return params_; }
  std::vector<NamedTensor> parameters_with_prefix(const std::string& prefix) const;
  Tensor& parameter(const std::string& name);
  const Tensor& parameter(const std::string& name) const;
  std::int64_t parameter_count() const;
  /// Digest of parameter bytes whose name starts with `prefix` (all if empty).
  std::uint64_t parameter_hash(const std::string& prefix = "") const;
  std::uint64_t parameter_hash_excluding(const std::string& prefix) const;
  void set_requires_grad(const std::string& prefix, bool on);
  /// Copies every parameter value from a model of the same architecture.
  void copy_parameters_from(const Model& other);

  /// Learned logit scale shared by every prompt kind, clamped to [1, 100].
  Tensor& temperature() { return parameter("temperature"); }
  const Tensor& temperature() const { return parameter("temperature"); }
  void clamp_temperature();

  ForwardResult forward(const Tensor& image) const;
  std::vector<ForwardResult> forward_batch(const std::vector<Tensor>& images) const;

  /// Projection kernel K (D x hidden) of the embedding head at a level.
  const Conv& embed_projection(std::size_t level) const;

  // SAVPE branches (pointwise convs on stride-4 features).
  const Conv& savpe_conv(const std::string& which) const;

  /// Features handed to SAVPE: the finest neck level upsampled to prototype
  /// resolution.
  Tensor savpe_input(const FeaturePyramid& features) const;

 private:
  Conv& add_conv(const std::string& name, int in, int out, int k, int stride, bool bias, bool he_init = true);
  Tensor run(const Conv& conv, const Tensor& x, bool activate) const;

  ModelConfig config_;
  AnchorGrid anchors_;
  std::vector<NamedTensor> params_;
  std::vector<Conv> convs_;
  std::vector<std::size_t> conv_index_;  // lookup helpers filled in constructor

  struct LevelHead {
    std::size_t box_hidden, box_out, emb_hidden, emb_proj, coef_hidden, coef_out, obj_hidden, obj_out;
  };
  std::vector<std::size_t> stem_;
  std::vector<std::vector<std::size_t>> stage_;  // per level: downsample conv then residual pairs
  std::vector<std::size_t> topdown_;             // per level except the coarsest
  std::vector<std::size_t> bottomup_down_, bottomup_fuse_;
  std::vector<LevelHead> heads_;
  std::size_t proto_hidden_ = 0, proto_out_ = 0;
  std::size_t savpe_sem1_ = 0, savpe_sem2_ = 0, savpe_act1_ = 0, savpe_act2_ = 0;
};

/// Decodes distances to pixel boxes (x1, y1, x2, y2) clipped to the image:
/// x1 = cx - l*s, y1 = cy - t*s, x2 = cx + r*s, y2 = cy + b*s. Differentiable.
Tensor decode_boxes(const Tensor& box_deltas, const AnchorGrid& anchors, int image_height, int image_width,
                    bool clip = true);

/// Inverse of decode_boxes for unclipped boxes.
Tensor encode_boxes(const Tensor& boxes, const AnchorGrid& anchors);

}  // namespace yoloe
