#include "yoloe/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include <json.hpp>

#include "yoloe/error.hpp"
#include "yoloe/ops.hpp"
#include "yoloe/rng.hpp"

namespace yoloe {

using nlohmann::json;

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
  if (width < 1) fail("width must be >= 1");
  if (depth < 1) fail("depth must be >= 1");
  if (embed_dim < 1) fail("embed_dim must be >= 1");
  if (num_prototypes < 1) fail("num_prototypes (K_p) must be >= 1");
  if (savpe_groups < 1) fail("savpe_groups (A) must be >= 1");
  if (embed_dim % savpe_groups != 0) {
    fail("embed_dim " + std::to_string(embed_dim) + " is not divisible by savpe_groups " +
         std::to_string(savpe_groups));
  }
  if (strides.empty()) fail("strides must not be empty");
  if (strides[0] < 8 || !std::has_single_bit(static_cast<unsigned>(strides[0]))) {
    fail("first stride must be a power of two >= 8");
  }
  for (std::size_t i = 1; i < strides.size(); ++i) {
    if (strides[i] != 2 * strides[i - 1]) fail("each stride must double the previous one");
  }
  if (input_height < 1 || input_width < 1) fail("input size must be positive");
  for (int s : strides) {
    if (input_height % s != 0 || input_width % s != 0) {
      fail("stride " + std::to_string(s) + " does not divide input size " + std::to_string(input_height) + "x" +
           std::to_string(input_width));
    }
  }
}

std::string model_config_to_json(const ModelConfig& c) {
  json j{{"width", c.width},
         {"depth", c.depth},
         {"embed_dim", c.embed_dim},
         {"num_prototypes", c.num_prototypes},
         {"strides", c.strides},
         {"savpe_groups", c.savpe_groups},
         {"input_height", c.input_height},
         {"input_width", c.input_width},
         {"seed", c.seed},
         {"savpe_shared_semantic", c.savpe_shared_semantic},
         {"embed_final_activation", c.embed_final_activation}};
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("model config: expected a JSON object");
  ModelConfig c;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      const auto& v = it.value();
      if (k == "width") c.width = v.get<int>();
      else if (k == "depth") c.depth = v.get<int>();
      else if (k == "embed_dim") c.embed_dim = v.get<int>();
      else if (k == "num_prototypes") c.num_prototypes = v.get<int>();
      else if (k == "strides") c.strides = v.get<std::vector<int>>();
      else if (k == "savpe_groups") c.savpe_groups = v.get<int>();
      else if (k == "input_height") c.input_height = v.get<int>();
      else if (k == "input_width") c.input_width = v.get<int>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "savpe_shared_semantic") c.savpe_shared_semantic = v.get<bool>();
      else if (k == "embed_final_activation") c.embed_final_activation = v.get<bool>();
      else throw ConfigError("model config: unknown key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

AnchorGrid make_anchor_grid(const ModelConfig& config) {
  AnchorGrid g;
  for (int s : config.strides) {
    g.level_offsets.push_back(g.size());
    const int h = config.input_height / s, w = config.input_width / s;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        g.centers.push_back({(static_cast<float>(x) + 0.5f) * static_cast<float>(s),
                             (static_cast<float>(y) + 0.5f) * static_cast<float>(s)});
        g.stride_of.push_back(s);
      }
    }
  }
  g.level_offsets.push_back(g.size());
  return g;
}

Tensor Conv::operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride, padding); }

// ---------------------------------------------------------------------------

Conv& Model::add_conv(const std::string& name, int in, int out, int k, int stride, bool bias, bool he_init) {
  Conv c;
  c.name = name;
  c.stride = stride;
  c.padding = k / 2;
  const std::int64_t fan_in = static_cast<std::int64_t>(in) * k * k;
  std::vector<real> w(static_cast<std::size_t>(out * fan_in), real(0));
  if (he_init) {
    Rng rng(mix_seed(config_.seed, name + ".weight"));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : w) v = static_cast<real>(rng.uniform(-bound, bound));
  }
  c.weight = Tensor({out, in, k, k}, std::move(w), true);
  params_.push_back({name + ".weight", c.weight});
  if (bias) {
    c.bias = Tensor::zeros({out}, true);
    params_.push_back({name + ".bias", c.bias});
  }
  convs_.push_back(std::move(c));
  return convs_.back();
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  anchors_ = make_anchor_grid(config_);
  const int w = config_.width;
  const int D = config_.embed_dim;
  const int hidden = config_.head_hidden();
  const std::size_t L = config_.strides.size();
  convs_.reserve(64 + 16 * L * static_cast<std::size_t>(config_.depth));
  auto idx = [this] { return convs_.size() - 1; };

  add_conv("backbone.stem0", 3, w, 3, 2, true);
  stem_.push_back(idx());
  add_conv("backbone.stem1", w, 2 * w, 3, 2, true);
  stem_.push_back(idx());

  int prev_channels = 2 * w;
  int prev_stride = 4;
  stage_.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    const int c = config_.level_channels(l);
    const std::string base = "backbone.stage" + std::to_string(l);
    int n_down = 0;
    while (prev_stride < config_.strides[l]) {
      add_conv(base + ".down" + std::to_string(n_down++), prev_channels, c, 3, 2, true);
      stage_[l].push_back(idx());
      prev_channels = c;
      prev_stride *= 2;
    }
    for (int d = 0; d < config_.depth; ++d) {
      add_conv(base + ".res" + std::to_string(d) + ".a", c, c, 3, 1, true);
      stage_[l].push_back(idx());
      add_conv(base + ".res" + std::to_string(d) + ".b", c, c, 3, 1, true);
      stage_[l].push_back(idx());
    }
  }

  // Top-down path: level l fuses its backbone map with the upsampled level l+1.
  topdown_.assign(L, 0);
  for (std::size_t l = 0; l + 1 < L; ++l) {
    add_conv("neck.td" + std::to_string(l), config_.level_channels(l) + config_.level_channels(l + 1),
             config_.level_channels(l), 3, 1, true);
    topdown_[l] = idx();
  }
  // Bottom-up path.
  bottomup_down_.assign(L, 0);
  bottomup_fuse_.assign(L, 0);
  for (std::size_t l = 1; l < L; ++l) {
    add_conv("neck.bu" + std::to_string(l) + ".down", config_.level_channels(l - 1), config_.level_channels(l - 1), 3,
             2, true);
    bottomup_down_[l] = idx();
    add_conv("neck.bu" + std::to_string(l) + ".fuse", config_.level_channels(l - 1) + config_.level_channels(l),
             config_.level_channels(l), 3, 1, true);
    bottomup_fuse_[l] = idx();
  }

  heads_.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    const int c = config_.level_channels(l);
    const std::string lv = ".l" + std::to_string(l);
    auto& h = heads_[l];
    add_conv("head.box" + lv + ".hidden", c, hidden, 3, 1, true);
    h.box_hidden = idx();
    add_conv("head.box" + lv + ".out", hidden, 4, 1, 1, true);
    h.box_out = idx();
    add_conv("head.emb" + lv + ".hidden", c, D, 3, 1, true);
    h.emb_hidden = idx();
    {
      // Fan-in uniform bias.
      Rng rng(mix_seed(config_.seed, "head.emb" + lv + ".hidden.bias"));
      const double bound = 1.0 / std::sqrt(9.0 * c);
      for (auto& v : convs_[h.emb_hidden].bias.mutable_data()) v = static_cast<real>(rng.uniform(-bound, bound));
    }
    add_conv("head.emb" + lv + ".proj", D, D, 1, 1, false);
    h.emb_proj = idx();
    add_conv("head.coef" + lv + ".hidden", c, hidden, 3, 1, true);
    h.coef_hidden = idx();
    add_conv("head.coef" + lv + ".out", hidden, config_.num_prototypes, 1, 1, true);
    h.coef_out = idx();
    add_conv("head.obj" + lv + ".hidden", c, hidden, 3, 1, true);
    h.obj_hidden = idx();
    add_conv("head.obj" + lv + ".out", hidden, 1, 1, 1, true);
    h.obj_out = idx();
    // Prior of about 1% objectness.
    convs_[h.obj_out].bias.mutable_data()[0] = static_cast<real>(-4.6);
  }

  add_conv("proto.hidden", config_.level_channels(0), hidden, 3, 1, true);
  proto_hidden_ = idx();
  add_conv("proto.out", hidden, config_.num_prototypes, 1, 1, true);
  proto_out_ = idx();

  const int A = config_.savpe_groups;
  const int c0 = config_.level_channels(0);
  add_conv("savpe.sem.hidden", c0, hidden, 1, 1, true);
  savpe_sem1_ = idx();
  add_conv("savpe.sem.out", hidden, config_.savpe_shared_semantic ? D / A : D, 1, 1, true);
  savpe_sem2_ = idx();
  add_conv("savpe.act.hidden", c0 + 1, hidden, 1, 1, true);
  savpe_act1_ = idx();
  add_conv("savpe.act.out", hidden, A, 1, 1, true);
  savpe_act2_ = idx();

  params_.push_back({"temperature", Tensor::full({1}, static_cast<real>(14.3), true)});
}

std::vector<NamedTensor> Model::parameters_with_prefix(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  for (const auto& p : params_) {
    if (p.name.starts_with(prefix)) out.push_back(p);
  }
  return out;
}

Tensor& Model::parameter(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw LookupError("no parameter named '" + name + "'");
}

const Tensor& Model::parameter(const std::string& name) const {
  return const_cast<Model*>(this)->parameter(name);
}

std::int64_t Model::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

namespace {
std::uint64_t hash_params(const std::vector<NamedTensor>& params, auto&& keep) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params) {
    if (!keep(p.name)) continue;
    h = fnv1a64(p.name, h);
    auto d = p.tensor.data();
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(d.data()), d.size_bytes()), h);
  }
  return h;
}
}  // namespace

std::uint64_t Model::parameter_hash(const std::string& prefix) const {
  return hash_params(params_, [&](const std::string& n) { return n.starts_with(prefix); });
}

std::uint64_t Model::parameter_hash_excluding(const std::string& prefix) const {
  return hash_params(params_, [&](const std::string& n) { return !n.starts_with(prefix); });
}

void Model::set_requires_grad(const std::string& prefix, bool on) {
  for (auto& p : params_) {
    if (p.name.starts_with(prefix)) p.tensor.set_requires_grad(on);
  }
}

void Model::clamp_temperature() {
  auto t = temperature().mutable_data();
  t[0] = std::clamp(t[0], real(1), real(100));
}

void Model::copy_parameters_from(const Model& other) {
  if (other.params_.size() != params_.size()) throw DimensionError("copy_parameters_from: architectures differ");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& src = other.params_[i];
    auto& dst = params_[i];
    if (src.name != dst.name || src.tensor.shape() != dst.tensor.shape()) {
      throw DimensionError("copy_parameters_from: parameter '" + dst.name + "' differs");
    }
    std::ranges::copy(src.tensor.data(), dst.tensor.mutable_data().begin());
  }
}

Tensor Model::run(const Conv& conv, const Tensor& x, bool activate) const {
  Tensor y = conv(x);
  return activate ? silu(y) : y;
}

const Conv& Model::embed_projection(std::size_t level) const { return convs_.at(heads_.at(level).emb_proj); }

const Conv& Model::savpe_conv(const std::string& which) const {
  if (which == "sem.hidden") return convs_[savpe_sem1_];
  if (which == "sem.out") return convs_[savpe_sem2_];
  if (which == "act.hidden") return convs_[savpe_act1_];
  if (which == "act.out") return convs_[savpe_act2_];
  throw LookupError("no SAVPE conv '" + which + "'");
}

Tensor Model::savpe_input(const FeaturePyramid& features) const {
  return upsample_nearest(features.levels.at(0), config_.strides[0] / config_.prototype_stride());
}

namespace {
// C x H x W map -> (H*W) x C rows.
Tensor to_rows(const Tensor& map) {
  const auto c = map.dim(0);
  return transpose(reshape(map, {c, map.dim(1) * map.dim(2)}));
}
}  // namespace

ForwardResult Model::forward(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != config_.input_height ||
      image.dim(2) != config_.input_width) {
    throw DimensionError("forward: expected image 3x" + std::to_string(config_.input_height) + "x" +
                         std::to_string(config_.input_width) + ", got " + shape_str(image.shape()));
  }
  const std::size_t L = config_.strides.size();
  Tensor x = image;
  for (auto i : stem_) x = run(convs_[i], x, true);

  std::vector<Tensor> backbone(L);
  for (std::size_t l = 0; l < L; ++l) {
    std::size_t j = 0;
    const auto& stage = stage_[l];
    const std::size_t n_down = stage.size() - 2 * static_cast<std::size_t>(config_.depth);
    for (; j < n_down; ++j) x = run(convs_[stage[j]], x, true);
    for (int d = 0; d < config_.depth; ++d, j += 2) {
      Tensor r = run(convs_[stage[j]], x, true);
      r = run(convs_[stage[j + 1]], r, true);
      x = add(x, r);
    }
    backbone[l] = x;
  }

  std::vector<Tensor> td(L);
  td[L - 1] = backbone[L - 1];
  for (std::size_t l = L - 1; l-- > 0;) {
    td[l] = run(convs_[topdown_[l]], concat({backbone[l], upsample_nearest(td[l + 1], 2)}, 0), true);
  }
  ForwardResult r;
  auto& levels = r.features.levels;
  levels.resize(L);
  levels[0] = td[0];
  for (std::size_t l = 1; l < L; ++l) {
    Tensor down = run(convs_[bottomup_down_[l]], levels[l - 1], true);
    levels[l] = run(convs_[bottomup_fuse_[l]], concat({td[l], down}, 0), true);
  }

  std::vector<Tensor> box_rows, emb_rows, coef_rows, obj_rows;
  for (std::size_t l = 0; l < L; ++l) {
    const auto& h = heads_[l];
    const Tensor& f = levels[l];
    box_rows.push_back(to_rows(softplus(run(convs_[h.box_out], run(convs_[h.box_hidden], f, true), false))));
    Tensor hidden = run(convs_[h.emb_hidden], f, true);
    Tensor proj = run(convs_[h.emb_proj], hidden, config_.embed_final_activation);
    Tensor field = l2_normalize(proj, 0);
    r.embed_hidden.push_back(hidden);
    r.embed_maps.push_back(field);
    emb_rows.push_back(to_rows(field));
    coef_rows.push_back(to_rows(run(convs_[h.coef_out], run(convs_[h.coef_hidden], f, true), false)));
    obj_rows.push_back(to_rows(run(convs_[h.obj_out], run(convs_[h.obj_hidden], f, true), false)));
  }
  r.head.box_deltas = concat(box_rows, 0);
  r.head.embeddings = concat(emb_rows, 0);
  r.head.mask_coeffs = concat(coef_rows, 0);
  Tensor obj = concat(obj_rows, 0);
  r.head.objectness = reshape(obj, {obj.dim(0)});

  Tensor p = upsample_nearest(levels[0], config_.strides[0] / config_.prototype_stride());
  r.head.prototypes = run(convs_[proto_out_], run(convs_[proto_hidden_], p, true), false);
  return r;
}

std::vector<ForwardResult> Model::forward_batch(const std::vector<Tensor>& images) const {
  std::vector<ForwardResult> out;
  out.reserve(images.size());
  for (const auto& im : images) out.push_back(forward(im));
  return out;
}

// ---------------------------------------------------------------------------

Tensor decode_boxes(const Tensor& box_deltas, const AnchorGrid& anchors, int image_height, int image_width,
                    bool clip) {
  const auto N = anchors.size();
  if (box_deltas.rank() != 2 || box_deltas.dim(0) != N || box_deltas.dim(1) != 4) {
    throw DimensionError("decode_boxes: expected " + std::to_string(N) + "x4 deltas, got " +
                         shape_str(box_deltas.shape()));
  }
  // boxes = centre_offsets + deltas * signed stride, built as one affine map so
  // gradients flow through the deltas.
  std::vector<real> sgn(static_cast<std::size_t>(N * 4)), ctr(static_cast<std::size_t>(N * 4));
  for (std::int64_t n = 0; n < N; ++n) {
    const auto s = static_cast<real>(anchors.stride_of[static_cast<std::size_t>(n)]);
    const auto& c = anchors.centers[static_cast<std::size_t>(n)];
    const std::size_t b = static_cast<std::size_t>(n * 4);
    sgn[b + 0] = -s;
    sgn[b + 1] = -s;
    sgn[b + 2] = s;
    sgn[b + 3] = s;
    ctr[b + 0] = c[0];
    ctr[b + 1] = c[1];
    ctr[b + 2] = c[0];
    ctr[b + 3] = c[1];
  }
  Tensor boxes = add(mul(box_deltas, Tensor({N, 4}, std::move(sgn))), Tensor({N, 4}, std::move(ctr)));
  if (!clip) return boxes;
  std::vector<real> lo(static_cast<std::size_t>(N * 4), real(0)), hi(static_cast<std::size_t>(N * 4));
  for (std::int64_t n = 0; n < N; ++n) {
    const std::size_t b = static_cast<std::size_t>(n * 4);
    hi[b + 0] = hi[b + 2] = static_cast<real>(image_width);
    hi[b + 1] = hi[b + 3] = static_cast<real>(image_height);
  }
  return minimum(maximum(boxes, Tensor({N, 4}, std::move(lo))), Tensor({N, 4}, std::move(hi)));
}

Tensor encode_boxes(const Tensor& boxes, const AnchorGrid& anchors) {
  const auto N = anchors.size();
  if (boxes.rank() != 2 || boxes.dim(0) != N || boxes.dim(1) != 4) {
    throw DimensionError("encode_boxes: expected " + std::to_string(N) + "x4 boxes, got " + shape_str(boxes.shape()));
  }
  auto b = boxes.data();
  std::vector<real> out(b.size());
  for (std::int64_t n = 0; n < N; ++n) {
    const auto s = static_cast<real>(anchors.stride_of[static_cast<std::size_t>(n)]);
    const auto& c = anchors.centers[static_cast<std::size_t>(n)];
    const std::size_t i = static_cast<std::size_t>(n * 4);
    out[i + 0] = (c[0] - b[i + 0]) / s;
    out[i + 1] = (c[1] - b[i + 1]) / s;
    out[i + 2] = (b[i + 2] - c[0]) / s;
    out[i + 3] = (b[i + 3] - c[1]) / s;
  }
  return Tensor({N, 4}, std::move(out));
}

}  // namespace yoloe
