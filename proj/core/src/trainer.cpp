#include "yoloe/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "yoloe/autograd.hpp"
#include "yoloe/inference.hpp"
#include "yoloe/ops.hpp"
#include "yoloe/rng.hpp"
#include "yoloe/savpe.hpp"

namespace yoloe {

using nlohmann::json;

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::kText: return "text";
    case Stage::kSavpe: return "savpe";
    case Stage::kPromptFree: return "promptfree";
  }
  return "?";
}

Stage parse_stage(const std::string& s) {
  if (s == "text") return Stage::kText;
  if (s == "savpe") return Stage::kSavpe;
  if (s == "promptfree") return Stage::kPromptFree;
  throw UsageError("unknown stage '" + s + "' (expected text, savpe or promptfree)");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!std::isfinite(lr) || lr < 0) throw ConfigError("train.lr must be finite and >= 0");
  if (momentum < 0 || momentum >= 1) throw ConfigError("train.momentum must lie in [0, 1)");
  if (weight_decay < 0) throw ConfigError("train.weight_decay must be >= 0");
  if (warmup_fraction < 0 || warmup_fraction > 1) throw ConfigError("train.warmup_fraction must lie in [0, 1]");
  if (assign_alpha < 0 || assign_beta < 0) throw ConfigError("train.assign_alpha/beta must be >= 0");
  if (negatives_per_step < 0) throw ConfigError("train.negatives_per_step must be >= 0");
  weights.validate();
}

std::string train_config_to_json(const TrainConfig& c) {
  json j{{"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"lr", c.lr},
         {"momentum", c.momentum},
         {"weight_decay", c.weight_decay},
         {"warmup_fraction", c.warmup_fraction},
         {"grad_clip", c.grad_clip},
         {"lambda_cls", c.weights.cls},
         {"lambda_box", c.weights.box},
         {"lambda_mask", c.weights.mask},
         {"lambda_ref", c.weights.ref},
         {"use_dice", c.use_dice},
         {"soft_targets", c.soft_targets},
         {"assign_alpha", c.assign_alpha},
         {"assign_beta", c.assign_beta},
         {"hflip", c.hflip},
         {"negatives_per_step", c.negatives_per_step},
         {"seed", c.seed}};
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  TrainConfig c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "epochs") c.epochs = v.get<int>();
      else if (key == "batch_size") c.batch_size = v.get<int>();
      else if (key == "lr") c.lr = v.get<double>();
      else if (key == "momentum") c.momentum = v.get<double>();
      else if (key == "weight_decay") c.weight_decay = v.get<double>();
      else if (key == "warmup_fraction") c.warmup_fraction = v.get<double>();
      else if (key == "grad_clip") c.grad_clip = v.get<double>();
      else if (key == "lambda_cls") c.weights.cls = v.get<double>();
      else if (key == "lambda_box") c.weights.box = v.get<double>();
      else if (key == "lambda_mask") c.weights.mask = v.get<double>();
      else if (key == "lambda_ref") c.weights.ref = v.get<double>();
      else if (key == "use_dice") c.use_dice = v.get<bool>();
      else if (key == "soft_targets") c.soft_targets = v.get<bool>();
      else if (key == "assign_alpha") c.assign_alpha = v.get<double>();
      else if (key == "assign_beta") c.assign_beta = v.get<double>();
      else if (key == "hflip") c.hflip = v.get<bool>();
      else if (key == "negatives_per_step") c.negatives_per_step = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else throw ConfigError("unknown train config key '" + key + "'");
    } catch (const json::exception& e) {
      throw ConfigError("train config key '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

SceneTargets scene_targets(const SyntheticScene& scene, const ModelConfig& config) {
  SceneTargets t;
  const int s = config.prototype_stride();
  const int ph = config.prototype_height(), pw = config.prototype_width();
  for (const auto& in : scene.instances) {
    t.boxes.push_back(in.box);
    t.categories.push_back(in.category);
    MaskTarget m;
    m.height = ph;
    m.width = pw;
    m.coverage.assign(static_cast<std::size_t>(ph) * static_cast<std::size_t>(pw), 0.0f);
    for (int y = 0; y < in.mask.height; ++y)
      for (int x = 0; x < in.mask.width; ++x)
        if (in.mask.at(y, x)) m.coverage[static_cast<std::size_t>((y / s) * pw + x / s)] += 1.0f;
    const float cell = static_cast<float>(s * s);
    for (auto& v : m.coverage) v /= cell;
    const int x0 = std::clamp(static_cast<int>(std::floor(in.box[0] / static_cast<float>(s))), 0, pw - 1);
    const int y0 = std::clamp(static_cast<int>(std::floor(in.box[1] / static_cast<float>(s))), 0, ph - 1);
    const int x1 = std::clamp(static_cast<int>(std::ceil(in.box[2] / static_cast<float>(s))), x0 + 1, pw);
    const int y1 = std::clamp(static_cast<int>(std::ceil(in.box[3] / static_cast<float>(s))), y0 + 1, ph);
    m.crop = {x0, y0, x1, y1};
    t.masks.push_back(std::move(m));
  }
  return t;
}

namespace {

std::string group_of(const std::string& name) { return name.substr(0, name.find('.')); }

std::vector<GroundTruth> ground_truths(const SceneTargets& t, const std::map<std::string, std::int64_t>& column_of,
                                       std::vector<std::size_t>* kept = nullptr) {
  std::vector<GroundTruth> gts;
  for (std::size_t i = 0; i < t.boxes.size(); ++i) {
    auto it = column_of.find(t.categories[i]);
    if (it == column_of.end()) continue;
    gts.push_back({t.boxes[i], it->second});
    if (kept) kept->push_back(i);
  }
  return gts;
}

Tensor boxes_tensor(const std::vector<GroundTruth>& gts, const AssignmentResult& a) {
  std::vector<real> v;
  for (const auto& p : a.pairs) {
    for (float c : gts[static_cast<std::size_t>(p.gt)].box) v.push_back(static_cast<real>(c));
  }
  return Tensor({static_cast<std::int64_t>(a.pairs.size()), 4}, std::move(v));
}

std::map<std::string, std::int64_t> columns(const PromptSet& p) {
  std::map<std::string, std::int64_t> m;
  for (std::size_t i = 0; i < p.labels.size(); ++i) m[p.labels[i]] = static_cast<std::int64_t>(i);
  return m;
}

}  // namespace

struct Trainer::BatchLoss {
  double total = 0, cls = 0, box = 0, mask = 0;
  int fallbacks = 0;
  int violations = 0;
};

Trainer::Trainer(Stage stage, Model& model, AuxAligner& aux, const std::vector<SyntheticScene>& scenes,
                 PromptSet prompts, TrainConfig config)
    : stage_(stage), model_(model), aux_(aux), scenes_(scenes), prompts_(std::move(prompts)), config_(config) {
  config_.validate();
  if (scenes_.empty()) throw UsageError("training needs at least one scene");
  prompts_.validate();
  if (prompts_.dim() != model_.config().embed_dim) throw DimensionError("prompt dimension differs from embed_dim");
  column_of_ = columns(prompts_);
  for (const auto& sc : scenes_) {
    for (const auto& in : sc.instances) {
      if (!column_of_.contains(in.category)) {
        throw UsageError("scene category '" + in.category + "' has no training prompt");
      }
    }
  }

  model_.set_requires_grad("", false);
  aux_.set_requires_grad(false);
  switch (stage_) {
    case Stage::kText:
      model_.set_requires_grad("", true);
      model_.set_requires_grad("savpe.", false);
      model_.set_requires_grad("head.obj.", false);
      aux_.set_requires_grad(true);
      break;
    case Stage::kSavpe: model_.set_requires_grad("savpe.", true); break;
    case Stage::kPromptFree:
      model_.set_requires_grad("head.obj.", true);
      frozen_refined_ = refine_prompts(prompts_, aux_);
      break;
  }
  params_ = trainable();
  if (stage_ == Stage::kText) {
    optimizer_ = std::make_unique<SgdMomentum>(params_, config_.momentum, config_.weight_decay);
  } else {
    optimizer_ = std::make_unique<AdamW>(params_, config_.weight_decay);
  }
  schedule_.base_lr = config_.lr;
  schedule_.total_steps = std::max<std::int64_t>(1, total_steps());
  schedule_.warmup_fraction = config_.warmup_fraction;
  snapshot();
}

Trainer::~Trainer() {
  model_.set_requires_grad("", false);
  aux_.set_requires_grad(false);
}

std::vector<NamedTensor> Trainer::trainable() const {
  std::vector<NamedTensor> out;
  for (const auto& p : model_.parameters()) {
    if (p.tensor.requires_grad()) out.push_back(p);
  }
  if (stage_ == Stage::kText) {
    for (auto& [name, t] : aux_.named_parameters()) out.push_back({name, t});
  }
  return out;
}

std::int64_t Trainer::steps_per_epoch() const {
  const auto n = static_cast<std::int64_t>(scenes_.size());
  return (n + config_.batch_size - 1) / config_.batch_size;
}

std::int64_t Trainer::total_steps() const { return steps_per_epoch() * config_.epochs; }

std::vector<std::size_t> Trainer::epoch_order(int epoch) const {
  std::vector<std::size_t> order(scenes_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(config_.seed, std::string(stage_name(stage_)) + "/order/" + std::to_string(epoch)));
  rng.shuffle(order.begin(), order.end());
  return order;
}

void Trainer::set_negative_pool(const PromptSet& pool) {
  if (pool.size() > 0 && pool.dim() != prompts_.dim()) throw DimensionError("negative pool dimension differs");
  std::vector<std::int64_t> rows;
  for (std::size_t i = 0; i < pool.labels.size(); ++i) {
    if (!column_of_.contains(pool.labels[i])) rows.push_back(static_cast<std::int64_t>(i));
  }
  negative_pool_ = rows.empty() ? Tensor{} : index_rows(pool.embeddings.detach(), rows);
}

Tensor Trainer::step_prompts(std::int64_t step, bool train) const {
  const auto k = static_cast<std::int64_t>(config_.negatives_per_step);
  if (!train || k == 0 || !negative_pool_.defined()) return prompts_.embeddings;
  const auto n = negative_pool_.dim(0);
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  Rng rng(mix_seed(config_.seed, "negatives/" + std::to_string(step)));
  const auto take = std::min(k, n);
  for (std::int64_t i = 0; i < take; ++i) {
    const auto j = i + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(take));
  return concat({prompts_.embeddings, index_rows(negative_pool_, idx)}, 0);
}

bool Trainer::flip_of(std::int64_t step, std::size_t scene) const {
  if (!config_.hflip) return false;
  Rng rng(mix_seed(config_.seed, "flip/" + std::to_string(step) + "/" + std::to_string(scene)));
  return rng.uniform() < 0.5;
}

void Trainer::snapshot() {
  last_good_.clear();
  for (const auto& p : params_) last_good_.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
}

void Trainer::restore_snapshot() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor t = params_[i].tensor;
    std::ranges::copy(last_good_[i], t.mutable_data().begin());
    t.zero_grad();
  }
}

Trainer::BatchLoss Trainer::batch_loss(const std::vector<std::size_t>& batch, std::int64_t step, bool train) const {
  return stage_ == Stage::kSavpe ? savpe_loss(batch, step, train) : text_or_objectness_loss(batch, step, train);
}

Trainer::BatchLoss Trainer::text_or_objectness_loss(const std::vector<std::size_t>& batch, std::int64_t step,
                                                    bool train) const {
  BatchLoss out;
  const auto& cfg = model_.config();
  const auto inv = real(1) / static_cast<real>(batch.size());
  const Tensor text_prompts = stage_ == Stage::kText ? step_prompts(step, train) : Tensor{};
  for (std::size_t idx : batch) {
    const bool flip = train && flip_of(step, idx);
    const SyntheticScene flipped = flip ? flip_horizontal(scenes_[idx]) : SyntheticScene{};
    const SyntheticScene& scene = flip ? flipped : scenes_[idx];
    const SceneTargets targets = scene_targets(scene, cfg);
    const auto gts = ground_truths(targets, column_of_);

    std::unique_ptr<GradTape> tape;
    std::unique_ptr<NoGradGuard> no_grad;
    if (train) tape = std::make_unique<GradTape>();
    else no_grad = std::make_unique<NoGradGuard>();

    const ForwardResult fwd = model_.forward(scene.image);
    const Tensor boxes = decode_boxes(fwd.head.box_deltas, model_.anchors(), cfg.input_height, cfg.input_width);
    Tensor scores;
    if (stage_ == Stage::kText) {
      const Tensor refined = reprta_refine(text_prompts, aux_);
      scores = classify(fwd.head.embeddings, refined, model_.temperature()).scores;
    } else {
      NoGradGuard ng;
      scores = classify(fwd.head.embeddings, frozen_refined_.embeddings, model_.temperature()).scores;
    }
    Tensor probs;
    {
      NoGradGuard ng;
      probs = sigmoid(scores);
    }
    const auto asg = assign_one_to_one(boxes, probs, model_.anchors(), gts, config_.assign_alpha, config_.assign_beta);
    if (!asg.injective(static_cast<std::int64_t>(gts.size()))) ++out.violations;
    out.fallbacks += asg.fallbacks;

    Tensor total;
    if (stage_ == Stage::kText) {
      std::vector<ClsTarget> pos;
      std::vector<std::int64_t> anchors;
      std::vector<MaskTarget> masks;
      for (const auto& p : asg.pairs) {
        pos.push_back({p.anchor, gts[static_cast<std::size_t>(p.gt)].column, config_.soft_targets ? p.target : 1.0});
        anchors.push_back(p.anchor);
        masks.push_back(targets.masks[static_cast<std::size_t>(p.gt)]);
      }
      const Tensor cls = loss_cls(scores, pos);
      Tensor box, mask;
      if (!anchors.empty()) {
        box = loss_box(index_rows(boxes, anchors), boxes_tensor(gts, asg));
        const auto K = fwd.head.prototypes.dim(0);
        const Tensor protos = reshape(fwd.head.prototypes, {K, fwd.head.prototypes.dim(1) * fwd.head.prototypes.dim(2)});
        mask = loss_mask(matmul(index_rows(fwd.head.mask_coeffs, anchors), protos), masks, config_.use_dice);
      }
      const auto report = total_loss(cls, box, mask, Tensor{}, config_.weights);
      out.cls += report.cls_value;
      out.box += report.box_value;
      out.mask += report.mask_value;
      out.total += report.total_value;
      total = report.total;
    } else {
      std::vector<real> t(static_cast<std::size_t>(fwd.head.num_anchors()), real(0));
      for (const auto& p : asg.pairs) t[static_cast<std::size_t>(p.anchor)] = real(1);
      total = mean(bce_with_logits(fwd.head.objectness, Tensor({fwd.head.num_anchors()}, std::move(t))));
      out.cls += total.item();
      out.total += total.item();
    }
    if (train && total.requires_grad()) tape->backward(total, inv);
  }
  const double n = static_cast<double>(batch.size());
  out.total /= n;
  out.cls /= n;
  out.box /= n;
  out.mask /= n;
  return out;
}

Trainer::BatchLoss Trainer::savpe_loss(const std::vector<std::size_t>& batch, std::int64_t step, bool train) const {
  BatchLoss out;
  const auto& cfg = model_.config();
  std::vector<SyntheticScene> flipped(batch.size());
  std::vector<const SyntheticScene*> scenes;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (train && flip_of(step, batch[b])) {
      flipped[b] = flip_horizontal(scenes_[batch[b]]);
      scenes.push_back(&flipped[b]);
    } else {
      scenes.push_back(&scenes_[batch[b]]);
    }
  }
  std::vector<ForwardResult> fwds;
  std::vector<Tensor> inputs;
  {
    NoGradGuard ng;
    for (const auto* s : scenes) {
      fwds.push_back(model_.forward(s->image));
      inputs.push_back(model_.savpe_input(fwds.back().features));
    }
  }

  // One cue per category present in the batch, drawn uniformly among its
  // instances.
  std::map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> instances;
  for (std::size_t b = 0; b < scenes.size(); ++b)
    for (std::size_t i = 0; i < scenes[b]->instances.size(); ++i) instances[scenes[b]->instances[i].category].push_back({b, i});

  std::unique_ptr<GradTape> tape;
  std::unique_ptr<NoGradGuard> no_grad;
  if (train) tape = std::make_unique<GradTape>();
  else no_grad = std::make_unique<NoGradGuard>();

  Rng rng(mix_seed(config_.seed, "cue/" + std::to_string(step)));
  std::map<std::string, std::int64_t> column;
  std::vector<Tensor> rows;
  for (const auto& [cat, list] : instances) {
    const auto [b, i] = list[train ? rng.below(list.size()) : 0];
    VisualCue cue;
    cue.box = scenes[b]->instances[i].box;
    try {
      rows.push_back(savpe_embed(model_, inputs[b], rasterize_cue(cue, cfg)));
    } catch (const DegenerateCueError&) {
      continue;
    }
    column[cat] = static_cast<std::int64_t>(rows.size()) - 1;
  }
  if (rows.empty()) return out;
  const Tensor prompts = concat(rows, 0);

  std::vector<Tensor> losses;
  for (std::size_t b = 0; b < scenes.size(); ++b) {
    const SceneTargets targets = scene_targets(*scenes[b], cfg);
    const auto gts = ground_truths(targets, column);
    const Tensor scores = classify(fwds[b].head.embeddings, prompts, model_.temperature()).scores;
    Tensor boxes, probs;
    {
      NoGradGuard ng;
      boxes = decode_boxes(fwds[b].head.box_deltas, model_.anchors(), cfg.input_height, cfg.input_width);
      probs = sigmoid(scores);
    }
    const auto asg = assign_one_to_one(boxes, probs, model_.anchors(), gts, config_.assign_alpha, config_.assign_beta);
    if (!asg.injective(static_cast<std::int64_t>(gts.size()))) ++out.violations;
    out.fallbacks += asg.fallbacks;
    std::vector<ClsTarget> pos;
    for (const auto& p : asg.pairs) {
      pos.push_back({p.anchor, gts[static_cast<std::size_t>(p.gt)].column, config_.soft_targets ? p.target : 1.0});
    }
    const Tensor cls = loss_cls(scores, pos);
    out.cls += cls.item();
    losses.push_back(cls);
  }
  const Tensor mean_cls = mul_scalar(sum(concat(losses, 0)), real(1) / static_cast<real>(losses.size()));
  const auto report = total_loss(mean_cls, Tensor{}, Tensor{}, Tensor{}, config_.weights);
  out.cls /= static_cast<double>(scenes.size());
  out.total = report.total_value;
  if (train && report.total.requires_grad()) tape->backward(report.total);
  return out;
}

StepLog Trainer::evaluate() const {
  StepLog log;
  log.step = step_;
  const auto B = static_cast<std::size_t>(config_.batch_size);
  double n = 0;
  for (std::size_t start = 0; start < scenes_.size(); start += B) {
    std::vector<std::size_t> batch;
    for (std::size_t i = start; i < std::min(scenes_.size(), start + B); ++i) batch.push_back(i);
    const auto l = batch_loss(batch, 0, false);
    const double w = static_cast<double>(batch.size());
    log.total += w * l.total;
    log.cls += w * l.cls;
    log.box += w * l.box;
    log.mask += w * l.mask;
    n += w;
  }
  log.total /= n;
  log.cls /= n;
  log.box /= n;
  log.mask /= n;
  return log;
}

TrainResult Trainer::run(const TrainHooks& hooks) {
  TrainResult result;
  const auto spe = steps_per_epoch();
  const auto total = total_steps();
  const auto frozen_hash = [&] {
    switch (stage_) {
      case Stage::kText: return model_.parameter_hash("savpe.") ^ model_.parameter_hash("head.obj.");
      case Stage::kSavpe: return model_.parameter_hash_excluding("savpe.");
      case Stage::kPromptFree: return model_.parameter_hash_excluding("head.obj.");
    }
    return std::uint64_t{0};
  };
  const auto hash_before = frozen_hash();

  EpochLog acc;
  std::int64_t acc_steps = 0;
  auto clock = std::chrono::steady_clock::now();
  std::vector<std::size_t> order;
  int order_epoch = -1;
  while (step_ < total) {
    if (hooks.stop_at_step >= 0 && step_ >= hooks.stop_at_step) return result;
    const int epoch = static_cast<int>(step_ / spe);
    const auto pos = step_ % spe;
    if (order_epoch != epoch) {
      order = epoch_order(epoch);
      order_epoch = epoch;
    }
    if (acc_steps == 0) {
      acc = EpochLog{};
      acc.epoch = epoch;
      clock = std::chrono::steady_clock::now();
    }
    const auto B = static_cast<std::size_t>(config_.batch_size);
    const auto begin = static_cast<std::size_t>(pos) * B;
    std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                   order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), begin + B)));

    StepLog log;
    log.step = step_;
    log.epoch = epoch;
    log.lr = schedule_.at(step_);
    try {
      optimizer_->zero_grad();
      const auto loss = batch_loss(batch, step_, true);
      // Gradients hold the batch mean already.
      log.grad_norm = clip_grad_norm(params_, config_.grad_clip);
      if (!std::isfinite(log.grad_norm)) throw NumericError("gradient norm is not finite");
      for (const auto& p : params_) {
        if (!p.tensor.has_grad()) continue;
        double ss = 0;
        for (real g : p.tensor.grad()) ss += double(g) * g;
        acc.grad_norms[group_of(p.name)] += std::sqrt(ss);
      }
      optimizer_->step(log.lr, 1.0);
      if (stage_ == Stage::kText) model_.clamp_temperature();
      log.total = loss.total;
      log.cls = loss.cls;
      log.box = loss.box;
      log.mask = loss.mask;
      acc.total += loss.total;
      acc.cls += loss.cls;
      acc.box += loss.box;
      acc.mask += loss.mask;
      acc.fallbacks += loss.fallbacks;
      acc.injectivity_violations += loss.violations;
      result.fallbacks += loss.fallbacks;
      result.injectivity_violations += loss.violations;
    } catch (const NumericError& e) {
      restore_snapshot();
      throw TrainingDiverged(std::string("training diverged at step ") + std::to_string(step_) + ": " + e.what());
    }
    ++step_;
    ++acc_steps;
    ++result.steps;
    if (hooks.on_step) hooks.on_step(log);

    if (step_ % spe == 0 || step_ == total) {
      const double n = static_cast<double>(acc_steps);
      acc.total /= n;
      acc.cls /= n;
      acc.box /= n;
      acc.mask /= n;
      for (auto& [k, v] : acc.grad_norms) v /= n;
      acc.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock).count();
      if (frozen_hash() != hash_before) throw Error("frozen parameters changed during the " + std::string(stage_name(stage_)) + " stage");
      result.epochs.push_back(acc);
      if (hooks.on_epoch) hooks.on_epoch(acc);
      snapshot();
      acc_steps = 0;
    }
  }
  result.completed = true;
  return result;
}

Checkpoint Trainer::state() const {
  Checkpoint c = model_checkpoint(model_, stage_name(stage_));
  for (auto& [name, t] : aux_.named_parameters()) c.tensors.push_back({name, t.detach()});
  for (auto& t : optimizer_->state()) c.tensors.push_back(std::move(t));
  c.metadata.extra["step"] = std::to_string(step_);
  c.metadata.extra["train_config"] = train_config_to_json(config_);
  return c;
}

void Trainer::load_state(const Checkpoint& ckpt) {
  load_model_parameters(model_, ckpt);
  for (auto& [name, t] : aux_.named_parameters()) {
    const auto& src = ckpt.get(name);
    if (src.shape() != t.shape()) throw DimensionError("checkpoint tensor '" + name + "' has the wrong shape");
    Tensor shared = t;
    std::ranges::copy(src.data(), shared.mutable_data().begin());
  }
  optimizer_->load_state(ckpt.tensors);
  auto it = ckpt.metadata.extra.find("step");
  if (it == ckpt.metadata.extra.end()) throw FormatError("training state has no step counter");
  step_ = std::stoll(it->second);
  optimizer_->set_steps_taken(step_);
  if (stage_ == Stage::kPromptFree) frozen_refined_ = refine_prompts(prompts_, aux_);
  snapshot();
}

AssignmentResult match_scene(const Model& model, const ForwardResult& fwd, const SyntheticScene& scene,
                             const PromptSet& prompts, double alpha, double beta) {
  NoGradGuard ng;
  const auto& cfg = model.config();
  const auto col = columns(prompts);
  const auto gts = ground_truths(scene_targets(scene, cfg), col);
  const Tensor boxes = decode_boxes(fwd.head.box_deltas, model.anchors(), cfg.input_height, cfg.input_width);
  const auto sim = classify(fwd.head.embeddings, prompts.embeddings, model.temperature());
  return assign_one_to_one(boxes, sim.probabilities(), model.anchors(), gts, alpha, beta);
}

DeltaCalibration calibrate_delta(const Model& model, const std::vector<SyntheticScene>& scenes,
                                 const PromptSet& prompts, double recall, double alpha, double beta) {
  if (!(recall > 0 && recall <= 1)) throw UsageError("calibrate_delta: recall must lie in (0, 1]");
  NoGradGuard ng;
  std::vector<double> pos;
  double neg_sum = 0;
  std::int64_t neg_n = 0;
  for (const auto& scene : scenes) {
    const auto fwd = model.forward(scene.image);
    const auto asg = match_scene(model, fwd, scene, prompts, alpha, beta);
    auto obj = fwd.head.objectness.data();
    std::vector<std::uint8_t> is_pos(obj.size(), 0);
    for (const auto& p : asg.pairs) {
      is_pos[static_cast<std::size_t>(p.anchor)] = 1;
      pos.push_back(obj[static_cast<std::size_t>(p.anchor)]);
    }
    for (std::size_t i = 0; i < obj.size(); ++i) {
      if (!is_pos[i]) {
        neg_sum += obj[i];
        ++neg_n;
      }
    }
  }
  DeltaCalibration c;
  c.positives = static_cast<std::int64_t>(pos.size());
  if (pos.empty()) throw UsageError("calibrate_delta: no ground-truth matched anchors");
  std::ranges::sort(pos);
  // Dropping the k lowest positives keeps n - k >= recall * n of them.
  const auto n = pos.size();
  auto k = static_cast<std::size_t>(std::floor((1.0 - recall) * static_cast<double>(n) + 1e-9));
  while (k > 0 && static_cast<double>(n - k) < recall * static_cast<double>(n)) --k;
  // Largest float strictly below the k-th smallest positive; ties at that
  // value stay above the threshold.
  c.delta = std::nextafter(static_cast<float>(pos[k]), -std::numeric_limits<float>::infinity());
  std::size_t kept = 0;
  double pos_sum = 0;
  for (double v : pos) {
    kept += v > c.delta ? 1 : 0;
    pos_sum += v;
  }
  c.recall = static_cast<double>(kept) / static_cast<double>(n);
  c.positive_mean = pos_sum / static_cast<double>(n);
  c.negative_mean = neg_n ? neg_sum / static_cast<double>(neg_n) : 0.0;
  return c;
}

CueCosine savpe_cue_cosine(const Model& model, const std::vector<SyntheticScene>& scenes, const PromptSet& prompts) {
  NoGradGuard ng;
  const auto& cfg = model.config();
  std::vector<ForwardResult> fwds;
  for (const auto& s : scenes) fwds.push_back(model.forward(s.image));
  std::map<std::string, std::pair<std::size_t, std::vector<real>>> cue_of;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    for (const auto& in : scenes[s].instances) {
      if (cue_of.contains(in.category)) continue;
      VisualCue cue;
      cue.box = in.box;
      const Tensor e = savpe_embed(model, model.savpe_input(fwds[s].features), rasterize_cue(cue, cfg));
      cue_of[in.category] = {s, std::vector<real>(e.data().begin(), e.data().end())};
    }
  }
  double same = 0, cross = 0;
  std::int64_t ns = 0, nc = 0;
  const auto D = static_cast<std::size_t>(cfg.embed_dim);
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto asg = match_scene(model, fwds[s], scenes[s], prompts);
    std::vector<std::size_t> kept;
    ground_truths(scene_targets(scenes[s], cfg), columns(prompts), &kept);
    auto O = fwds[s].head.embeddings.data();
    for (const auto& p : asg.pairs) {
      const auto& cat = scenes[s].instances[kept[static_cast<std::size_t>(p.gt)]].category;
      for (const auto& [c, entry] : cue_of) {
        if (entry.first == s) continue;
        double dot = 0;
        for (std::size_t d = 0; d < D; ++d) dot += double(O[static_cast<std::size_t>(p.anchor) * D + d]) * entry.second[d];
        if (c == cat) {
          same += dot;
          ++ns;
        } else {
          cross += dot;
          ++nc;
        }
      }
    }
  }
  return {ns ? same / static_cast<double>(ns) : 0.0, nc ? cross / static_cast<double>(nc) : 0.0};
}

}  // namespace yoloe
