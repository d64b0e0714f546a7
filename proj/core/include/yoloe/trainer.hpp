#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "yoloe/aligner.hpp"
#include "yoloe/assign.hpp"
#include "yoloe/checkpoint.hpp"
#include "yoloe/dataset.hpp"
#include "yoloe/losses.hpp"
#include "yoloe/model.hpp"
#include "yoloe/optim.hpp"
#include "yoloe/prompts.hpp"

namespace yoloe {

enum class Stage { kText, kSavpe, kPromptFree };
const char* stage_name(Stage stage);
Stage parse_stage(const std::string& s);

struct TrainConfig {
  int epochs = 10;
  int batch_size = 8;
  double lr = 0.01;
  double momentum = 0.9;       // SGD (text stage)
  double weight_decay = 5e-4;  // SGD L2 or AdamW decoupled decay
  double warmup_fraction = 0.05;
  double grad_clip = 10.0;     // on the batch-mean gradient; <= 0 disables
  LossWeights weights;
  bool use_dice = false;
  bool soft_targets = true;    // binary targets when false
  double assign_alpha = 1.0;
  double assign_beta = 6.0;
  bool hflip = false;
  // Text stage: extra prompt columns per step drawn from the negative pool.
  int negatives_per_step = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

std::string train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const std::string& text);

struct StepLog {
  std::int64_t step = 0;
  int epoch = 0;
  double lr = 0;
  double total = 0, cls = 0, box = 0, mask = 0;  // batch means
  double grad_norm = 0;
};

struct EpochLog {
  int epoch = 0;
  double total = 0, cls = 0, box = 0, mask = 0;
  int fallbacks = 0;
  int injectivity_violations = 0;
  double seconds = 0;
  // Mean gradient norm per parameter group ("backbone", "neck", "head",
  // "proto", "savpe", "temperature", "aux").
  std::map<std::string, double> grad_norms;
};

struct TrainHooks {
  std::function<void(const StepLog&)> on_step;
  std::function<void(const EpochLog&)> on_epoch;
  /// Return early once this many optimizer steps have been taken in total.
  std::int64_t stop_at_step = -1;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  std::int64_t steps = 0;
  int injectivity_violations = 0;
  int fallbacks = 0;
  bool completed = false;
};

/// Thrown when a loss or gradient turns non-finite. The trainer has already
/// restored the parameters of the last completed epoch.
class TrainingDiverged : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Per-scene supervision derived from a SyntheticScene.
struct SceneTargets {
  std::vector<std::array<float, 4>> boxes;
  std::vector<std::string> categories;
  std::vector<MaskTarget> masks;  // prototype resolution
};
SceneTargets scene_targets(const SyntheticScene& scene, const ModelConfig& config);

/// One training stage over a fixed scene list.
///
/// text:       model (minus savpe. and head.obj.) + aligner + temperature,
///             SGD with momentum, warmup then cosine decay.
/// savpe:      savpe. parameters only, AdamW. Each batch draws one cue per
///             category present in the batch; every scene is classified
///             against all of the batch's visual prompts.
/// promptfree: head.obj. parameters only, AdamW, BCE with assigned anchors
///             positive.
///
/// Data order and flips depend only on (seed, epoch, step), so a run resumed
/// from a state checkpoint continues bit-exactly.
class Trainer {
 public:
  /// `prompts` are the raw text prompts of the training categories; scene
  /// categories must all appear among their labels. The aligner is trained in
  /// the text stage and applied (frozen) to prompts in the prompt-free stage.
  Trainer(Stage stage, Model& model, AuxAligner& aux, const std::vector<SyntheticScene>& scenes, PromptSet prompts,
          TrainConfig config);
  ~Trainer();
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  /// Names (e.g. the built-in vocabulary) sampled as negative text prompts
  /// in the text stage; names equal to a training label are dropped.
  void set_negative_pool(const PromptSet& pool);

  TrainResult run(const TrainHooks& hooks = {});

  std::int64_t step() const { return step_; }
  std::int64_t steps_per_epoch() const;
  std::int64_t total_steps() const;

  /// Model, aligner, optimizer buffers and the step counter.
  Checkpoint state() const;
  void load_state(const Checkpoint& ckpt);

  /// Mean losses over all scenes with the current parameters, no updates.
  StepLog evaluate() const;

 private:
  struct BatchLoss;
  // Losses of a batch; with `train`, gradients of the batch-mean loss are
  // accumulated into the parameters.
  BatchLoss batch_loss(const std::vector<std::size_t>& batch, std::int64_t step, bool train) const;
  BatchLoss text_or_objectness_loss(const std::vector<std::size_t>& batch, std::int64_t step, bool train) const;
  BatchLoss savpe_loss(const std::vector<std::size_t>& batch, std::int64_t step, bool train) const;
  std::vector<std::size_t> epoch_order(int epoch) const;
  Tensor step_prompts(std::int64_t step, bool train) const;
  bool flip_of(std::int64_t step, std::size_t scene) const;
  std::vector<NamedTensor> trainable() const;
  void snapshot();
  void restore_snapshot();

  Stage stage_;
  Model& model_;
  AuxAligner& aux_;
  const std::vector<SyntheticScene>& scenes_;
  PromptSet prompts_;
  TrainConfig config_;
  PromptSet frozen_refined_;  // prompt-free stage
  Tensor negative_pool_;
  std::map<std::string, std::int64_t> column_of_;
  std::vector<NamedTensor> params_;
  std::unique_ptr<Optimizer> optimizer_;
  LrSchedule schedule_;
  std::int64_t step_ = 0;
  std::vector<std::vector<real>> last_good_;
  std::uint64_t frozen_hash_ = 0;
};

struct DeltaCalibration {
  double delta = 0;
  double recall = 0;           // fraction of matched anchors with logit > delta
  std::int64_t positives = 0;  // GT-matched anchors
  double positive_mean = 0, negative_mean = 0;  // objectness logits
};

/// Matches ground truths to anchors on `scenes` (one-to-one assignment with
/// the given prompts) and picks the largest delta whose strict threshold
/// keeps at least `recall` of the matched anchors.
DeltaCalibration calibrate_delta(const Model& model, const std::vector<SyntheticScene>& scenes,
                                 const PromptSet& prompts, double recall = 0.95, double alpha = 1.0,
                                 double beta = 6.0);

/// Cosine between box-cue visual prompts and the embeddings of the anchors
/// assigned (with `prompts`) to ground truths in other scenes, averaged over
/// same-category and cross-category pairs. One cue per category: its first
/// instance in `scenes`.
struct CueCosine {
  double same = 0, cross = 0;
};
CueCosine savpe_cue_cosine(const Model& model, const std::vector<SyntheticScene>& scenes, const PromptSet& prompts);

/// GT-matched anchors of a scene under one-to-one assignment against
/// `prompts`; ground truths whose category is not among the labels are
/// skipped.
AssignmentResult match_scene(const Model& model, const ForwardResult& fwd, const SyntheticScene& scene,
                             const PromptSet& prompts, double alpha = 1.0, double beta = 6.0);

}  // namespace yoloe
