#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "yoloe/checkpoint.hpp"
#include "yoloe/config.hpp"
#include "yoloe/prompts.hpp"
#include "yoloe/trainer.hpp"

// Glue between a RunConfig and the trainer, shared by the command-line tool
// and the end-to-end tests.

namespace yoloe {

/// Scenes from paths.dataset / paths.val_dataset, or generated from the
/// dataset / validation specs when those paths are empty.
std::vector<SyntheticScene> training_scenes(const RunConfig& config);
std::vector<SyntheticScene> validation_scenes(const RunConfig& config);

/// Categories the training split can contain.
std::vector<std::string> training_categories(const RunConfig& config);

/// Text prompts through paths.embedding_table when set, else the built-in
/// encoder.
PromptSet text_prompts(const RunConfig& config, const std::vector<std::string>& names);
PromptSet text_prompts(const ModelConfig& model, const std::vector<std::string>& names,
                       const std::string& embedding_table = {});

/// A fresh aligner for a model (seeded from the model seed).
AuxAligner initial_aligner(const ModelConfig& model);
bool has_aligner(const Checkpoint& ckpt);
AuxAligner aligner_from_checkpoint(const Checkpoint& ckpt);

// Metadata extras written by run_stage.
inline constexpr const char* kMetaCategories = "categories";  // JSON list
inline constexpr const char* kMetaDelta = "delta";            // decimal, prompt-free stage only
inline constexpr const char* kMetaDeltaRecall = "delta_recall";

std::vector<std::string> checkpoint_categories(const Checkpoint& ckpt);
std::optional<double> checkpoint_delta(const Checkpoint& ckpt);

struct StageOptions {
  TrainHooks hooks;
  /// Called with the full training state after every epoch.
  std::function<void(const Checkpoint&)> on_checkpoint;
  /// Training state to continue from (same stage).
  const Checkpoint* resume = nullptr;
};

struct StageRun {
  TrainResult result;
  Checkpoint checkpoint;                     // final state with metadata extras
  std::optional<DeltaCalibration> delta;     // prompt-free stage
};

/// Trains one stage of `config` on `scenes`. The prompt-free stage ends by
/// calibrating delta on `scenes` at config.delta_recall.
StageRun run_stage(const RunConfig& config, Stage stage, Model& model, AuxAligner& aux,
                   const std::vector<SyntheticScene>& scenes, const StageOptions& options = {});

/// Writes to a sibling temporary file, then renames over `path`.
void save_checkpoint_atomic(const std::filesystem::path& path, const Checkpoint& ckpt);

}  // namespace yoloe
