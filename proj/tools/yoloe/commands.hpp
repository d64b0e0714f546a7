#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "yoloe/checkpoint.hpp"
#include "yoloe/fold.hpp"
#include "yoloe/inference.hpp"
#include "yoloe/prompts.hpp"

namespace yoloe::cli {

/// Work selected by the parsed subcommand; returns the process exit code.
using Action = std::function<int()>;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;
inline constexpr int kExitUsage = 2;

void add_dataset_command(CLI::App& app, Action& action);
void add_train_command(CLI::App& app, Action& action);
void add_fold_command(CLI::App& app, Action& action);
void add_infer_command(CLI::App& app, Action& action);
void add_validate_command(CLI::App& app, Action& action);
void add_bench_command(CLI::App& app, Action& action);
void add_check_command(CLI::App& app, Action& action);

// Helpers shared by the commands.

struct LoadedModel {
  Checkpoint checkpoint;
  Model model;
  std::optional<AuxAligner> aux;
};
LoadedModel load_model(const std::filesystem::path& ckpt);

/// Text prompts for `names`, refined by the checkpoint's aligner when present.
PromptSet refined_text_prompts(const LoadedModel& m, const std::vector<std::string>& names,
                               const std::string& embedding_table);

/// The fold stored in the checkpoint when its labels equal `names`.
std::optional<FoldedClassifier> stored_fold(const LoadedModel& m, const std::vector<std::string>& names);

/// Built-in vocabulary with rows refined by the checkpoint's aligner.
Vocabulary load_vocabulary(const LoadedModel& m, const std::filesystem::path& names_file,
                           const std::string& embedding_table);

/// Delta from the flag, else the checkpoint's calibrated value, else 0.
double resolve_delta(const std::string& flag, const Checkpoint& ckpt);

}  // namespace yoloe::cli
