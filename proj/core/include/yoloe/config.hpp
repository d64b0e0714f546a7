#pragma once

#include <filesystem>
#include <string>

#include "yoloe/dataset.hpp"
#include "yoloe/model.hpp"
#include "yoloe/trainer.hpp"

namespace yoloe {

struct InferConfig {
  float score_threshold = 0.25f;
  double delta = 0.0;               // LRPC threshold on the objectness logit
  std::string prompt_mode = "text"; // text | visual | promptfree
  bool multi_label = false;
};

struct PathsConfig {
  std::string dataset;          // training scene directory; generated from `dataset` when empty
  std::string val_dataset;      // validation scene directory; generated from `validation` when empty
  std::string vocabulary;       // names file for prompt-free inference
  std::string init_checkpoint;  // starting weights for the savpe and promptfree stages
  std::string embedding_table;  // optional "text/<name>" table replacing the built-in encoder
};

/// Everything a run needs. Relative paths resolve against the directory of the
/// config file.
struct RunConfig {
  ModelConfig model;
  DatasetSpec dataset;
  DatasetSpec validation;
  TrainConfig text;
  TrainConfig savpe;
  TrainConfig promptfree;
  double delta_recall = 0.95;
  InferConfig infer;
  PathsConfig paths;

  RunConfig();
  void validate() const;
};

std::string run_config_to_json(const RunConfig& c);
/// Unknown keys are rejected at every level; missing keys keep defaults.
RunConfig run_config_from_json(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Stage settings by name.
const TrainConfig& stage_config(const RunConfig& c, Stage stage);

}  // namespace yoloe
