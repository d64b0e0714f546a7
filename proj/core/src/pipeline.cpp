#include "yoloe/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <set>

#include <json.hpp>

#include "yoloe/inference.hpp"
#include "yoloe/rng.hpp"

namespace yoloe {

using nlohmann::json;

namespace {

std::vector<SyntheticScene> scenes_from(const std::string& dir, const DatasetSpec& spec, const ModelConfig& model) {
  DatasetSpec loaded;
  auto scenes = dir.empty() ? generate_dataset(spec) : load_dataset(dir, &loaded);
  for (const auto& s : scenes) {
    if (s.image.dim(1) != model.input_height || s.image.dim(2) != model.input_width) {
      throw DimensionError("dataset image size " + std::to_string(s.image.dim(1)) + "x" +
                           std::to_string(s.image.dim(2)) + " does not match the model input " +
                           std::to_string(model.input_height) + "x" + std::to_string(model.input_width));
    }
  }
  return scenes;
}

}  // namespace

std::vector<SyntheticScene> training_scenes(const RunConfig& config) {
  return scenes_from(config.paths.dataset, config.dataset, config.model);
}

std::vector<SyntheticScene> validation_scenes(const RunConfig& config) {
  return scenes_from(config.paths.val_dataset, config.validation, config.model);
}

std::vector<std::string> training_categories(const RunConfig& config) {
  if (config.paths.dataset.empty()) return config.dataset.categories();
  DatasetSpec spec;
  const auto scenes = load_dataset(config.paths.dataset, &spec);
  return spec.categories();
}

PromptSet text_prompts(const ModelConfig& model, const std::vector<std::string>& names,
                       const std::string& embedding_table) {
  const TextEncoder encoder(model.embed_dim);
  if (embedding_table.empty()) return encode_text(names, encoder);
  const auto table = EmbeddingTable::load(embedding_table);
  return encode_text(names, encoder, &table);
}

PromptSet text_prompts(const RunConfig& config, const std::vector<std::string>& names) {
  return text_prompts(config.model, names, config.paths.embedding_table);
}

AuxAligner initial_aligner(const ModelConfig& model) {
  return AuxAligner::create(model.embed_dim, mix_seed(model.seed, "aux"));
}

bool has_aligner(const Checkpoint& ckpt) { return ckpt.find("aux.w1") != nullptr; }

AuxAligner aligner_from_checkpoint(const Checkpoint& ckpt) {
  AuxAligner a;
  a.w1 = ckpt.get("aux.w1").detach();
  a.b1 = ckpt.get("aux.b1").detach();
  a.w2 = ckpt.get("aux.w2").detach();
  a.b2 = ckpt.get("aux.b2").detach();
  const auto D = a.w1.dim(0);
  if (a.w1.rank() != 2 || a.w1.dim(1) != 2 * D || a.b1.numel() != 2 * D || a.w2.dim(0) != 2 * D ||
      a.w2.dim(1) != D || a.b2.numel() != D) {
    throw DimensionError("checkpoint aligner tensors have inconsistent shapes");
  }
  return a;
}

std::vector<std::string> checkpoint_categories(const Checkpoint& ckpt) {
  auto it = ckpt.metadata.extra.find(kMetaCategories);
  if (it == ckpt.metadata.extra.end()) return {};
  try {
    return json::parse(it->second).get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint metadata 'categories': ") + e.what());
  }
}

std::optional<double> checkpoint_delta(const Checkpoint& ckpt) {
  auto it = ckpt.metadata.extra.find(kMetaDelta);
  if (it == ckpt.metadata.extra.end()) return std::nullopt;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw FormatError("checkpoint metadata 'delta' is not a number: " + it->second);
  }
}

StageRun run_stage(const RunConfig& config, Stage stage, Model& model, AuxAligner& aux,
                   const std::vector<SyntheticScene>& scenes, const StageOptions& options) {
  const auto categories = training_categories(config);
  const TrainConfig& tc = stage_config(config, stage);
  Trainer trainer(stage, model, aux, scenes, text_prompts(config, categories), tc);
  if (tc.negatives_per_step > 0) {
    if (config.paths.vocabulary.empty()) throw ConfigError("negatives_per_step needs paths.vocabulary");
    // Every colour/shape composition is kept out of the pool, held-out ones included.
    std::set<std::string> grid;
    for (const auto& c : config.dataset.colors)
      for (const auto& s : config.dataset.shapes) grid.insert(category_name(c, s));
    std::vector<std::string> pool;
    for (auto& n : read_names_file(config.paths.vocabulary))
      if (!grid.contains(n)) pool.push_back(std::move(n));
    if (!pool.empty()) trainer.set_negative_pool(text_prompts(config, pool));
  }
  if (options.resume) {
    if (options.resume->metadata.stage != stage_name(stage)) {
      throw UsageError("cannot resume stage '" + std::string(stage_name(stage)) + "' from a '" +
                       options.resume->metadata.stage + "' checkpoint");
    }
    trainer.load_state(*options.resume);
  }

  const auto finish = [&](Checkpoint c) {
    c.metadata.seed = tc.seed;
    c.metadata.extra[kMetaCategories] = json(categories).dump();
    return c;
  };
  TrainHooks hooks = options.hooks;
  hooks.on_epoch = [&](const EpochLog& log) {
    if (options.hooks.on_epoch) options.hooks.on_epoch(log);
    if (options.on_checkpoint) options.on_checkpoint(finish(trainer.state()));
  };

  StageRun run;
  run.result = trainer.run(hooks);
  run.checkpoint = finish(trainer.state());
  if (stage == Stage::kPromptFree && run.result.completed) {
    const auto refined = refine_prompts(text_prompts(config, categories), aux);
    run.delta = calibrate_delta(model, scenes, refined, config.delta_recall, tc.assign_alpha, tc.assign_beta);
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", run.delta->delta);
    run.checkpoint.metadata.extra[kMetaDelta] = buf;
    std::snprintf(buf, sizeof buf, "%.17g", run.delta->recall);
    run.checkpoint.metadata.extra[kMetaDeltaRecall] = buf;
  }
  return run;
}

void save_checkpoint_atomic(const std::filesystem::path& path, const Checkpoint& ckpt) {
  auto tmp = path;
  tmp += ".tmp";
  save_checkpoint(tmp, ckpt);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace yoloe
