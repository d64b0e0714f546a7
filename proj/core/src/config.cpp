#include "yoloe/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace yoloe {

using nlohmann::json;

RunConfig::RunConfig() {
  savpe.epochs = 4;
  savpe.lr = 2e-3;
  savpe.weight_decay = 0.01;
  promptfree.epochs = 2;
  promptfree.lr = 2e-3;
  promptfree.weight_decay = 0.01;
  validation.seed = dataset.seed + 1;
}

void RunConfig::validate() const {
  model.validate();
  dataset.validate();
  validation.validate();
  text.validate();
  savpe.validate();
  promptfree.validate();
  if (!(delta_recall > 0 && delta_recall <= 1)) throw ConfigError("delta_recall must lie in (0, 1]");
  if (!(infer.score_threshold >= 0 && infer.score_threshold <= 1)) {
    throw ConfigError("infer.score_threshold must lie in [0, 1]");
  }
  if (std::isnan(infer.delta)) throw ConfigError("infer.delta must not be NaN");
  if (infer.prompt_mode != "text" && infer.prompt_mode != "visual" && infer.prompt_mode != "promptfree") {
    throw ConfigError("infer.prompt_mode must be text, visual or promptfree");
  }
  if (dataset.height != model.input_height || dataset.width != model.input_width) {
    throw ConfigError("dataset size " + std::to_string(dataset.height) + "x" + std::to_string(dataset.width) +
                      " differs from the model input " + std::to_string(model.input_height) + "x" +
                      std::to_string(model.input_width));
  }
}

const TrainConfig& stage_config(const RunConfig& c, Stage stage) {
  switch (stage) {
    case Stage::kText: return c.text;
    case Stage::kSavpe: return c.savpe;
    case Stage::kPromptFree: return c.promptfree;
  }
  return c.text;
}

std::string run_config_to_json(const RunConfig& c) {
  json j;
  j["model"] = json::parse(model_config_to_json(c.model));
  j["dataset"] = json::parse(dataset_spec_to_json(c.dataset));
  j["validation"] = json::parse(dataset_spec_to_json(c.validation));
  j["train"] = {{"text", json::parse(train_config_to_json(c.text))},
                {"savpe", json::parse(train_config_to_json(c.savpe))},
                {"promptfree", json::parse(train_config_to_json(c.promptfree))},
                {"delta_recall", c.delta_recall}};
  j["infer"] = {{"score_threshold", c.infer.score_threshold},
                {"delta", c.infer.delta},
                {"prompt_mode", c.infer.prompt_mode},
                {"multi_label", c.infer.multi_label}};
  j["paths"] = {{"dataset", c.paths.dataset},
                {"val_dataset", c.paths.val_dataset},
                {"vocabulary", c.paths.vocabulary},
                {"init_checkpoint", c.paths.init_checkpoint},
                {"embedding_table", c.paths.embedding_table}};
  return j.dump(2);
}

namespace {

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

std::string resolve(const std::string& p, const std::filesystem::path& base) {
  if (p.empty() || base.empty() || std::filesystem::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

}  // namespace

RunConfig run_config_from_json(const std::string& text, const std::filesystem::path& base_dir) {
  RunConfig c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  only_keys(j, "config", {"model", "dataset", "validation", "train", "infer", "paths"});
  try {
    if (j.contains("model")) c.model = model_config_from_json(j["model"].dump());
    if (j.contains("dataset")) {
      c.dataset = dataset_spec_from_json(j["dataset"].dump());
      c.validation = c.dataset;
      c.validation.count = 200;
      c.validation.seed = c.dataset.seed + 1;
    }
    if (j.contains("validation")) {
      // Fields not given follow the training spec.
      json v = json::parse(dataset_spec_to_json(c.validation));
      only_keys(j["validation"], "validation", {"count", "height", "width", "shapes", "colors", "max_instances", "seed",
                                                "min_radius", "max_radius", "exclude", "only", "allow_overlap"});
      v.update(j["validation"]);
      c.validation = dataset_spec_from_json(v.dump());
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      only_keys(t, "train", {"text", "savpe", "promptfree", "delta_recall"});
      auto stage = [&](const char* name, TrainConfig& dst) {
        if (!t.contains(name)) return;
        json base = json::parse(train_config_to_json(dst));
        const auto& given = t[name];
        if (!given.is_object()) throw ConfigError(std::string("train.") + name + " must be a JSON object");
        for (const auto& [k, v] : given.items()) {
          if (!base.contains(k)) throw ConfigError("unknown key '" + k + "' in train." + name);
          base[k] = v;
        }
        dst = train_config_from_json(base.dump());
      };
      stage("text", c.text);
      stage("savpe", c.savpe);
      stage("promptfree", c.promptfree);
      if (t.contains("delta_recall")) c.delta_recall = t["delta_recall"].get<double>();
    }
    if (j.contains("infer")) {
      const auto& i = j["infer"];
      only_keys(i, "infer", {"score_threshold", "delta", "prompt_mode", "multi_label"});
      if (i.contains("score_threshold")) c.infer.score_threshold = i["score_threshold"].get<float>();
      if (i.contains("delta")) c.infer.delta = i["delta"].get<double>();
      if (i.contains("prompt_mode")) c.infer.prompt_mode = i["prompt_mode"].get<std::string>();
      if (i.contains("multi_label")) c.infer.multi_label = i["multi_label"].get<bool>();
    }
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      only_keys(p, "paths", {"dataset", "val_dataset", "vocabulary", "init_checkpoint", "embedding_table"});
      auto get = [&](const char* k, std::string& dst) {
        if (p.contains(k)) dst = resolve(p[k].get<std::string>(), base_dir);
      };
      get("dataset", c.paths.dataset);
      get("val_dataset", c.paths.val_dataset);
      get("vocabulary", c.paths.vocabulary);
      get("init_checkpoint", c.paths.init_checkpoint);
      get("embedding_table", c.paths.embedding_table);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return run_config_from_json(ss.str(), path.parent_path());
}

}  // namespace yoloe
