#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "commands.hpp"
#include "yoloe/pipeline.hpp"

namespace yoloe::cli {

using nlohmann::json;

namespace {

std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f) throw IoError("cannot open " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct DatasetOptions {
  std::string spec, out, split = "train";
};

int run_dataset_gen(const DatasetOptions& o) {
  const auto text = read_text(o.spec);
  json parsed;
  try {
    parsed = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(o.spec + ": " + e.what());
  }
  DatasetSpec spec;
  if (parsed.is_object() && parsed.contains("model")) {
    const RunConfig rc = run_config_from_json(text, std::filesystem::path(o.spec).parent_path());
    spec = o.split == "train" ? rc.dataset : rc.validation;
  } else {
    spec = dataset_spec_from_json(text);
  }
  const auto scenes = generate_dataset(spec);
  save_dataset(o.out, spec, scenes);
  std::size_t instances = 0;
  for (const auto& s : scenes) instances += s.instances.size();
  std::cout << json{{"out", o.out}, {"scenes", scenes.size()}, {"instances", instances},
                    {"categories", spec.categories()}}
                   .dump()
            << '\n';
  return kExitOk;
}

struct TrainOptions {
  std::string config, stage, out, init, resume;
  bool quiet = false;
};

int run_train(const TrainOptions& o) {
  const RunConfig config = load_run_config(o.config);
  const Stage stage = parse_stage(o.stage);

  std::optional<Checkpoint> resume;
  std::optional<Checkpoint> init;
  if (!o.resume.empty()) {
    resume = load_checkpoint(o.resume);
  } else {
    std::string init_path = o.init;
    if (init_path.empty() && stage != Stage::kText) init_path = config.paths.init_checkpoint;
    if (!init_path.empty()) {
      init = load_checkpoint(init_path);
    } else if (stage != Stage::kText) {
      throw UsageError(std::string("the ") + stage_name(stage) +
                       " stage starts from trained weights: pass --init or set paths.init_checkpoint");
    }
  }
  const Checkpoint* start = resume ? &*resume : init ? &*init : nullptr;
  if (start) {
    if (!start->config) throw FormatError("checkpoint has no model config");
    if (model_config_to_json(*start->config) != model_config_to_json(config.model)) {
      throw ConfigError("checkpoint model config differs from the run config");
    }
  }
  Model model(config.model);
  AuxAligner aux = initial_aligner(config.model);
  if (start) {
    load_model_parameters(model, *start);
    if (has_aligner(*start)) aux = aligner_from_checkpoint(*start);
  }

  const auto scenes = training_scenes(config);
  StageOptions so;
  so.resume = resume ? &*resume : nullptr;
  so.hooks.on_epoch = [&](const EpochLog& e) {
    if (o.quiet) return;
    std::fprintf(stderr, "[%s] epoch %d loss %.5f (cls %.5f box %.5f mask %.5f) violations %d %.1fs\n",
                 stage_name(stage), e.epoch + 1, e.total, e.cls, e.box, e.mask, e.injectivity_violations,
                 e.seconds);
  };
  so.on_checkpoint = [&](const Checkpoint& c) { save_checkpoint_atomic(o.out, c); };
  const StageRun run = run_stage(config, stage, model, aux, scenes, so);
  save_checkpoint_atomic(o.out, run.checkpoint);

  json summary{{"stage", stage_name(stage)},
               {"out", o.out},
               {"steps", run.result.steps},
               {"injectivity_violations", run.result.injectivity_violations},
               {"fallbacks", run.result.fallbacks}};
  json epochs = json::array();
  for (const auto& e : run.result.epochs) {
    epochs.push_back({{"epoch", e.epoch}, {"total", e.total}, {"cls", e.cls}, {"box", e.box}, {"mask", e.mask}});
  }
  summary["epochs"] = epochs;
  if (run.delta) {
    summary["delta"] = run.delta->delta;
    summary["delta_recall"] = run.delta->recall;
  }
  std::cout << summary.dump() << '\n';
  return kExitOk;
}

}  // namespace

void add_dataset_command(CLI::App& app, Action& action) {
  auto* dataset = app.add_subcommand("dataset", "Synthetic scene datasets");
  dataset->require_subcommand(1);
  auto* gen = dataset->add_subcommand("gen", "Generate a dataset directory");
  auto o = std::make_shared<DatasetOptions>();
  gen->add_option("--spec", o->spec, "Dataset spec JSON, or a run config")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", o->out, "Output directory")->required();
  gen->add_option("--split", o->split, "Split of a run config to generate")
      ->check(CLI::IsMember({"train", "val"}))
      ->capture_default_str();
  gen->callback([&action, o] { action = [o] { return run_dataset_gen(*o); }; });
}

void add_train_command(CLI::App& app, Action& action) {
  auto* sub = app.add_subcommand("train", "Train one stage");
  auto o = std::make_shared<TrainOptions>();
  sub->add_option("--config", o->config, "Run config JSON")->required()->check(CLI::ExistingFile);
  sub->add_option("--stage", o->stage, "text | savpe | promptfree")
      ->required()
      ->check(CLI::IsMember({"text", "savpe", "promptfree"}));
  sub->add_option("--out", o->out, "Checkpoint written after every epoch")->required();
  auto* init = sub->add_option("--init", o->init, "Starting weights (default paths.init_checkpoint)")
                   ->check(CLI::ExistingFile);
  sub->add_option("--resume", o->resume, "Continue from a training-state checkpoint")
      ->check(CLI::ExistingFile)
      ->excludes(init);
  sub->add_flag("--quiet", o->quiet, "No per-epoch log");
  sub->callback([&action, o] { action = [o] { return run_train(*o); }; });
}

}  // namespace yoloe::cli
