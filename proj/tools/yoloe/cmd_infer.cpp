#include <fstream>
#include <iostream>

#include <json.hpp>

#include "commands.hpp"
#include "yoloe/image_io.hpp"
#include "yoloe/pipeline.hpp"
#include "yoloe/records.hpp"

namespace yoloe::cli {

using nlohmann::json;

namespace {

struct FoldOptions {
  std::string ckpt, names, mode = "fused", out, embedding_table;
};

int run_fold(const FoldOptions& o) {
  const LoadedModel m = load_model(o.ckpt);
  if (!m.aux) throw LookupError("checkpoint " + o.ckpt + " has no aligner tensors (aux.*) to fold");
  const auto names = read_names_file(o.names);
  const PromptSet prompts = text_prompts(m.model.config(), names, o.embedding_table);
  const FoldedClassifier fold = reprta_fold(prompts, *m.aux, m.model, parse_fold_mode(o.mode));

  Checkpoint out = model_checkpoint(m.model, "fold");
  for (const auto& [name, t] : m.aux->named_parameters()) out.tensors.push_back({name, t});
  for (auto& t : fold_tensors(fold)) out.tensors.push_back(std::move(t));
  out.metadata.seed = m.checkpoint.metadata.seed;
  out.metadata.extra = m.checkpoint.metadata.extra;
  out.metadata.extra.erase("step");
  out.metadata.extra.erase("train_config");
  save_checkpoint_atomic(o.out, out);
  std::cout << json{{"out", o.out}, {"mode", fold_mode_name(fold.mode())}, {"prompts", fold.size()}}.dump() << '\n';
  return kExitOk;
}

struct InferOptionsCli {
  std::string ckpt, text, visual, vocab, delta, reference, out, overlay, embedding_table;
  std::vector<std::string> images;
  bool prompt_free = false;
  float threshold = 0.25f;
  bool multi_label = false;
};

int run_infer(const InferOptionsCli& o) {
  const LoadedModel m = load_model(o.ckpt);
  const ModelConfig& cfg = m.model.config();
  if (!o.overlay.empty() && o.images.size() != 1) throw UsageError("--overlay needs exactly one --image");
  if (o.prompt_free && o.vocab.empty()) throw UsageError("--prompt-free needs --vocab");
  InferOptions opts;
  opts.score_threshold = o.threshold;
  opts.multi_label = o.multi_label;

  std::optional<FoldedClassifier> fold;
  PromptSet prompts;
  Vocabulary vocab;
  std::vector<VisualCue> cues;
  std::map<int, std::string> class_names;
  double delta = 0;
  if (!o.text.empty()) {
    const auto names = read_names_file(o.text);
    fold = stored_fold(m, names);
    if (!fold) prompts = refined_text_prompts(m, names, o.embedding_table);
  } else if (!o.visual.empty()) {
    cues = read_visual_cues(o.visual, cfg, &class_names);
  } else {
    vocab = load_vocabulary(m, o.vocab, o.embedding_table);
    delta = resolve_delta(o.delta, m.checkpoint);
  }
  std::optional<Tensor> reference;
  if (!o.reference.empty()) reference = read_ppm(o.reference);

  std::ofstream out(o.out, std::ios::binary);
  if (!out) throw IoError("cannot write " + o.out);
  std::size_t total = 0;
  for (const auto& path : o.images) {
    const Tensor image = read_ppm(path);
    if (image.dim(1) != cfg.input_height || image.dim(2) != cfg.input_width) {
      throw DimensionError(path + " is " + std::to_string(image.dim(1)) + "x" + std::to_string(image.dim(2)) +
                           ", model input is " + std::to_string(cfg.input_height) + "x" +
                           std::to_string(cfg.input_width));
    }
    std::vector<Detection> dets;
    if (!o.text.empty()) {
      dets = fold ? infer_text(m.model, image, *fold, opts) : infer_text(m.model, image, prompts, opts);
    } else if (!o.visual.empty()) {
      dets = infer_visual(m.model, image, reference.value_or(image), cues, class_names, opts);
    } else {
      dets = infer_prompt_free(m.model, image, vocab, delta, opts).first;
    }
    write_jsonl(out, path, dets);
    total += dets.size();
    if (!o.overlay.empty()) {
      std::vector<OverlayItem> items;
      for (const auto& d : dets) items.push_back({&d.mask, d.label});
      write_ppm(o.overlay, overlay_masks(image, items));
    }
  }
  out.close();
  if (!out) throw IoError("failed writing " + o.out);
  std::cerr << total << " detections in " << o.images.size() << " image(s)\n";
  return kExitOk;
}

}  // namespace

void add_fold_command(CLI::App& app, Action& action) {
  auto* sub = app.add_subcommand("fold", "Fold the aligner into a classifier for fixed text prompts");
  auto o = std::make_shared<FoldOptions>();
  sub->add_option("--ckpt", o->ckpt, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  sub->add_option("--names", o->names, "Prompt names file")->required()->check(CLI::ExistingFile);
  sub->add_option("--mode", o->mode, "stacked | fused")
      ->check(CLI::IsMember({"stacked", "fused"}))
      ->capture_default_str();
  sub->add_option("--out", o->out, "Folded checkpoint")->required();
  sub->add_option("--embedding-table", o->embedding_table, "Checkpoint of text/<name> rows")
      ->check(CLI::ExistingFile);
  sub->callback([&action, o] { action = [o] { return run_fold(*o); }; });
}

void add_infer_command(CLI::App& app, Action& action) {
  auto* sub = app.add_subcommand("infer", "Detect and segment objects in PPM images");
  auto o = std::make_shared<InferOptionsCli>();
  sub->add_option("--ckpt", o->ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  auto* text = sub->add_option("--text", o->text, "Text prompt names file")->check(CLI::ExistingFile);
  auto* visual = sub->add_option("--visual", o->visual, "Visual cues JSON file")->check(CLI::ExistingFile);
  auto* pf = sub->add_flag("--prompt-free", o->prompt_free, "Name objects from a built-in vocabulary");
  text->excludes(visual)->excludes(pf);
  visual->excludes(pf);
  sub->add_option("--vocab", o->vocab, "Vocabulary names file")->check(CLI::ExistingFile)->needs(pf);
  sub->add_option("--delta", o->delta, "Objectness threshold (number, +inf, -inf)")->needs(pf);
  sub->add_option("--reference", o->reference, "Image the visual cues refer to (default: the query)")
      ->check(CLI::ExistingFile)
      ->needs(visual);
  sub->add_option("--image", o->images, "Input PPM image(s)")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", o->out, "Output JSONL")->required();
  sub->add_option("--overlay", o->overlay, "Write an overlay PPM");
  sub->add_option("--threshold", o->threshold, "Score threshold")->capture_default_str();
  sub->add_flag("--multi-label", o->multi_label, "Emit every label above threshold per anchor");
  sub->add_option("--embedding-table", o->embedding_table, "Checkpoint of text/<name> rows")
      ->check(CLI::ExistingFile);
  sub->callback([&action, o] {
    if (o->text.empty() && o->visual.empty() && !o->prompt_free) {
      throw CLI::RequiredError("one of --text, --visual, --prompt-free");
    }
    action = [o] { return run_infer(*o); };
  });
}

}  // namespace yoloe::cli
