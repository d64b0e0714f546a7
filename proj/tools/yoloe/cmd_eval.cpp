#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include <json.hpp>

#include "commands.hpp"
#include "yoloe/metrics.hpp"
#include "yoloe/pipeline.hpp"
#include "yoloe/records.hpp"
#include "yoloe/verify.hpp"

namespace yoloe::cli {

using nlohmann::json;

namespace {

json delta_json(double d) {
  if (std::isinf(d)) return d > 0 ? "+inf" : "-inf";
  return d;
}

json map_json(const MapResult& r) {
  return {{"map50", r.map50}, {"map50_95", r.map50_95}, {"categories", r.categories()}};
}

struct ValidateOptions {
  std::string ckpt, dataset, mode = "text", names, vocab, delta, reference_dataset, embedding_table, out;
  int cues_per_class = 16;
  float threshold = 0.001f;
  double min_map50 = -1;
};

int run_validate(const ValidateOptions& o) {
  const LoadedModel m = load_model(o.ckpt);
  DatasetSpec spec;
  const auto scenes = load_dataset(o.dataset, &spec);
  if (scenes.empty()) throw UsageError("dataset " + o.dataset + " has no scenes");
  const auto& cfg = m.model.config();
  if (scenes.front().image.dim(1) != cfg.input_height || scenes.front().image.dim(2) != cfg.input_width) {
    throw DimensionError("dataset images do not match the model input size");
  }
  InferOptions opts;
  opts.score_threshold = o.threshold;
  const std::vector<std::string> names = o.names.empty() ? spec.categories() : read_names_file(o.names);

  json report{{"mode", o.mode}, {"images", scenes.size()}};
  std::vector<std::vector<Detection>> dets;
  if (o.mode == "text") {
    if (auto fold = stored_fold(m, names)) {
      dets = detect_text(m.model, scenes, *fold, opts);
    } else if (m.aux) {
      const auto prompts = text_prompts(cfg, names, o.embedding_table);
      dets = detect_text(m.model, scenes, reprta_fold(prompts, *m.aux, m.model, FoldMode::kFused), opts);
    } else {
      dets = detect_with_prompts(m.model, scenes, text_prompts(cfg, names, o.embedding_table), opts);
    }
  } else if (o.mode == "visual") {
    const auto ref = o.reference_dataset.empty() ? scenes : load_dataset(o.reference_dataset);
    dets = detect_with_prompts(m.model, scenes, reference_visual_prompts(m.model, ref, names, o.cues_per_class), opts);
  } else {
    if (o.vocab.empty()) throw UsageError("--mode promptfree needs --vocab");
    const Vocabulary vocab = load_vocabulary(m, o.vocab, o.embedding_table);
    const double delta = resolve_delta(o.delta, m.checkpoint);
    LrpcReport lrpc;
    dets = detect_prompt_free(m.model, scenes, vocab, delta, opts, &lrpc);
    report["delta"] = delta_json(delta);
    report["lrpc"] = {{"anchors_total", lrpc.anchors_total},
                      {"anchors_kept", lrpc.anchors_kept},
                      {"vocabulary_size", lrpc.vocabulary_size},
                      {"savings_ratio", lrpc.savings_ratio()}};
  }

  std::vector<std::vector<GroundTruthMask>> gts;
  for (const auto& s : scenes) gts.push_back(scene_ground_truth(s));
  const auto thresholds = coco_iou_thresholds();
  // Only categories the prompts can name are scored.
  const MapResult all = compute_map(dets, gts, thresholds, names);
  report["map50"] = all.map50;
  report["map50_95"] = all.map50_95;
  json per = json::object();
  for (const auto& [c, ap] : all.ap50) per[c] = {{"ap50", ap}, {"ap50_95", all.ap50_95.at(c)}};
  report["per_category"] = per;

  const auto trained = checkpoint_categories(m.checkpoint);
  if (!trained.empty()) {
    std::vector<std::string> seen, unseen;
    for (const auto& [c, ap] : all.ap50) {
      (std::ranges::find(trained, c) != trained.end() ? seen : unseen).push_back(c);
    }
    json splits = json::object();
    if (!seen.empty()) splits["seen"] = map_json(compute_map(dets, gts, thresholds, seen));
    if (!unseen.empty()) splits["unseen"] = map_json(compute_map(dets, gts, thresholds, unseen));
    report["splits"] = splits;
  }

  const auto text = report.dump(2);
  if (o.out.empty()) {
    std::cout << text << '\n';
  } else {
    std::ofstream f(o.out);
    if (!(f << text << '\n')) throw IoError("cannot write " + o.out);
  }
  if (o.min_map50 >= 0 && all.map50 < o.min_map50) {
    std::fprintf(stderr, "validation failed: mAP50 %.4f below %.4f\n", all.map50, o.min_map50);
    return kExitFailed;
  }
  return kExitOk;
}

struct BenchOptions {
  std::string ckpt, vocab, deltas, dataset, embedding_table;
  int images = 20;
  std::uint64_t seed = 0;
  float threshold = 0.25f;
  bool json_out = false;
};

int run_bench_lrpc(const BenchOptions& o) {
  const LoadedModel m = load_model(o.ckpt);
  const Vocabulary vocab = load_vocabulary(m, o.vocab, o.embedding_table);
  const auto deltas = parse_delta_list(o.deltas);
  std::vector<Tensor> images;
  if (!o.dataset.empty()) {
    for (auto& s : load_dataset(o.dataset)) images.push_back(s.image);
  } else {
    DatasetSpec spec;
    spec.count = o.images;
    spec.seed = o.seed;
    spec.height = m.model.config().input_height;
    spec.width = m.model.config().input_width;
    for (auto& s : generate_dataset(spec)) images.push_back(s.image);
  }
  if (static_cast<int>(images.size()) > o.images) images.resize(static_cast<std::size_t>(o.images));
  InferOptions opts;
  opts.score_threshold = o.threshold;

  bool exact = true;
  json rows = json::array();
  if (!o.json_out) {
    std::printf("%10s %10s %10s %10s %10s %12s %10s %10s\n", "delta", "kept", "anchors", "savings", "dets",
                "oracle", "lazy_ms", "brute_ms");
  }
  for (double d : deltas) {
    const auto c = compare_lrpc_with_brute_force(m.model, images, vocab, d, opts);
    exact = exact && c.exact();
    const double n = static_cast<double>(c.images);
    if (o.json_out) {
      rows.push_back({{"delta", delta_json(d)},
                      {"anchors_kept", c.report.anchors_kept},
                      {"anchors_total", c.report.anchors_total},
                      {"vocabulary_size", c.report.vocabulary_size},
                      {"dot_products_full", c.report.dot_products_full},
                      {"dot_products_lazy", c.report.dot_products_lazy},
                      {"savings_ratio", c.report.savings_ratio()},
                      {"detections", c.detections},
                      {"oracle_mismatches", c.mismatches},
                      {"lazy_ms_per_image", 1e3 * c.seconds_lazy / n},
                      {"brute_ms_per_image", 1e3 * c.seconds_brute / n}});
    } else {
      std::printf("%10.4g %10lld %10lld %10.4f %10lld %12s %10.2f %10.2f\n", d,
                  static_cast<long long>(c.report.anchors_kept), static_cast<long long>(c.report.anchors_total),
                  c.report.savings_ratio(), static_cast<long long>(c.detections),
                  c.exact() ? "exact" : (std::to_string(c.mismatches) + " diff").c_str(), 1e3 * c.seconds_lazy / n,
                  1e3 * c.seconds_brute / n);
    }
  }
  if (o.json_out) std::cout << rows.dump(2) << '\n';
  return exact ? kExitOk : kExitFailed;
}

struct CheckOptions {
  std::string suite;
  std::uint64_t seed = 1;
};

int run_check(const CheckOptions& o) {
  std::vector<verify::CheckItem> items;
  auto add = [&](std::vector<verify::CheckItem> more) { items.insert(items.end(), more.begin(), more.end()); };
  if (o.suite == "grads" || o.suite == "all") add(verify::check_grads(20, o.seed));
  if (o.suite == "fold" || o.suite == "all") add(verify::check_fold(100, o.seed));
  if (o.suite == "oracle" || o.suite == "all") add(verify::check_oracle(o.seed));
  for (const auto& c : items) std::printf("%s %s: %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
  return verify::all_passed(items) ? kExitOk : kExitFailed;
}

}  // namespace

void add_validate_command(CLI::App& app, Action& action) {
  auto* sub = app.add_subcommand("validate", "Mask mAP of a checkpoint on a dataset directory");
  auto o = std::make_shared<ValidateOptions>();
  sub->add_option("--ckpt", o->ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  sub->add_option("--dataset", o->dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  sub->add_option("--mode", o->mode, "text | visual | promptfree")
      ->check(CLI::IsMember({"text", "visual", "promptfree"}))
      ->capture_default_str();
  sub->add_option("--names", o->names, "Prompt names (default: the dataset's categories)")
      ->check(CLI::ExistingFile);
  sub->add_option("--vocab", o->vocab, "Vocabulary for --mode promptfree")->check(CLI::ExistingFile);
  sub->add_option("--delta", o->delta, "Objectness threshold (default: the checkpoint's)");
  sub->add_option("--reference-dataset", o->reference_dataset, "Scenes supplying visual cues (default: --dataset)")
      ->check(CLI::ExistingDirectory);
  sub->add_option("--cues-per-class", o->cues_per_class, "Box cues pooled per category")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--threshold", o->threshold, "Score threshold")->capture_default_str();
  sub->add_option("--min-map50", o->min_map50, "Exit 1 when mAP50 is below this");
  sub->add_option("--embedding-table", o->embedding_table, "Checkpoint of text/<name> rows")
      ->check(CLI::ExistingFile);
  sub->add_option("--out", o->out, "Write the JSON report here instead of stdout");
  sub->callback([&action, o] { action = [o] { return run_validate(*o); }; });
}

void add_bench_command(CLI::App& app, Action& action) {
  auto* bench = app.add_subcommand("bench", "Runtime reports");
  bench->require_subcommand(1);
  auto* sub = bench->add_subcommand("lrpc", "Lazy vocabulary matching against brute force per delta");
  auto o = std::make_shared<BenchOptions>();
  sub->add_option("--ckpt", o->ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  sub->add_option("--vocab", o->vocab, "Vocabulary names file")->required()->check(CLI::ExistingFile);
  sub->add_option("--deltas", o->deltas, "Comma-separated deltas (numbers, +inf, -inf)")->required();
  sub->add_option("--dataset", o->dataset, "Images from a dataset directory")->check(CLI::ExistingDirectory);
  sub->add_option("--images", o->images, "Number of images")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--seed", o->seed, "Seed of generated images")->capture_default_str();
  sub->add_option("--threshold", o->threshold, "Score threshold")->capture_default_str();
  sub->add_flag("--json", o->json_out, "JSON instead of a table");
  sub->callback([&action, o] { action = [o] { return run_bench_lrpc(*o); }; });
}

void add_check_command(CLI::App& app, Action& action) {
  auto* sub = app.add_subcommand("check", "Property suites; exit 0 iff all pass");
  auto o = std::make_shared<CheckOptions>();
  sub->add_option("suite", o->suite, "grads | fold | oracle | all")
      ->required()
      ->check(CLI::IsMember({"grads", "fold", "oracle", "all"}));
  sub->add_option("--seed", o->seed, "Seed of the random instances")->capture_default_str();
  sub->callback([&action, o] { action = [o] { return run_check(*o); }; });
}

}  // namespace yoloe::cli
