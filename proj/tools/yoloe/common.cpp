#include "commands.hpp"

#include "yoloe/pipeline.hpp"
#include "yoloe/records.hpp"

namespace yoloe::cli {

LoadedModel load_model(const std::filesystem::path& ckpt) {
  Checkpoint c = load_checkpoint(ckpt);
  Model model = model_from_checkpoint(c);
  std::optional<AuxAligner> aux;
  if (has_aligner(c)) aux = aligner_from_checkpoint(c);
  return {std::move(c), std::move(model), std::move(aux)};
}

PromptSet refined_text_prompts(const LoadedModel& m, const std::vector<std::string>& names,
                               const std::string& embedding_table) {
  PromptSet p = text_prompts(m.model.config(), names, embedding_table);
  return m.aux ? refine_prompts(p, *m.aux) : p;
}

std::optional<FoldedClassifier> stored_fold(const LoadedModel& m, const std::vector<std::string>& names) {
  if (!m.checkpoint.find("fold/K_prime")) return std::nullopt;
  FoldedClassifier fold = fold_from_tensors(m.checkpoint.tensors, m.model);
  if (fold.labels() != names) return std::nullopt;
  return fold;
}

Vocabulary load_vocabulary(const LoadedModel& m, const std::filesystem::path& names_file,
                           const std::string& embedding_table) {
  const TextEncoder encoder(m.model.config().embed_dim);
  std::optional<EmbeddingTable> table;
  if (!embedding_table.empty()) table = EmbeddingTable::load(embedding_table);
  Vocabulary v = build_vocabulary(names_file, encoder, table ? &*table : nullptr);
  if (m.aux) {
    const auto kind = v.prompts.kind;
    v.prompts = refine_prompts(v.prompts, *m.aux);
    v.prompts.kind = kind;
  }
  return v;
}

double resolve_delta(const std::string& flag, const Checkpoint& ckpt) {
  if (!flag.empty()) return parse_delta(flag);
  return checkpoint_delta(ckpt).value_or(0.0);
}

}  // namespace yoloe::cli
