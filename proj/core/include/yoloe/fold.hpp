#pragma once

#include <string>
#include <vector>

#include "yoloe/aligner.hpp"
#include "yoloe/model.hpp"
#include "yoloe/prompts.hpp"

namespace yoloe {

enum class FoldMode { kStacked, kFused };

const char* fold_mode_name(FoldMode mode);
FoldMode parse_fold_mode(const std::string& s);

/// Text prompts with the aligner baked in.
///
/// Stacked: K' = normalize(P + f(P)) (C x D) applied as a 1x1 conv to the
/// unit embedding field.
///
/// Fused: per level, K'_l = K' K_l (C x hidden) applied to the embedding
/// head's pre-projection features h, divided by ||K_l h|| computed as
/// sqrt(h^T G_l h) with G_l = K_l^T K_l. Exact because the projection K_l is
/// linear and bias-free.
class FoldedClassifier {
 public:
  FoldedClassifier() = default;
  FoldedClassifier(FoldMode mode, Tensor prompt_kernel, std::vector<std::string> labels, const Model& model);

  FoldMode mode() const { return mode_; }
  const Tensor& prompt_kernel() const { return kprime_; }
  const std::vector<std::string>& labels() const { return labels_; }
  std::int64_t size() const { return kprime_.defined() ? kprime_.dim(0) : 0; }

  /// N x C logits tau * cos(o, p'). Uses the embedding field (stacked) or the
  /// pre-projection features (fused) of `fwd`. Not differentiable.
  Tensor scores(const ForwardResult& fwd, const Model& model) const;
  /// Like scores() but starting from the pre-projection features, so the
  /// stacked path also pays for the projection and normalisation.
  Tensor scores_from_hidden(const std::vector<Tensor>& embed_hidden, const Model& model) const;

 private:
  FoldMode mode_ = FoldMode::kStacked;
  Tensor kprime_;                       // C x D
  std::vector<std::string> labels_;
  std::vector<Tensor> fused_;           // per level C x hidden
  std::vector<std::vector<real>> gram_; // per level packed upper triangle of 2G - diag(G)
};

/// Folds the aligner into a classifier for a fixed prompt set. Fused mode on a
/// model whose embedding projection is followed by a nonlinearity throws
/// ConfigError.
FoldedClassifier reprta_fold(const PromptSet& prompts, const AuxAligner& aux, const Model& model, FoldMode mode);

/// Tensors "fold/K_prime" (C x D), "fold/labels" (NUL-separated UTF-8 bytes
/// stored one per float) and "fold/mode" (0 stacked, 1 fused).
std::vector<NamedTensor> fold_tensors(const FoldedClassifier& fold);
FoldedClassifier fold_from_tensors(const std::vector<NamedTensor>& tensors, const Model& model);

Tensor encode_labels(const std::vector<std::string>& labels);
std::vector<std::string> decode_labels(const Tensor& t);

}  // namespace yoloe
