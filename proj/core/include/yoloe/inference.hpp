#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "yoloe/fold.hpp"
#include "yoloe/mask.hpp"
#include "yoloe/model.hpp"
#include "yoloe/prompts.hpp"
#include "yoloe/savpe.hpp"

namespace yoloe {

/// Raw logits tau * O P^T (N x C); probabilities are their sigmoid.
struct SimilarityMatrix {
  Tensor scores;
  Tensor probabilities() const;
};

/// Differentiable when the inputs are.
SimilarityMatrix classify(const Tensor& embeddings, const Tensor& prompts, const Tensor& tau);
SimilarityMatrix classify(const Tensor& embeddings, const PromptSet& prompts, const Tensor& tau);

struct Candidate {
  std::int64_t anchor_id = 0;
  std::int64_t label_index = 0;
  float score = 0;
  std::array<float, 4> box{};
};

struct Detection {
  std::array<float, 4> box{};
  std::string label;
  std::int64_t label_index = 0;
  float score = 0;
  BinaryMask mask;
  std::int64_t anchor_id = 0;
};

struct InferOptions {
  float score_threshold = 0.25f;
  bool multi_label = false;  // emit every prompt above threshold, not only the best
};

/// Per anchor the best prompt (or every prompt in multi-label mode) whose
/// probability reaches the threshold. No suppression of any kind. Ordered by
/// descending score, then anchor id, then label index.
std::vector<Candidate> nms_free_decode(const Tensor& boxes, const SimilarityMatrix& sim, float score_threshold,
                                       bool multi_label = false);

/// Pre-sigmoid mask at prototype resolution: sum_k coeffs_k proto_k.
std::vector<real> mask_logits(const Tensor& prototypes, std::span<const real> coeffs);

/// sigmoid(mask_logits) upsampled (nearest) to height x width, kept where
/// strictly above 0.5 and inside the box padded by kMaskBoxPad pixels.
BinaryMask assemble_mask(const Tensor& prototypes, std::span<const real> coeffs, const std::array<float, 4>& box,
                         int height, int width);
inline constexpr float kMaskBoxPad = 2.0f;

/// Candidates to detections: labels and assembled masks.
std::vector<Detection> finalize_detections(const std::vector<Candidate>& candidates, const HeadOutputs& head,
                                           const std::vector<std::string>& labels, const ModelConfig& config);

/// Text-prompted detection with unfolded prompts (raw, or already refined).
std::vector<Detection> infer_text(const Model& model, const Tensor& image, const PromptSet& prompts,
                                  const InferOptions& options = {});
/// Text-prompted detection through a folded classifier.
std::vector<Detection> infer_text(const Model& model, const Tensor& image, const FoldedClassifier& fold,
                                  const InferOptions& options = {});
/// Prompts refined by the aligner, for the unfolded path.
PromptSet refine_prompts(const PromptSet& prompts, const AuxAligner& aux);

/// Visual-prompted detection. The cues refer to `reference`, which may be the query image.
std::vector<Detection> infer_visual(const Model& model, const Tensor& image, const Tensor& reference,
                                    const std::vector<VisualCue>& cues,
                                    const std::map<int, std::string>& class_names = {},
                                    const InferOptions& options = {});
/// Detection with precomputed prompts (e.g. pooled visual prompts).
std::vector<Detection> infer_with_prompts(const Model& model, const ForwardResult& fwd, const PromptSet& prompts,
                                          const InferOptions& options = {});

struct LrpcReport {
  std::int64_t anchors_total = 0;
  std::int64_t anchors_kept = 0;
  std::int64_t vocabulary_size = 0;
  std::int64_t dot_products_full = 0;  // N * C
  std::int64_t dot_products_lazy = 0;  // kept * C + N
  double savings_ratio() const;
  LrpcReport& operator+=(const LrpcReport& o);
};

/// Prompt-free detection: objectness pass o_ext . P_s over all anchors, vocabulary
/// matching only for anchors with o_ext . P_s > delta.
std::pair<std::vector<Detection>, LrpcReport> infer_prompt_free(const Model& model, const Tensor& image,
                                                                const Vocabulary& vocab, double delta,
                                                                const InferOptions& options = {});
std::pair<std::vector<Detection>, LrpcReport> infer_prompt_free(const Model& model, const ForwardResult& fwd,
                                                                const Vocabulary& vocab, double delta,
                                                                const InferOptions& options = {});

/// Every anchor against every vocabulary row.
std::vector<Detection> brute_force_vocab_match(const Model& model, const Tensor& image, const Vocabulary& vocab,
                                               const InferOptions& options = {});
std::vector<Detection> brute_force_vocab_match(const Model& model, const ForwardResult& fwd, const Vocabulary& vocab,
                                               const InferOptions& options = {});

/// Objectness logits o_ext . P_s of all anchors.
std::vector<real> objectness_scores(const HeadOutputs& head, const Vocabulary& vocab);

}  // namespace yoloe
