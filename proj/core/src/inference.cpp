#include "yoloe/inference.hpp"

#include <algorithm>
#include <cmath>

#include "yoloe/autograd.hpp"
#include "yoloe/ops.hpp"

namespace yoloe {

Tensor SimilarityMatrix::probabilities() const { return sigmoid(scores); }

SimilarityMatrix classify(const Tensor& embeddings, const Tensor& prompts, const Tensor& tau) {
  if (embeddings.rank() != 2 || prompts.rank() != 2 || embeddings.dim(1) != prompts.dim(1)) {
    throw DimensionError("classify: embeddings " + shape_str(embeddings.shape()) + " vs prompts " +
                         shape_str(prompts.shape()));
  }
  return {scale(matmul(embeddings, transpose(prompts)), tau)};
}

SimilarityMatrix classify(const Tensor& embeddings, const PromptSet& prompts, const Tensor& tau) {
  return classify(embeddings, prompts.embeddings, tau);
}

namespace {

real sigmoid_of(real x) {
  if (x >= 0) return real(1) / (real(1) + std::exp(-x));
  const real e = std::exp(x);
  return e / (real(1) + e);
}

void sort_candidates(std::vector<Candidate>& out) {
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.anchor_id != b.anchor_id) return a.anchor_id < b.anchor_id;
    return a.label_index < b.label_index;
  });
}

std::array<float, 4> box_row(std::span<const real> boxes, std::int64_t n) {
  const auto i = static_cast<std::size_t>(n * 4);
  return {boxes[i], boxes[i + 1], boxes[i + 2], boxes[i + 3]};
}

// Appends the candidates of one anchor given its row of raw logits.
void decode_row(std::int64_t anchor, std::span<const real> logits, std::span<const real> boxes, float threshold,
                bool multi_label, std::vector<Candidate>& out) {
  if (multi_label) {
    for (std::size_t c = 0; c < logits.size(); ++c) {
      const real p = sigmoid_of(logits[c]);
      if (p >= threshold) out.push_back({anchor, static_cast<std::int64_t>(c), p, box_row(boxes, anchor)});
    }
    return;
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < logits.size(); ++c) {
    if (logits[c] > logits[best]) best = c;
  }
  const real p = sigmoid_of(logits[best]);
  if (p >= threshold) out.push_back({anchor, static_cast<std::int64_t>(best), p, box_row(boxes, anchor)});
}

// tau * o . v_c for one anchor; the same loop serves the lazy and the
// exhaustive vocabulary paths so their scores agree bit for bit.
void vocab_row(std::span<const real> o, const Tensor& vocab, real tau, std::vector<real>& out) {
  const auto C = vocab.dim(0), D = vocab.dim(1);
  auto v = vocab.data();
  out.resize(static_cast<std::size_t>(C));
  for (std::int64_t c = 0; c < C; ++c) {
    const real* row = v.data() + c * D;
    real acc = 0;
    for (std::int64_t k = 0; k < D; ++k) acc += o[static_cast<std::size_t>(k)] * row[k];
    out[static_cast<std::size_t>(c)] = tau * acc;
  }
}

Tensor decoded_boxes(const Model& model, const HeadOutputs& head) {
  return decode_boxes(head.box_deltas, model.anchors(), model.config().input_height, model.config().input_width);
}

}  // namespace

std::vector<Candidate> nms_free_decode(const Tensor& boxes, const SimilarityMatrix& sim, float score_threshold,
                                       bool multi_label) {
  const auto N = sim.scores.dim(0), C = sim.scores.dim(1);
  if (boxes.dim(0) != N) throw DimensionError("nms_free_decode: boxes and scores disagree on N");
  std::vector<Candidate> out;
  auto s = sim.scores.data();
  auto b = boxes.data();
  for (std::int64_t n = 0; n < N; ++n) {
    decode_row(n, s.subspan(static_cast<std::size_t>(n * C), static_cast<std::size_t>(C)), b, score_threshold,
               multi_label, out);
  }
  sort_candidates(out);
  return out;
}

std::vector<real> mask_logits(const Tensor& prototypes, std::span<const real> coeffs) {
  const auto K = prototypes.dim(0), hw = prototypes.dim(1) * prototypes.dim(2);
  if (static_cast<std::int64_t>(coeffs.size()) != K) {
    throw DimensionError("mask_logits: " + std::to_string(coeffs.size()) + " coefficients for " + std::to_string(K) +
                         " prototypes");
  }
  auto p = prototypes.data();
  std::vector<real> out(static_cast<std::size_t>(hw), real(0));
  for (std::int64_t k = 0; k < K; ++k) {
    const real c = coeffs[static_cast<std::size_t>(k)];
    const real* row = p.data() + k * hw;
    for (std::int64_t i = 0; i < hw; ++i) out[static_cast<std::size_t>(i)] += c * row[i];
  }
  return out;
}

BinaryMask assemble_mask(const Tensor& prototypes, std::span<const real> coeffs, const std::array<float, 4>& box,
                         int height, int width) {
  const auto hm = static_cast<int>(prototypes.dim(1)), wm = static_cast<int>(prototypes.dim(2));
  if (height % hm != 0 || width % wm != 0) throw DimensionError("assemble_mask: image size is not a multiple of the prototype grid");
  const int fy = height / hm, fx = width / wm;
  const auto logits = mask_logits(prototypes, coeffs);
  BinaryMask m(height, width);
  for (int y = 0; y < height; ++y) {
    const float cy = static_cast<float>(y) + 0.5f;
    if (cy < box[1] - kMaskBoxPad || cy > box[3] + kMaskBoxPad) continue;
    for (int x = 0; x < width; ++x) {
      const float cx = static_cast<float>(x) + 0.5f;
      if (cx < box[0] - kMaskBoxPad || cx > box[2] + kMaskBoxPad) continue;
      const real v = logits[static_cast<std::size_t>((y / fy) * wm + x / fx)];
      m.at(y, x) = sigmoid_of(v) > real(0.5) ? 1 : 0;
    }
  }
  return m;
}

std::vector<Detection> finalize_detections(const std::vector<Candidate>& candidates, const HeadOutputs& head,
                                           const std::vector<std::string>& labels, const ModelConfig& config) {
  std::vector<Detection> out;
  out.reserve(candidates.size());
  const auto K = head.mask_coeffs.dim(1);
  auto coeffs = head.mask_coeffs.data();
  for (const auto& c : candidates) {
    Detection d;
    d.box = c.box;
    d.label_index = c.label_index;
    d.label = labels.at(static_cast<std::size_t>(c.label_index));
    d.score = c.score;
    d.anchor_id = c.anchor_id;
    d.mask = assemble_mask(head.prototypes, coeffs.subspan(static_cast<std::size_t>(c.anchor_id * K), static_cast<std::size_t>(K)),
                           c.box, config.input_height, config.input_width);
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<Detection> infer_with_prompts(const Model& model, const ForwardResult& fwd, const PromptSet& prompts,
                                          const InferOptions& options) {
  NoGradGuard no_grad;
  const auto sim = classify(fwd.head.embeddings.detach(), prompts.embeddings.detach(), model.temperature().detach());
  const auto cands = nms_free_decode(decoded_boxes(model, fwd.head), sim, options.score_threshold, options.multi_label);
  return finalize_detections(cands, fwd.head, prompts.labels, model.config());
}

std::vector<Detection> infer_text(const Model& model, const Tensor& image, const PromptSet& prompts,
                                  const InferOptions& options) {
  NoGradGuard no_grad;
  return infer_with_prompts(model, model.forward(image), prompts, options);
}

std::vector<Detection> infer_text(const Model& model, const Tensor& image, const FoldedClassifier& fold,
                                  const InferOptions& options) {
  NoGradGuard no_grad;
  const auto fwd = model.forward(image);
  SimilarityMatrix sim{fold.scores(fwd, model)};
  const auto cands = nms_free_decode(decoded_boxes(model, fwd.head), sim, options.score_threshold, options.multi_label);
  return finalize_detections(cands, fwd.head, fold.labels(), model.config());
}

PromptSet refine_prompts(const PromptSet& prompts, const AuxAligner& aux) {
  NoGradGuard no_grad;
  PromptSet p = prompts;
  p.embeddings = reprta_refine(prompts.embeddings.detach(), aux);
  return p;
}

std::vector<Detection> infer_visual(const Model& model, const Tensor& image, const Tensor& reference,
                                    const std::vector<VisualCue>& cues, const std::map<int, std::string>& class_names,
                                    const InferOptions& options) {
  NoGradGuard no_grad;
  if (cues.empty()) throw UsageError("infer_visual: no visual cues given");
  const auto query = model.forward(image);
  const bool same = reference.impl() == image.impl() || bit_equal(reference, image);
  const PromptSet prompts =
      same ? savpe_encode(model, query.features, cues, class_names)
           : savpe_encode(model, model.forward(reference).features, cues, class_names);
  return infer_with_prompts(model, query, prompts, options);
}

// ---------------------------------------------------------------------------

double LrpcReport::savings_ratio() const {
  return dot_products_full == 0 ? 0.0
                                : 1.0 - static_cast<double>(dot_products_lazy) / static_cast<double>(dot_products_full);
}

LrpcReport& LrpcReport::operator+=(const LrpcReport& o) {
  anchors_total += o.anchors_total;
  anchors_kept += o.anchors_kept;
  vocabulary_size = std::max(vocabulary_size, o.vocabulary_size);
  dot_products_full += o.dot_products_full;
  dot_products_lazy += o.dot_products_lazy;
  return *this;
}

std::vector<real> objectness_scores(const HeadOutputs& head, const Vocabulary& vocab) {
  NoGradGuard no_grad;
  const Tensor ext = extended_embeddings(head.embeddings.detach(), head.objectness.detach());
  if (ext.dim(1) != vocab.objectness.dim()) {
    throw DimensionError("objectness prompt has dimension " + std::to_string(vocab.objectness.dim()) +
                         ", extended embeddings " + std::to_string(ext.dim(1)));
  }
  const Tensor s = matmul(ext, transpose(vocab.objectness.embeddings));
  auto d = s.data();
  return {d.begin(), d.end()};
}

namespace {

std::vector<Detection> vocab_detections(const Model& model, const ForwardResult& fwd, const Vocabulary& vocab,
                                        const std::vector<std::int64_t>& anchors, const InferOptions& options) {
  const auto D = fwd.head.embeddings.dim(1);
  if (vocab.prompts.dim() != D) throw DimensionError("vocabulary dimension differs from the model's embeddings");
  const real tau = model.temperature().item();
  const Tensor boxes = decoded_boxes(model, fwd.head);
  auto o = fwd.head.embeddings.data();
  auto b = boxes.data();
  std::vector<Candidate> cands;
  std::vector<real> row;
  for (auto n : anchors) {
    vocab_row(o.subspan(static_cast<std::size_t>(n * D), static_cast<std::size_t>(D)), vocab.prompts.embeddings, tau, row);
    decode_row(n, row, b, options.score_threshold, options.multi_label, cands);
  }
  sort_candidates(cands);
  return finalize_detections(cands, fwd.head, vocab.prompts.labels, model.config());
}

}  // namespace

std::pair<std::vector<Detection>, LrpcReport> infer_prompt_free(const Model& model, const ForwardResult& fwd,
                                                                const Vocabulary& vocab, double delta,
                                                                const InferOptions& options) {
  NoGradGuard no_grad;
  const auto obj = objectness_scores(fwd.head, vocab);
  std::vector<std::int64_t> kept;
  for (std::size_t n = 0; n < obj.size(); ++n) {
    if (static_cast<double>(obj[n]) > delta) kept.push_back(static_cast<std::int64_t>(n));
  }
  LrpcReport r;
  r.anchors_total = static_cast<std::int64_t>(obj.size());
  r.anchors_kept = static_cast<std::int64_t>(kept.size());
  r.vocabulary_size = vocab.prompts.size();
  r.dot_products_full = r.anchors_total * r.vocabulary_size;
  r.dot_products_lazy = r.anchors_kept * r.vocabulary_size + r.anchors_total;
  return {vocab_detections(model, fwd, vocab, kept, options), r};
}

std::pair<std::vector<Detection>, LrpcReport> infer_prompt_free(const Model& model, const Tensor& image,
                                                                const Vocabulary& vocab, double delta,
                                                                const InferOptions& options) {
  NoGradGuard no_grad;
  return infer_prompt_free(model, model.forward(image), vocab, delta, options);
}

std::vector<Detection> brute_force_vocab_match(const Model& model, const ForwardResult& fwd, const Vocabulary& vocab,
                                               const InferOptions& options) {
  NoGradGuard no_grad;
  std::vector<std::int64_t> all(static_cast<std::size_t>(fwd.head.num_anchors()));
  for (std::size_t n = 0; n < all.size(); ++n) all[n] = static_cast<std::int64_t>(n);
  return vocab_detections(model, fwd, vocab, all, options);
}

std::vector<Detection> brute_force_vocab_match(const Model& model, const Tensor& image, const Vocabulary& vocab,
                                               const InferOptions& options) {
  NoGradGuard no_grad;
  return brute_force_vocab_match(model, model.forward(image), vocab, options);
}

}  // namespace yoloe
