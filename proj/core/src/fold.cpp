#include "yoloe/fold.hpp"

#include <cmath>

#include "yoloe/autograd.hpp"
#include "yoloe/flops.hpp"
#include "yoloe/ops.hpp"

namespace yoloe {

const char* fold_mode_name(FoldMode mode) { return mode == FoldMode::kFused ? "fused" : "stacked"; }

FoldMode parse_fold_mode(const std::string& s) {
  if (s == "stacked") return FoldMode::kStacked;
  if (s == "fused") return FoldMode::kFused;
  throw UsageError("unknown fold mode '" + s + "' (expected stacked or fused)");
}

FoldedClassifier::FoldedClassifier(FoldMode mode, Tensor prompt_kernel, std::vector<std::string> labels,
                                   const Model& model)
    : mode_(mode), kprime_(prompt_kernel.detach()), labels_(std::move(labels)) {
  const auto& cfg = model.config();
  if (kprime_.rank() != 2 || kprime_.dim(1) != cfg.embed_dim) {
    throw DimensionError("fold: prompt kernel " + shape_str(kprime_.shape()) + " does not match embedding dim " +
                         std::to_string(cfg.embed_dim));
  }
  if (static_cast<std::int64_t>(labels_.size()) != kprime_.dim(0)) {
    throw DimensionError("fold: label count differs from prompt rows");
  }
  if (mode_ != FoldMode::kFused) return;
  if (cfg.embed_final_activation) {
    throw ConfigError("fold: fused mode needs a linear final embedding layer, but this model applies SiLU after it");
  }
  const auto C = kprime_.dim(0), D = kprime_.dim(1);
  auto kp = kprime_.data();
  for (std::size_t l = 0; l < cfg.strides.size(); ++l) {
    const Tensor& K = model.embed_projection(l).weight;  // D x hidden x 1 x 1
    const auto hid = K.dim(1);
    auto kd = K.data();
    std::vector<real> fused(static_cast<std::size_t>(C * hid));
    for (std::int64_t c = 0; c < C; ++c) {
      for (std::int64_t j = 0; j < hid; ++j) {
        double acc = 0;
        for (std::int64_t d = 0; d < D; ++d) acc += double(kp[static_cast<std::size_t>(c * D + d)]) * kd[static_cast<std::size_t>(d * hid + j)];
        fused[static_cast<std::size_t>(c * hid + j)] = static_cast<real>(acc);
      }
    }
    fused_.push_back(Tensor({C, hid}, std::move(fused)));
    // Upper triangle of G with off-diagonal entries doubled, row by row.
    std::vector<real> packed;
    packed.reserve(static_cast<std::size_t>(hid * (hid + 1) / 2));
    for (std::int64_t i = 0; i < hid; ++i) {
      for (std::int64_t j = i; j < hid; ++j) {
        double g = 0;
        for (std::int64_t d = 0; d < D; ++d) g += double(kd[static_cast<std::size_t>(d * hid + i)]) * kd[static_cast<std::size_t>(d * hid + j)];
        packed.push_back(static_cast<real>(i == j ? g : 2 * g));
      }
    }
    gram_.push_back(std::move(packed));
  }
}

namespace {

Tensor to_rows(const Tensor& map) { return transpose(reshape(map, {map.dim(0), map.dim(1) * map.dim(2)})); }

}  // namespace

Tensor FoldedClassifier::scores(const ForwardResult& fwd, const Model& model) const {
  if (mode_ == FoldMode::kFused) return scores_from_hidden(fwd.embed_hidden, model);
  NoGradGuard no_grad;
  const auto C = kprime_.dim(0), D = kprime_.dim(1);
  const Tensor kernel = reshape(kprime_, {C, D, 1, 1});
  std::vector<Tensor> rows;
  for (const auto& field : fwd.embed_maps) rows.push_back(to_rows(conv2d(field, kernel)));
  return scale(concat(rows, 0), model.temperature().detach());
}

Tensor FoldedClassifier::scores_from_hidden(const std::vector<Tensor>& embed_hidden, const Model& model) const {
  NoGradGuard no_grad;
  const auto C = kprime_.dim(0), D = kprime_.dim(1);
  const real tau = model.temperature().item();
  if (mode_ == FoldMode::kStacked) {
    const Tensor kernel = reshape(kprime_, {C, D, 1, 1});
    std::vector<Tensor> rows;
    for (std::size_t l = 0; l < embed_hidden.size(); ++l) {
      Tensor proj = model.embed_projection(l)(embed_hidden[l]);
      if (model.config().embed_final_activation) proj = silu(proj);
      rows.push_back(to_rows(conv2d(l2_normalize(proj, 0), kernel)));
    }
    return scale(concat(rows, 0), model.temperature().detach());
  }

  std::int64_t N = 0;
  for (const auto& h : embed_hidden) N += h.dim(1) * h.dim(2);
  std::vector<real> out(static_cast<std::size_t>(N * C));
  std::int64_t row = 0;
  std::vector<double> logit(static_cast<std::size_t>(C));
  for (std::size_t l = 0; l < embed_hidden.size(); ++l) {
    const Tensor& h = embed_hidden[l];
    const auto hid = h.dim(0), hw = h.dim(1) * h.dim(2);
    auto hd = h.data();
    auto fd = fused_[l].data();
    const auto& g = gram_[l];
    for (std::int64_t p = 0; p < hw; ++p, ++row) {
      auto at = [&](std::int64_t j) { return double(hd[static_cast<std::size_t>(j * hw + p)]); };
      std::fill(logit.begin(), logit.end(), 0.0);
      for (std::int64_t c = 0; c < C; ++c) {
        double acc = 0;
        for (std::int64_t j = 0; j < hid; ++j) acc += double(fd[static_cast<std::size_t>(c * hid + j)]) * at(j);
        logit[static_cast<std::size_t>(c)] = acc;
      }
      double q = 0;
      std::size_t k = 0;
      for (std::int64_t i = 0; i < hid; ++i) {
        double t = 0;
        for (std::int64_t j = i; j < hid; ++j) t += double(g[k++]) * at(j);
        q += at(i) * t;
      }
      const double s = tau / std::max(std::sqrt(q), kNormEps);
      for (std::int64_t c = 0; c < C; ++c) {
        out[static_cast<std::size_t>(row * C + c)] = static_cast<real>(logit[static_cast<std::size_t>(c)] * s);
      }
    }
    // fused logits, triangular quadratic form, outer dot, sqrt + scale, C products
    add_flops(static_cast<std::uint64_t>(hw * (2 * C * hid + hid * (hid + 1) + 2 * hid + 2 + C)));
  }
  return Tensor({N, C}, std::move(out));
}

FoldedClassifier reprta_fold(const PromptSet& prompts, const AuxAligner& aux, const Model& model, FoldMode mode) {
  NoGradGuard no_grad;
  Tensor refined = reprta_refine(prompts.embeddings.detach(), aux);
  return FoldedClassifier(mode, refined, prompts.labels, model);
}

// ---------------------------------------------------------------------------

Tensor encode_labels(const std::vector<std::string>& labels) {
  std::vector<real> bytes;
  for (const auto& l : labels) {
    if (l.find('\0') != std::string::npos) throw UsageError("label contains a NUL byte");
    for (unsigned char ch : l) bytes.push_back(static_cast<real>(ch));
    bytes.push_back(real(0));
  }
  const auto n = static_cast<std::int64_t>(bytes.size());
  return Tensor({n}, std::move(bytes));
}

std::vector<std::string> decode_labels(const Tensor& t) {
  std::vector<std::string> out;
  std::string cur;
  for (real v : t.data()) {
    if (v < 0 || v > 255 || v != std::floor(v)) throw FormatError("label tensor holds a non-byte value");
    if (v == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(static_cast<unsigned char>(v)));
    }
  }
  if (!cur.empty()) throw FormatError("label tensor is not NUL-terminated");
  return out;
}

std::vector<NamedTensor> fold_tensors(const FoldedClassifier& fold) {
  return {{"fold/K_prime", fold.prompt_kernel()},
          {"fold/labels", encode_labels(fold.labels())},
          {"fold/mode", Tensor::full({1}, fold.mode() == FoldMode::kFused ? real(1) : real(0))}};
}

FoldedClassifier fold_from_tensors(const std::vector<NamedTensor>& tensors, const Model& model) {
  const Tensor* k = nullptr;
  const Tensor* labels = nullptr;
  FoldMode mode = FoldMode::kStacked;
  for (const auto& t : tensors) {
    if (t.name == "fold/K_prime") k = &t.tensor;
    else if (t.name == "fold/labels") labels = &t.tensor;
    else if (t.name == "fold/mode") mode = t.tensor.item() != 0 ? FoldMode::kFused : FoldMode::kStacked;
  }
  if (!k || !labels) throw LookupError("checkpoint holds no fold/K_prime and fold/labels tensors");
  return FoldedClassifier(mode, *k, decode_labels(*labels), model);
}

}  // namespace yoloe
