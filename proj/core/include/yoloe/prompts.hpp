#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "yoloe/tensor.hpp"

namespace yoloe {

enum class PromptKind { kText, kVisual, kVocabulary, kObjectness };

const char* prompt_kind_name(PromptKind kind);

/// C prompt embeddings (C x D, unit rows) with one label per row.
struct PromptSet {
  Tensor embeddings;
  std::vector<std::string> labels;
  PromptKind kind = PromptKind::kText;

  std::int64_t size() const { return embeddings.defined() ? embeddings.dim(0) : 0; }
  std::int64_t dim() const { return embeddings.defined() ? embeddings.dim(1) : 0; }
  /// Throws if C == 0, a row is not unit norm (1e-5), labels repeat or the
  /// label count differs from C.
  void validate() const;
};

/// Character-trigram text encoder. Each whitespace-separated word is wrapped
/// in boundary markers ('<' word '>'), its trigrams are hashed into 512 bins,
/// and the word's bag is scaled to unit length. The bags of all words are
/// summed, projected by a fixed seeded D x 512 matrix and L2-normalised.
class TextEncoder {
 public:
  static constexpr int kBins = 512;
  static constexpr std::uint64_t kDefaultSeed = 0x7e57e3c0de;

  explicit TextEncoder(int dim, std::uint64_t seed = kDefaultSeed);

  int dim() const { return dim_; }
  std::vector<float> bag(std::string_view text) const;
  /// Projected, normalised embedding of one string.
  std::vector<float> encode_one(std::string_view text) const;

 private:
  int dim_;
  std::vector<float> projection_;  // dim x kBins
};

/// Named rows loaded from a checkpoint whose tensors are called "text/<name>".
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  static EmbeddingTable load(const std::filesystem::path& path);
  void insert(const std::string& name, std::vector<float> row);
  const std::vector<float>* find(const std::string& name) const;
  bool empty() const { return rows_.empty(); }

 private:
  std::map<std::string, std::vector<float>> rows_;
};

/// Text prompts. Names are looked up in `table` when one is given (LookupError
/// for a missing name), otherwise encoded with `encoder`. Rows are normalised.
PromptSet encode_text(const std::vector<std::string>& names, const TextEncoder& encoder,
                      const EmbeddingTable* table = nullptr);

/// Built-in vocabulary plus the objectness prompt. The objectness prompt lives
/// in the extended (D+1)-dimensional space [O ; objectness logit] and equals
/// the last unit vector, so o_ext . P_s is exactly the objectness logit.
struct Vocabulary {
  PromptSet prompts;      // kind = vocabulary, C x D
  PromptSet objectness;   // kind = objectness, 1 x (D+1)
};

/// Reads a UTF-8 names file: one name per line, blank lines and lines
/// starting with '#' skipped, surrounding whitespace trimmed.
std::vector<std::string> read_names_file(const std::filesystem::path& path);
Vocabulary build_vocabulary(const std::filesystem::path& names_file, const TextEncoder& encoder,
                            const EmbeddingTable* table = nullptr);
Vocabulary build_vocabulary(const std::vector<std::string>& names, const TextEncoder& encoder,
                            const EmbeddingTable* table = nullptr);
PromptSet objectness_prompt(std::int64_t embed_dim);

/// [O ; objectness] rows, N x (D+1).
Tensor extended_embeddings(const Tensor& embeddings, const Tensor& objectness);

}  // namespace yoloe
