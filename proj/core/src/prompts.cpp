#include "yoloe/prompts.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "yoloe/checkpoint.hpp"
#include "yoloe/ops.hpp"

namespace yoloe {

const char* prompt_kind_name(PromptKind kind) {
  switch (kind) {
    case PromptKind::kText: return "text";
    case PromptKind::kVisual: return "visual";
    case PromptKind::kVocabulary: return "vocabulary";
    case PromptKind::kObjectness: return "objectness";
  }
  return "?";
}

void PromptSet::validate() const {
  if (!embeddings.defined() || embeddings.rank() != 2 || embeddings.dim(0) < 1) {
    throw UsageError("prompt set must hold at least one row");
  }
  if (static_cast<std::int64_t>(labels.size()) != embeddings.dim(0)) {
    throw DimensionError("prompt set: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(embeddings.dim(0)) + " rows");
  }
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (!seen.insert(l).second) throw UsageError("prompt set: duplicate label '" + l + "'");
  }
  const auto D = embeddings.dim(1);
  auto d = embeddings.data();
  for (std::int64_t c = 0; c < embeddings.dim(0); ++c) {
    double ss = 0;
    for (std::int64_t k = 0; k < D; ++k) ss += double(d[static_cast<std::size_t>(c * D + k)]) * d[static_cast<std::size_t>(c * D + k)];
    if (std::fabs(std::sqrt(ss) - 1.0) > 1e-5) {
      throw NumericError("prompt set: row '" + labels[static_cast<std::size_t>(c)] + "' is not unit norm");
    }
  }
}

// ---------------------------------------------------------------------------

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  const auto ckpt = load_checkpoint(path);
  EmbeddingTable t;
  for (const auto& nt : ckpt.tensors) {
    if (!nt.name.starts_with("text/")) continue;
    auto d = nt.tensor.data();
    t.insert(nt.name.substr(5), std::vector<float>(d.begin(), d.end()));
  }
  if (t.empty()) throw FormatError("embedding table " + path.string() + " holds no 'text/<name>' tensors");
  return t;
}

void EmbeddingTable::insert(const std::string& name, std::vector<float> row) {
  if (!rows_.empty() && rows_.begin()->second.size() != row.size()) {
    throw DimensionError("embedding table: row '" + name + "' has dimension " + std::to_string(row.size()) +
                         ", expected " + std::to_string(rows_.begin()->second.size()));
  }
  rows_[name] = std::move(row);
}

const std::vector<float>* EmbeddingTable::find(const std::string& name) const {
  auto it = rows_.find(name);
  return it == rows_.end() ? nullptr : &it->second;
}

PromptSet encode_text(const std::vector<std::string>& names, const TextEncoder& encoder, const EmbeddingTable* table) {
  if (names.empty()) throw UsageError("encode_text: no names given");
  std::set<std::string> seen;
  std::int64_t D = encoder.dim();
  std::vector<real> rows;
  for (const auto& name : names) {
    if (name.find_first_not_of(" \t\r\n") == std::string::npos) throw UsageError("encode_text: empty name");
    if (!seen.insert(name).second) throw UsageError("encode_text: duplicate name '" + name + "'");
    std::vector<float> row;
    if (table) {
      const auto* r = table->find(name);
      if (!r) throw LookupError("encode_text: '" + name + "' is not in the embedding table");
      row = *r;
      double ss = 0;
      for (float v : row) ss += double(v) * v;
      const double n = std::max(std::sqrt(ss), 1e-12);
      for (auto& v : row) v = static_cast<float>(v / n);
    } else {
      row = encoder.encode_one(name);
    }
    if (static_cast<std::int64_t>(row.size()) != D) {
      throw DimensionError("encode_text: row for '" + name + "' has dimension " + std::to_string(row.size()) +
                           ", expected " + std::to_string(D));
    }
    rows.insert(rows.end(), row.begin(), row.end());
  }
  PromptSet p;
  p.embeddings = Tensor({static_cast<std::int64_t>(names.size()), D}, std::move(rows));
  p.labels = names;
  p.kind = PromptKind::kText;
  return p;
}

// ---------------------------------------------------------------------------

std::vector<std::string> read_names_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open names file " + path.string());
  std::vector<std::string> names;
  std::map<std::string, int> first_line;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto b = line.find_first_not_of(" \t\r\n");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r\n");
    std::string name = line.substr(b, e - b + 1);
    auto [it, fresh] = first_line.emplace(name, lineno);
    if (!fresh) {
      throw UsageError(path.string() + ": duplicate name '" + name + "' on lines " + std::to_string(it->second) +
                       " and " + std::to_string(lineno));
    }
    names.push_back(std::move(name));
  }
  if (names.empty()) throw UsageError(path.string() + ": no names found");
  return names;
}

PromptSet objectness_prompt(std::int64_t embed_dim) {
  std::vector<real> row(static_cast<std::size_t>(embed_dim + 1), real(0));
  row.back() = real(1);
  PromptSet p;
  p.embeddings = Tensor({1, embed_dim + 1}, std::move(row));
  p.labels = {"object"};
  p.kind = PromptKind::kObjectness;
  return p;
}

Vocabulary build_vocabulary(const std::vector<std::string>& names, const TextEncoder& encoder,
                            const EmbeddingTable* table) {
  Vocabulary v;
  v.prompts = encode_text(names, encoder, table);
  v.prompts.kind = PromptKind::kVocabulary;
  v.objectness = objectness_prompt(v.prompts.dim());
  return v;
}

Vocabulary build_vocabulary(const std::filesystem::path& names_file, const TextEncoder& encoder,
                            const EmbeddingTable* table) {
  return build_vocabulary(read_names_file(names_file), encoder, table);
}

Tensor extended_embeddings(const Tensor& embeddings, const Tensor& objectness) {
  return concat({embeddings, reshape(objectness, {objectness.numel(), 1})}, 1);
}

}  // namespace yoloe
