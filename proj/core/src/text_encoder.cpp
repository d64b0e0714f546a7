#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "yoloe/prompts.hpp"
#include "yoloe/rng.hpp"

// Built with -ffp-contract=off: every value below is produced by IEEE
// operations in a fixed order, so vectors are byte-identical across hosts.

namespace yoloe {

TextEncoder::TextEncoder(int dim, std::uint64_t seed) : dim_(dim) {
  if (dim < 1) throw ConfigError("text encoder: dimension must be >= 1");
  projection_.resize(static_cast<std::size_t>(dim) * kBins);
  Rng rng(seed);
  // uniform() is an exact dyadic rational, so 2u - 1 is exact as well.
  for (auto& v : projection_) v = static_cast<float>(2.0 * rng.uniform() - 1.0);
}

std::vector<float> TextEncoder::bag(std::string_view text) const {
  std::vector<float> total(kBins, 0.0f);
  std::vector<float> word(kBins);
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j == i) break;
    const std::string padded = "<" + std::string(text.substr(i, j - i)) + ">";
    std::fill(word.begin(), word.end(), 0.0f);
    for (std::size_t k = 0; k + 3 <= padded.size(); ++k) {
      word[fnv1a64(std::string_view(padded).substr(k, 3)) % kBins] += 1.0f;
    }
    float ss = 0.0f;
    for (float v : word) ss += v * v;
    const float inv = 1.0f / std::sqrt(ss);
    for (int b = 0; b < kBins; ++b) total[static_cast<std::size_t>(b)] += word[static_cast<std::size_t>(b)] * inv;
    i = j;
  }
  return total;
}

std::vector<float> TextEncoder::encode_one(std::string_view text) const {
  const auto b = bag(text);
  std::vector<float> out(static_cast<std::size_t>(dim_), 0.0f);
  for (int d = 0; d < dim_; ++d) {
    const float* row = projection_.data() + static_cast<std::size_t>(d) * kBins;
    float acc = 0.0f;
    for (int k = 0; k < kBins; ++k) acc += row[k] * b[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(d)] = acc;
  }
  float ss = 0.0f;
  for (float v : out) ss += v * v;
  const float denom = std::max(std::sqrt(ss), 1e-12f);
  for (auto& v : out) v /= denom;
  return out;
}

}  // namespace yoloe
