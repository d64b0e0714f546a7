#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "yoloe/mask.hpp"
#include "yoloe/tensor.hpp"

namespace yoloe {

inline const std::vector<std::string> kAllShapes{"circle", "square", "triangle", "cross"};
inline const std::vector<std::string> kAllColors{"red", "green", "blue", "yellow"};

struct DatasetSpec {
  int count = 100;
  int height = 96;
  int width = 96;
  std::vector<std::string> shapes = kAllShapes;
  std::vector<std::string> colors = kAllColors;
  int max_instances = 4;
  std::uint64_t seed = 0;
  float min_radius = 10.0f;
  float max_radius = 22.0f;
  // Categories ("<color> <shape>") never drawn, and, when non-empty, the only
  // categories drawn.
  std::vector<std::string> exclude;
  std::vector<std::string> only;
  // Overlapping placements are painted in z-order; masks hold visible pixels.
  bool allow_overlap = false;

  void validate() const;
  /// Categories this spec can draw, colour-major.
  std::vector<std::string> categories() const;
};

std::string dataset_spec_to_json(const DatasetSpec& spec);
/// Unknown keys are rejected.
DatasetSpec dataset_spec_from_json(const std::string& text);

struct Instance {
  std::string category;  // "<color> <shape>"
  std::array<float, 4> box{};  // tight box of the mask, exclusive upper corner
  BinaryMask mask;
  int z = 0;  // paint order
};

struct SyntheticScene {
  Tensor image;  // 3 x H x W in [0, 1]
  std::vector<Instance> instances;
};

std::string category_name(const std::string& color, const std::string& shape);

/// Deterministic in spec (including seed). Scene i uses its own generator
/// seeded from (seed, i), so any scene can be regenerated alone.
std::vector<SyntheticScene> generate_dataset(const DatasetSpec& spec);
SyntheticScene generate_scene(const DatasetSpec& spec, int index);

/// scenes/<i>.ppm, scenes/<i>.json and manifest.json.
void save_dataset(const std::filesystem::path& dir, const DatasetSpec& spec, const std::vector<SyntheticScene>& scenes);
std::vector<SyntheticScene> load_dataset(const std::filesystem::path& dir, DatasetSpec* spec = nullptr);

/// Cleans an externally produced mask: keeps only the largest 4-connected
/// component (fragment removal) and clears pixels outside the box (leakage
/// suppression).
BinaryMask sanitize_mask(const BinaryMask& mask, const std::array<float, 4>& box);

/// Mirrors a scene left to right.
SyntheticScene flip_horizontal(const SyntheticScene& scene);

}  // namespace yoloe
