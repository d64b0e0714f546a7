#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "yoloe/model.hpp"

namespace yoloe {

// Container layout (all integers little-endian):
//   "Y26E" | u16 version | u32 manifest length | manifest (UTF-8 JSON) | payload
// Each tensor's float32 data starts at a 64-byte aligned absolute file offset
// recorded in the manifest; gaps are zero-filled.
inline constexpr std::uint16_t kCheckpointVersion = 1;
inline constexpr std::size_t kCheckpointAlign = 64;

struct CheckpointMetadata {
  std::string stage;
  std::uint64_t seed = 0;
  std::string created;
  std::map<std::string, std::string> extra;
};

struct Checkpoint {
  std::optional<ModelConfig> config;
  std::vector<NamedTensor> tensors;
  CheckpointMetadata metadata;

  const Tensor* find(const std::string& name) const;
  const Tensor& get(const std::string& name) const;  // LookupError if absent
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Checkpoint holding every model parameter under its own name.
Checkpoint model_checkpoint(const Model& model, const std::string& stage);
/// Builds a model from the stored config and copies all parameters.
Model model_from_checkpoint(const Checkpoint& ckpt);
void load_model_parameters(Model& model, const Checkpoint& ckpt);

}  // namespace yoloe
