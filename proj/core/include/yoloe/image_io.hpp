#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "yoloe/mask.hpp"
#include "yoloe/tensor.hpp"

namespace yoloe {

/// Binary P6 with maxval 255 to a 3 x H x W tensor of byte / 255.
Tensor read_ppm(const std::filesystem::path& path);
/// Values are clamped to [0, 1] and rounded to the nearest byte.
void write_ppm(const std::filesystem::path& path, const Tensor& image);

/// Binary P5 with maxval 255; non-zero bytes are mask pixels.
BinaryMask read_pgm(const std::filesystem::path& path);
/// Mask pixels are written as 255.
void write_pgm(const std::filesystem::path& path, const BinaryMask& mask);

/// Fixed colour of a label, derived from its name.
std::array<float, 3> label_color(const std::string& label);

struct OverlayItem {
  const BinaryMask* mask;
  std::string label;
};
/// Blends each mask over the image at 50% alpha in its label colour.
Tensor overlay_masks(const Tensor& image, const std::vector<OverlayItem>& items);

}  // namespace yoloe
