#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace yoloe {

struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;  // row-major, 0 or 1

  BinaryMask() = default;
  BinaryMask(int h, int w) : height(h), width(w), bits(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), 0) {}
  std::uint8_t at(int y, int x) const { return bits[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
  std::uint8_t& at(int y, int x) { return bits[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
  std::int64_t area() const;
  /// Tight box (x1, y1, x2, y2) with exclusive upper corner; zeros if empty.
  std::array<float, 4> tight_box() const;
  bool operator==(const BinaryMask&) const = default;
};

/// Mask IoU; two empty masks give 0.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

/// Uncompressed row-major run lengths of alternating 0/1 runs, starting with a
/// (possibly empty) run of zeros.
std::vector<std::int64_t> rle_encode(const BinaryMask& mask);
BinaryMask rle_decode(const std::vector<std::int64_t>& counts, int height, int width);

}  // namespace yoloe
