#include <algorithm>
#include <string>

#include "yoloe/error.hpp"
#include "yoloe/mask.hpp"

namespace yoloe {

std::int64_t BinaryMask::area() const {
  return std::count_if(bits.begin(), bits.end(), [](std::uint8_t v) { return v != 0; });
}

std::array<float, 4> BinaryMask::tight_box() const {
  int x1 = width, y1 = height, x2 = -1, y2 = -1;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!at(y, x)) continue;
      x1 = std::min(x1, x);
      y1 = std::min(y1, y);
      x2 = std::max(x2, x);
      y2 = std::max(y2, y);
    }
  }
  if (x2 < 0) return {0, 0, 0, 0};
  return {static_cast<float>(x1), static_cast<float>(y1), static_cast<float>(x2 + 1), static_cast<float>(y2 + 1)};
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.height != b.height || a.width != b.width) {
    throw DimensionError("mask_iou: masks differ in size");
  }
  std::int64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    const bool p = a.bits[i] != 0, q = b.bits[i] != 0;
    inter += p && q;
    uni += p || q;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::int64_t> rle_encode(const BinaryMask& mask) {
  std::vector<std::int64_t> counts;
  std::uint8_t cur = 0;
  std::int64_t run = 0;
  for (auto v : mask.bits) {
    const std::uint8_t b = v ? 1 : 0;
    if (b != cur) {
      counts.push_back(run);
      run = 0;
      cur = b;
    }
    ++run;
  }
  counts.push_back(run);
  return counts;
}

BinaryMask rle_decode(const std::vector<std::int64_t>& counts, int height, int width) {
  BinaryMask m(height, width);
  std::size_t pos = 0;
  std::uint8_t cur = 0;
  for (auto c : counts) {
    if (c < 0 || pos + static_cast<std::size_t>(c) > m.bits.size()) {
      throw FormatError("mask RLE overruns a " + std::to_string(height) + "x" + std::to_string(width) + " mask");
    }
    std::fill_n(m.bits.begin() + static_cast<std::ptrdiff_t>(pos), c, cur);
    pos += static_cast<std::size_t>(c);
    cur ^= 1;
  }
  if (pos != m.bits.size()) {
    throw FormatError("mask RLE covers " + std::to_string(pos) + " of " + std::to_string(m.bits.size()) + " pixels");
  }
  return m;
}

}  // namespace yoloe
