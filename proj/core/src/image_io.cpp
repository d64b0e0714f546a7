#include "yoloe/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include "yoloe/error.hpp"
#include "yoloe/rng.hpp"

namespace yoloe {

namespace {

struct Netpbm {
  int width = 0, height = 0;
  std::vector<unsigned char> pixels;
};

// Reads one header token, skipping whitespace and '#' comments.
std::string token(std::istream& in, const std::string& path) {
  std::string t;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!t.empty()) return t;
      continue;
    }
    t.push_back(static_cast<char>(c));
  }
  if (t.empty()) throw FormatError(path + ": truncated header");
  return t;
}

int header_int(std::istream& in, const std::string& path, const char* what) {
  const auto t = token(in, path);
  try {
    std::size_t used = 0;
    const int v = std::stoi(t, &used);
    if (used != t.size() || v <= 0) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw FormatError(path + ": malformed " + what + " '" + t + "'");
  }
}

Netpbm read_netpbm(const std::filesystem::path& p, const char* magic, int channels) {
  const auto path = p.string();
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  const auto m = token(in, path);
  if (m != magic) throw FormatError(path + ": expected magic " + magic + ", found '" + m + "'");
  Netpbm img;
  img.width = header_int(in, path, "width");
  img.height = header_int(in, path, "height");
  const int maxval = header_int(in, path, "maxval");
  if (maxval != 255) throw FormatError(path + ": maxval " + std::to_string(maxval) + " is not supported (only 255)");
  const auto n = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height) * static_cast<std::size_t>(channels);
  img.pixels.resize(n);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw FormatError(path + ": pixel data is truncated");
  return img;
}

void write_netpbm(const std::filesystem::path& p, const char* magic, int width, int height,
                  const std::vector<unsigned char>& pixels) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << magic << '\n' << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("write failed for " + p.string());
}

unsigned char to_byte(real v) {
  const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<unsigned char>(std::lround(c * 255.0));
}

}  // namespace

Tensor read_ppm(const std::filesystem::path& path) {
  const auto img = read_netpbm(path, "P6", 3);
  const std::int64_t H = img.height, W = img.width;
  std::vector<real> data(static_cast<std::size_t>(3 * H * W));
  for (std::int64_t y = 0; y < H; ++y)
    for (std::int64_t x = 0; x < W; ++x)
      for (std::int64_t c = 0; c < 3; ++c)
        data[static_cast<std::size_t>((c * H + y) * W + x)] =
            static_cast<real>(img.pixels[static_cast<std::size_t>((y * W + x) * 3 + c)]) / real(255);
  return Tensor({3, H, W}, std::move(data));
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("write_ppm: expected 3 x H x W, got " + shape_str(image.shape()));
  }
  const auto H = image.dim(1), W = image.dim(2);
  auto d = image.data();
  std::vector<unsigned char> px(static_cast<std::size_t>(3 * H * W));
  for (std::int64_t y = 0; y < H; ++y)
    for (std::int64_t x = 0; x < W; ++x)
      for (std::int64_t c = 0; c < 3; ++c)
        px[static_cast<std::size_t>((y * W + x) * 3 + c)] = to_byte(d[static_cast<std::size_t>((c * H + y) * W + x)]);
  write_netpbm(path, "P6", static_cast<int>(W), static_cast<int>(H), px);
}

BinaryMask read_pgm(const std::filesystem::path& path) {
  const auto img = read_netpbm(path, "P5", 1);
  BinaryMask m(img.height, img.width);
  for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = img.pixels[i] ? 1 : 0;
  return m;
}

void write_pgm(const std::filesystem::path& path, const BinaryMask& mask) {
  std::vector<unsigned char> px(mask.bits.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = mask.bits[i] ? 255 : 0;
  write_netpbm(path, "P5", mask.width, mask.height, px);
}

std::array<float, 3> label_color(const std::string& label) {
  const auto h = fnv1a64(label);
  auto channel = [&](int shift) { return 0.25f + 0.75f * static_cast<float>((h >> shift) & 0xff) / 255.0f; };
  return {channel(0), channel(8), channel(16)};
}

Tensor overlay_masks(const Tensor& image, const std::vector<OverlayItem>& items) {
  Tensor out = image.detach();
  const auto H = out.dim(1), W = out.dim(2);
  auto d = out.mutable_data();
  for (const auto& item : items) {
    if (item.mask->height != H || item.mask->width != W) throw DimensionError("overlay: mask size differs from image");
    const auto col = label_color(item.label);
    for (std::int64_t y = 0; y < H; ++y)
      for (std::int64_t x = 0; x < W; ++x) {
        if (!item.mask->at(static_cast<int>(y), static_cast<int>(x))) continue;
        for (std::int64_t c = 0; c < 3; ++c) {
          auto& v = d[static_cast<std::size_t>((c * H + y) * W + x)];
          v = real(0.5) * v + real(0.5) * static_cast<real>(col[static_cast<std::size_t>(c)]);
        }
      }
  }
  return out;
}

}  // namespace yoloe
