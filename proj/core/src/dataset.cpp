#include "yoloe/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

#include <json.hpp>

#include "yoloe/image_io.hpp"
#include "yoloe/rng.hpp"

namespace yoloe {

using nlohmann::json;

std::string category_name(const std::string& color, const std::string& shape) { return color + " " + shape; }

void DatasetSpec::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("dataset spec: " + m); };
  if (count < 0) fail("count must be >= 0");
  if (height < 8 || width < 8) fail("image must be at least 8x8");
  if (shapes.empty() || colors.empty()) fail("at least one shape and one colour are required");
  for (const auto& s : shapes)
    if (std::find(kAllShapes.begin(), kAllShapes.end(), s) == kAllShapes.end()) fail("unknown shape '" + s + "'");
  for (const auto& c : colors)
    if (std::find(kAllColors.begin(), kAllColors.end(), c) == kAllColors.end()) fail("unknown colour '" + c + "'");
  if (max_instances < 1) fail("max_instances must be >= 1");
  if (!(min_radius >= 2 && max_radius >= min_radius)) fail("radius range must satisfy 2 <= min <= max");
  if (2 * max_radius + 2 > static_cast<float>(std::min(height, width))) fail("max_radius does not fit the image");
  if (categories().empty()) fail("no category left after include/exclude filters");
}

std::vector<std::string> DatasetSpec::categories() const {
  std::vector<std::string> out;
  for (const auto& c : colors) {
    for (const auto& s : shapes) {
      const auto name = category_name(c, s);
      if (std::find(exclude.begin(), exclude.end(), name) != exclude.end()) continue;
      if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
      out.push_back(name);
    }
  }
  return out;
}

std::string dataset_spec_to_json(const DatasetSpec& s) {
  json j{{"count", s.count},       {"height", s.height},           {"width", s.width},
         {"shapes", s.shapes},     {"colors", s.colors},           {"max_instances", s.max_instances},
         {"seed", s.seed},         {"min_radius", s.min_radius},   {"max_radius", s.max_radius},
         {"exclude", s.exclude},   {"only", s.only},               {"allow_overlap", s.allow_overlap}};
  return j.dump(2);
}

DatasetSpec dataset_spec_from_json(const std::string& text) {
  DatasetSpec s;
  try {
    const auto j = json::parse(text);
    if (!j.is_object()) throw ConfigError("dataset spec: expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      const auto& v = it.value();
      if (k == "count") s.count = v.get<int>();
      else if (k == "height") s.height = v.get<int>();
      else if (k == "width") s.width = v.get<int>();
      else if (k == "shapes") s.shapes = v.get<std::vector<std::string>>();
      else if (k == "colors") s.colors = v.get<std::vector<std::string>>();
      else if (k == "max_instances") s.max_instances = v.get<int>();
      else if (k == "seed") s.seed = v.get<std::uint64_t>();
      else if (k == "min_radius") s.min_radius = v.get<float>();
      else if (k == "max_radius") s.max_radius = v.get<float>();
      else if (k == "exclude") s.exclude = v.get<std::vector<std::string>>();
      else if (k == "only") s.only = v.get<std::vector<std::string>>();
      else if (k == "allow_overlap") s.allow_overlap = v.get<bool>();
      else throw ConfigError("dataset spec: unknown key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset spec: ") + e.what());
  }
  s.validate();
  return s;
}

namespace {

std::array<float, 3> base_color(const std::string& c) {
  if (c == "red") return {0.85f, 0.15f, 0.15f};
  if (c == "green") return {0.15f, 0.75f, 0.20f};
  if (c == "blue") return {0.20f, 0.30f, 0.90f};
  return {0.90f, 0.85f, 0.15f};  // yellow
}

// Point-in-shape test at (px, py) for a shape centred at (cx, cy) with radius r.
bool inside(const std::string& shape, double px, double py, double cx, double cy, double r) {
  const double dx = px - cx, dy = py - cy;
  if (shape == "circle") return dx * dx + dy * dy <= r * r;
  if (shape == "square") {
    const double h = 0.85 * r;
    return std::fabs(dx) <= h && std::fabs(dy) <= h;
  }
  if (shape == "cross") {
    const double t = 0.35 * r;
    return (std::fabs(dx) <= r && std::fabs(dy) <= t) || (std::fabs(dx) <= t && std::fabs(dy) <= r);
  }
  // Upright equilateral triangle inscribed in the circle of radius r.
  const double s3 = std::sqrt(3.0) / 2.0;
  const double ax = cx, ay = cy - r, bx = cx + s3 * r, by = cy + 0.5 * r, qx = cx - s3 * r, qy = cy + 0.5 * r;
  auto edge = [&](double x0, double y0, double x1, double y1) { return (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0); };
  const double e0 = edge(ax, ay, bx, by), e1 = edge(bx, by, qx, qy), e2 = edge(qx, qy, ax, ay);
  return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
}

float quantize(double v) { return static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0f; }

}  // namespace

SyntheticScene generate_scene(const DatasetSpec& spec, int index) {
  const int H = spec.height, W = spec.width;
  Rng rng(mix_seed(spec.seed, "scene/" + std::to_string(index)));
  const auto cats = spec.categories();

  const double bg = rng.uniform(0.05, 0.45);
  std::vector<double> canvas(static_cast<std::size_t>(3 * H * W));
  for (auto& v : canvas) v = bg + rng.uniform(-0.04, 0.04);

  struct Placed {
    double cx, cy, r;
  };
  std::vector<Placed> placed;
  SyntheticScene scene;
  const int n = static_cast<int>(rng.integer(1, spec.max_instances));
  std::vector<int> owner(static_cast<std::size_t>(H * W), -1);
  for (int k = 0; k < n; ++k) {
    const auto& cat = cats[static_cast<std::size_t>(rng.below(cats.size()))];
    const auto space = cat.find(' ');
    const std::string color = cat.substr(0, space), shape = cat.substr(space + 1);
    bool ok = false;
    double cx = 0, cy = 0, r = 0;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      r = rng.uniform(spec.min_radius, spec.max_radius);
      cx = rng.uniform(r + 1, W - r - 1);
      cy = rng.uniform(r + 1, H - r - 1);
      ok = spec.allow_overlap || std::all_of(placed.begin(), placed.end(), [&](const Placed& p) {
             return std::hypot(p.cx - cx, p.cy - cy) >= p.r + r + 2;
           });
    }
    if (!ok) break;  // the scene keeps the instances placed so far
    placed.push_back({cx, cy, r});

    auto col = base_color(color);
    for (auto& c : col) c = static_cast<float>(std::clamp(c + rng.uniform(-0.08, 0.08), 0.0, 1.0));
    const int id = static_cast<int>(scene.instances.size());
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        if (!inside(shape, x + 0.5, y + 0.5, cx, cy, r)) continue;
        owner[static_cast<std::size_t>(y * W + x)] = id;
        for (int c = 0; c < 3; ++c) {
          canvas[static_cast<std::size_t>((c * H + y) * W + x)] = col[static_cast<std::size_t>(c)] + rng.uniform(-0.03, 0.03);
        }
      }
    }
    Instance inst;
    inst.category = cat;
    inst.z = id;
    scene.instances.push_back(std::move(inst));
  }
  // Visible masks after painting in z-order.
  for (auto& inst : scene.instances) inst.mask = BinaryMask(H, W);
  for (int i = 0; i < H * W; ++i) {
    const int o = owner[static_cast<std::size_t>(i)];
    if (o >= 0) scene.instances[static_cast<std::size_t>(o)].mask.bits[static_cast<std::size_t>(i)] = 1;
  }
  std::erase_if(scene.instances, [](const Instance& in) { return in.mask.area() == 0; });
  for (auto& inst : scene.instances) inst.box = inst.mask.tight_box();

  std::vector<real> img(canvas.size());
  for (std::size_t i = 0; i < canvas.size(); ++i) img[i] = quantize(canvas[i]);
  scene.image = Tensor({3, H, W}, std::move(img));
  return scene;
}

std::vector<SyntheticScene> generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  std::vector<SyntheticScene> out;
  out.reserve(static_cast<std::size_t>(spec.count));
  for (int i = 0; i < spec.count; ++i) out.push_back(generate_scene(spec, i));
  return out;
}

void save_dataset(const std::filesystem::path& dir, const DatasetSpec& spec, const std::vector<SyntheticScene>& scenes) {
  std::filesystem::create_directories(dir / "scenes");
  {
    std::ofstream m(dir / "manifest.json");
    if (!m) throw IoError("cannot write " + (dir / "manifest.json").string());
    json j{{"spec", json::parse(dataset_spec_to_json(spec))}, {"seed", spec.seed}, {"count", scenes.size()}};
    m << j.dump(2) << '\n';
  }
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& s = scenes[i];
    write_ppm(dir / "scenes" / (std::to_string(i) + ".ppm"), s.image);
    json inst = json::array();
    for (const auto& in : s.instances) {
      inst.push_back({{"name", in.category},
                      {"box", {in.box[0], in.box[1], in.box[2], in.box[3]}},
                      {"mask_rle", rle_encode(in.mask)},
                      {"z", in.z}});
    }
    json j{{"height", s.image.dim(1)}, {"width", s.image.dim(2)}, {"instances", inst}};
    std::ofstream f(dir / "scenes" / (std::to_string(i) + ".json"));
    if (!f) throw IoError("cannot write scene record " + std::to_string(i));
    f << j.dump() << '\n';
  }
}

std::vector<SyntheticScene> load_dataset(const std::filesystem::path& dir, DatasetSpec* spec) {
  std::ifstream m(dir / "manifest.json");
  if (!m) throw IoError("dataset manifest missing: " + (dir / "manifest.json").string());
  std::vector<SyntheticScene> out;
  try {
    const auto manifest = json::parse(m);
    if (spec) *spec = dataset_spec_from_json(manifest.at("spec").dump());
    const auto count = manifest.at("count").get<std::size_t>();
    for (std::size_t i = 0; i < count; ++i) {
      SyntheticScene s;
      s.image = read_ppm(dir / "scenes" / (std::to_string(i) + ".ppm"));
      std::ifstream f(dir / "scenes" / (std::to_string(i) + ".json"));
      if (!f) throw IoError("scene record missing: " + std::to_string(i));
      const auto j = json::parse(f);
      const int H = j.at("height").get<int>(), W = j.at("width").get<int>();
      for (const auto& e : j.at("instances")) {
        Instance in;
        in.category = e.at("name").get<std::string>();
        const auto b = e.at("box").get<std::vector<float>>();
        if (b.size() != 4) throw FormatError("scene " + std::to_string(i) + ": box needs 4 values");
        in.box = {b[0], b[1], b[2], b[3]};
        in.mask = rle_decode(e.at("mask_rle").get<std::vector<std::int64_t>>(), H, W);
        in.z = e.value("z", 0);
        s.instances.push_back(std::move(in));
      }
      out.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset ") + dir.string() + ": " + e.what());
  }
  return out;
}

BinaryMask sanitize_mask(const BinaryMask& mask, const std::array<float, 4>& box) {
  BinaryMask clipped(mask.height, mask.width);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      const float cx = static_cast<float>(x) + 0.5f, cy = static_cast<float>(y) + 0.5f;
      if (mask.at(y, x) && cx >= box[0] && cx <= box[2] && cy >= box[1] && cy <= box[3]) clipped.at(y, x) = 1;
    }
  // Largest 4-connected component; ties keep the one found first in raster order.
  std::vector<int> label(clipped.bits.size(), -1);
  int best = -1;
  std::size_t best_size = 0;
  int next = 0;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const auto i = static_cast<std::size_t>(y * mask.width + x);
      if (!clipped.bits[i] || label[i] >= 0) continue;
      std::size_t size = 0;
      std::queue<std::pair<int, int>> q;
      q.push({y, x});
      label[i] = next;
      while (!q.empty()) {
        auto [cy, cx] = q.front();
        q.pop();
        ++size;
        const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const int ny = cy + dy[k], nx = cx + dx[k];
          if (ny < 0 || nx < 0 || ny >= mask.height || nx >= mask.width) continue;
          const auto j = static_cast<std::size_t>(ny * mask.width + nx);
          if (clipped.bits[j] && label[j] < 0) {
            label[j] = next;
            q.push({ny, nx});
          }
        }
      }
      if (size > best_size) {
        best_size = size;
        best = next;
      }
      ++next;
    }
  }
  BinaryMask out(mask.height, mask.width);
  for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = (best >= 0 && label[i] == best) ? 1 : 0;
  return out;
}

SyntheticScene flip_horizontal(const SyntheticScene& scene) {
  SyntheticScene out;
  const auto H = scene.image.dim(1), W = scene.image.dim(2);
  auto d = scene.image.data();
  std::vector<real> img(d.size());
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < H; ++y)
      for (std::int64_t x = 0; x < W; ++x)
        img[static_cast<std::size_t>((c * H + y) * W + x)] = d[static_cast<std::size_t>((c * H + y) * W + (W - 1 - x))];
  out.image = Tensor({3, H, W}, std::move(img));
  for (const auto& in : scene.instances) {
    Instance f = in;
    for (int y = 0; y < in.mask.height; ++y)
      for (int x = 0; x < in.mask.width; ++x) f.mask.at(y, x) = in.mask.at(y, in.mask.width - 1 - x);
    f.box = f.mask.tight_box();
    out.instances.push_back(std::move(f));
  }
  return out;
}

}  // namespace yoloe
