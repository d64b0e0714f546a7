#include "yoloe/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace yoloe {

using nlohmann::json;

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.tensor;
  }
  return nullptr;
}

const Tensor& Checkpoint::get(const std::string& name) const {
  const auto* t = find(name);
  if (!t) throw LookupError("checkpoint has no tensor '" + name + "'");
  return *t;
}

namespace {

constexpr char kMagic[4] = {'Y', '2', '6', 'E'};
constexpr std::size_t kHeaderFixed = 4 + 2 + 4;

std::size_t align_up(std::size_t v) { return (v + kCheckpointAlign - 1) / kCheckpointAlign * kCheckpointAlign; }

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

json metadata_json(const CheckpointMetadata& m) {
  json j{{"stage", m.stage}, {"seed", m.seed}, {"created", m.created}};
  if (!m.extra.empty()) j["extra"] = m.extra;
  return j;
}

std::string build_manifest(const Checkpoint& ckpt, const std::vector<std::size_t>& offsets) {
  json tensors = json::array();
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    const auto& t = ckpt.tensors[i];
    tensors.push_back({{"name", t.name}, {"shape", t.tensor.shape()}, {"byte_offset", offsets[i]}});
  }
  json j{{"config", ckpt.config ? json::parse(model_config_to_json(*ckpt.config)) : json(nullptr)},
         {"tensors", tensors},
         {"metadata", metadata_json(ckpt.metadata)}};
  return j.dump();
}

std::vector<std::size_t> layout(const Checkpoint& ckpt, std::size_t manifest_size) {
  std::vector<std::size_t> offsets;
  std::size_t pos = kHeaderFixed + manifest_size;
  for (const auto& t : ckpt.tensors) {
    pos = align_up(pos);
    offsets.push_back(pos);
    pos += static_cast<std::size_t>(t.tensor.numel()) * 4;
  }
  return offsets;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  // Offsets depend on the manifest length, which depends on the offsets;
  // iterate to the fixed point (lengths only grow, so this terminates).
  std::string manifest = build_manifest(ckpt, layout(ckpt, 0));
  for (;;) {
    auto next = build_manifest(ckpt, layout(ckpt, manifest.size()));
    if (next.size() == manifest.size()) {
      manifest = std::move(next);
      break;
    }
    manifest = std::move(next);
  }
  const auto offsets = layout(ckpt, manifest.size());

  std::string out(kMagic, 4);
  put_le(out, kCheckpointVersion, 2);
  put_le(out, manifest.size(), 4);
  out += manifest;
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    out.resize(offsets[i], '\0');
    for (real v : ckpt.tensors[i].tensor.data()) put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto where = path.string();
  if (bytes.size() < kHeaderFixed || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(where + ": not a checkpoint (bad magic)");
  }
  const auto version = get_le(bytes.data() + 4, 2);
  if (version != kCheckpointVersion) {
    throw FormatError(where + ": unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto mlen = static_cast<std::size_t>(get_le(bytes.data() + 6, 4));
  if (kHeaderFixed + mlen > bytes.size()) throw FormatError(where + ": manifest is truncated");
  Checkpoint ckpt;
  try {
    const auto j = json::parse(bytes.begin() + kHeaderFixed, bytes.begin() + static_cast<std::ptrdiff_t>(kHeaderFixed + mlen));
    if (!j.at("config").is_null()) ckpt.config = model_config_from_json(j.at("config").dump());
    const auto& m = j.at("metadata");
    ckpt.metadata.stage = m.value("stage", "");
    ckpt.metadata.seed = m.value("seed", std::uint64_t{0});
    ckpt.metadata.created = m.value("created", "");
    if (m.contains("extra")) ckpt.metadata.extra = m.at("extra").get<std::map<std::string, std::string>>();
    std::size_t prev_end = kHeaderFixed + mlen;
    for (const auto& e : j.at("tensors")) {
      const auto name = e.at("name").get<std::string>();
      const auto shape = e.at("shape").get<Shape>();
      const auto off = e.at("byte_offset").get<std::size_t>();
      for (auto d : shape) {
        if (d < 0) throw FormatError(where + ": tensor '" + name + "' has a negative extent");
      }
      const auto n = static_cast<std::size_t>(shape_numel(shape));
      if (off % kCheckpointAlign != 0) throw FormatError(where + ": tensor '" + name + "' is not 64-byte aligned");
      if (off < prev_end) throw FormatError(where + ": tensor '" + name + "' overlaps the previous region");
      if (off + 4 * n > bytes.size()) {
        throw FormatError(where + ": tensor '" + name + "' is truncated (needs " + std::to_string(off + 4 * n) +
                          " bytes, file has " + std::to_string(bytes.size()) + ")");
      }
      std::vector<real> data(n);
      for (std::size_t i = 0; i < n; ++i) {
        data[i] = static_cast<real>(std::bit_cast<float>(static_cast<std::uint32_t>(get_le(bytes.data() + off + 4 * i, 4))));
      }
      ckpt.tensors.push_back({name, Tensor(shape, std::move(data))});
      prev_end = off + 4 * n;
    }
  } catch (const json::exception& e) {
    throw FormatError(where + ": malformed manifest: " + e.what());
  }
  return ckpt;
}

Checkpoint model_checkpoint(const Model& model, const std::string& stage) {
  Checkpoint c;
  c.config = model.config();
  c.metadata.stage = stage;
  c.metadata.seed = model.config().seed;
  c.metadata.created = "yoloe26";
  for (const auto& p : model.parameters()) c.tensors.push_back({p.name, p.tensor.detach()});
  return c;
}

void load_model_parameters(Model& model, const Checkpoint& ckpt) {
  for (const auto& p : model.parameters()) {
    const auto& src = ckpt.get(p.name);
    if (src.shape() != p.tensor.shape()) {
      throw DimensionError("checkpoint tensor '" + p.name + "' has shape " + shape_str(src.shape()) + ", model expects " +
                           shape_str(p.tensor.shape()));
    }
    Tensor shared = p.tensor;
    auto dst = shared.mutable_data();
    std::copy(src.data().begin(), src.data().end(), dst.begin());
  }
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.config) throw FormatError("checkpoint carries no model config");
  Model m(*ckpt.config);
  load_model_parameters(m, ckpt);
  return m;
}

}  // namespace yoloe
