#include "yoloe/records.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "yoloe/image_io.hpp"

namespace yoloe {

using nlohmann::json;

std::string detection_record(const std::string& image, const Detection& det) {
  json j;
  j["image"] = image;
  j["anchor_id"] = det.anchor_id;
  j["label"] = det.label;
  j["score"] = det.score;
  j["box"] = det.box;
  j["mask_rle"] = rle_encode(det.mask);
  return j.dump();
}

void write_jsonl(std::ostream& out, const std::string& image, const std::vector<Detection>& dets) {
  for (const auto& d : dets) out << detection_record(image, d) << '\n';
}

DetectionRecord parse_detection_record(const std::string& line) {
  try {
    const auto j = json::parse(line);
    DetectionRecord r;
    r.image = j.at("image").get<std::string>();
    r.anchor_id = j.at("anchor_id").get<std::int64_t>();
    r.label = j.at("label").get<std::string>();
    r.score = j.at("score").get<double>();
    r.box = j.at("box").get<std::array<double, 4>>();
    r.mask_rle = j.at("mask_rle").get<std::vector<std::int64_t>>();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("detection record: ") + e.what());
  }
}

std::vector<VisualCue> read_visual_cues(const std::filesystem::path& path, const ModelConfig& config,
                                        std::map<int, std::string>* class_names) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open visual cues file " + path.string());
  std::vector<VisualCue> cues;
  try {
    const auto j = json::parse(f);
    if (!j.is_array()) throw FormatError("visual cues file " + path.string() + " must hold a JSON list");
    for (std::size_t i = 0; i < j.size(); ++i) {
      const auto& e = j[i];
      const std::string where = path.string() + " entry " + std::to_string(i);
      for (const auto& [k, v] : e.items()) {
        if (k != "class_id" && k != "box" && k != "mask_pgm" && k != "label") {
          throw FormatError(where + ": unknown key '" + k + "'");
        }
      }
      VisualCue cue;
      cue.class_id = e.at("class_id").get<int>();
      if (e.contains("box") == e.contains("mask_pgm")) throw FormatError(where + ": give exactly one of box, mask_pgm");
      if (e.contains("box")) {
        cue.box = e.at("box").get<std::array<float, 4>>();
      } else {
        auto mp = std::filesystem::path(e.at("mask_pgm").get<std::string>());
        if (mp.is_relative()) mp = path.parent_path() / mp;
        const BinaryMask m = read_pgm(mp);
        if (m.height != config.input_height || m.width != config.input_width) {
          throw DimensionError(where + ": mask " + mp.string() + " is " + std::to_string(m.height) + "x" +
                               std::to_string(m.width) + ", model input is " + std::to_string(config.input_height) +
                               "x" + std::to_string(config.input_width));
        }
        cue.mask = m.bits;
        cue.box = m.tight_box();
      }
      if (class_names && e.contains("label")) (*class_names)[cue.class_id] = e.at("label").get<std::string>();
      cues.push_back(std::move(cue));
    }
  } catch (const json::exception& e) {
    throw FormatError("visual cues file " + path.string() + ": " + e.what());
  }
  if (cues.empty()) throw UsageError("visual cues file " + path.string() + " holds no cues");
  return cues;
}

double parse_delta(const std::string& text) {
  if (text == "inf" || text == "+inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || std::isnan(v)) throw UsageError("not a delta value: '" + text + "'");
  return v;
}

std::vector<double> parse_delta_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_delta(item));
  if (out.empty()) throw UsageError("empty delta list");
  return out;
}

}  // namespace yoloe
