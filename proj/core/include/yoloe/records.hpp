#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "yoloe/inference.hpp"
#include "yoloe/savpe.hpp"

namespace yoloe {

/// One detection as a single-line JSON object:
///   {"image":..., "anchor_id":..., "label":..., "score":..., "box":[x1,y1,x2,y2], "mask_rle":[...]}
/// mask_rle holds the run lengths of rle_encode over the full image.
std::string detection_record(const std::string& image, const Detection& det);
void write_jsonl(std::ostream& out, const std::string& image, const std::vector<Detection>& dets);

struct DetectionRecord {
  std::string image;
  std::int64_t anchor_id = 0;
  std::string label;
  double score = 0;
  std::array<double, 4> box{};
  std::vector<std::int64_t> mask_rle;
};
DetectionRecord parse_detection_record(const std::string& line);

/// Visual cues file: a JSON list of {"class_id": int, "box": [x1,y1,x2,y2]}
/// or {"class_id": int, "mask_pgm": path}, each optionally with "label".
/// Mask paths resolve against the file's directory and must match the model
/// input size. Labels found are stored in `class_names`.
std::vector<VisualCue> read_visual_cues(const std::filesystem::path& path, const ModelConfig& config,
                                        std::map<int, std::string>* class_names = nullptr);

/// A decimal number or one of "inf", "+inf", "-inf".
double parse_delta(const std::string& text);
/// Comma-separated parse_delta values.
std::vector<double> parse_delta_list(const std::string& text);

}  // namespace yoloe
