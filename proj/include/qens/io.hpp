#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qens/aggregation.hpp"
#include "qens/detection.hpp"
#include "qens/ground_truth.hpp"

namespace qens {

// Throws DataError when the file is missing or not valid JSON.
nlohmann::json read_json_file(const std::string& path);
// Writes to a sibling temp file, then renames over `path`.
void write_text_atomic(const std::string& text, const std::string& path);
void write_json_atomic(const nlohmann::json& j, const std::string& path);

// Round to 12 significant decimal digits (the on-disk precision).
double round_sig12(double v);

// --- COCO ground truth ---------------------------------------------------

GroundTruthStore parse_coco_gt(const nlohmann::json& j);
GroundTruthStore load_coco_gt(const std::string& path);
nlohmann::json coco_gt_json(const GroundTruthStore& store);
void save_coco_gt(const GroundTruthStore& store, const std::string& path);

// --- Probabilistic detections --------------------------------------------
//
// {"detections": [{image_id, category_id, bbox: [x, y, w, h] pixels, score,
//   support, covariance: 16 numbers row-major, xyxy pixel^2}]}

using ImageSizes = std::map<std::int64_t, ImageSize>;

ImageSizes image_sizes(const GroundTruthStore& store);

// cxcywh detections are converted with `sizes`; xyxy ones are written as-is.
nlohmann::json prob_detections_json(std::span<const ProbabilisticDetection> dets,
                                    const ImageSizes& sizes);
std::vector<ProbabilisticDetection> parse_prob_detections(const nlohmann::json& j);
void save_prob_detections(std::span<const ProbabilisticDetection> dets, const ImageSizes& sizes,
                          const std::string& path);
// Returned detections are absolute xyxy with xyxy covariance.
std::vector<ProbabilisticDetection> load_prob_detections(const std::string& path);

// --- Raw ensemble detections ---------------------------------------------
//
// {"num_groups": G, "images": [{image_id, width, height, detections:
//   [{group, query, category_id, bbox: [x, y, w, h] pixels, score}]}]}

nlohmann::json ensemble_json(std::span<const DetectionSetGroup> images);
std::vector<DetectionSetGroup> parse_ensemble(const nlohmann::json& j);
void save_ensemble(std::span<const DetectionSetGroup> images, const std::string& path);
std::vector<DetectionSetGroup> load_ensemble(const std::string& path);

}  // namespace qens
