#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qens/geometry.hpp"

namespace qens {

// Box is absolute-pixel xyxy.
struct GroundTruthInstance {
  std::int64_t image_id = 0;
  int label = 1;
  Box box;
  std::int64_t instance_id = 0;
};

struct ImageRecord {
  std::int64_t id = 0;
  ImageSize size;
  std::string file_name;
};

// Ground truth keyed by image id. Images and categories iterate in id order,
// so every reduction over the store is reproducible.
class GroundTruthStore {
 public:
  void add_image(const ImageRecord& image);
  void add_category(int id, std::string name);
  // Throws ReferenceError for an unknown image id, ValidationError for a
  // non-xyxy box or a box outside the image.
  void add_instance(const GroundTruthInstance& gt);

  bool has_image(std::int64_t id) const { return images_.count(id) != 0; }
  const ImageRecord& image(std::int64_t id) const;
  const std::map<std::int64_t, ImageRecord>& images() const { return images_; }
  const std::map<int, std::string>& categories() const { return categories_; }
  const std::vector<GroundTruthInstance>& instances(std::int64_t image_id) const;
  std::size_t instance_count() const;

  friend bool operator==(const GroundTruthStore&, const GroundTruthStore&) = default;

 private:
  std::map<std::int64_t, ImageRecord> images_;
  std::map<int, std::string> categories_;
  std::map<std::int64_t, std::vector<GroundTruthInstance>> instances_;
};

bool operator==(const ImageRecord& a, const ImageRecord& b);
bool operator==(const GroundTruthInstance& a, const GroundTruthInstance& b);

}  // namespace qens
