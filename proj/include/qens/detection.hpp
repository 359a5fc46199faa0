#pragma once

#include <cstdint>
#include <vector>

#include "qens/geometry.hpp"

namespace qens {

// One raw prediction from one query of one group. `box` is normalized
// cxcywh; `group_index` is 1-based, `query_index` 0-based within the group.
struct Detection {
  Box box;
  int label = 1;
  double confidence = 0.0;
  int group_index = 1;
  int query_index = 0;
};

// The G per-group detection sets produced for one image by one pass.
struct DetectionSetGroup {
  std::int64_t image_id = 0;
  ImageSize image{1.0, 1.0};
  std::vector<std::vector<Detection>> sets;

  int num_groups() const { return static_cast<int>(sets.size()); }
  std::size_t total() const;
  // All sets concatenated in group order.
  std::vector<Detection> pooled() const;
};

}  // namespace qens
