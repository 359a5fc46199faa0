#pragma once

#include <span>
#include <vector>

#include "qens/detection.hpp"

namespace qens {

struct ClusteringParams {
  double iou_threshold = 0.7;

  void validate() const;  // 0 < iou_threshold <= 1, else ConfigurationError
};

// Detections judged to cover one object. members[0] is the seed: the highest
// confidence member, whose box every later member was matched against.
struct Cluster {
  int label = 1;
  std::vector<Detection> members;

  const Detection& seed() const { return members.front(); }
  std::size_t size() const { return members.size(); }
};

// Strict weak order used everywhere detections are ranked: confidence
// descending, then group_index, then query_index ascending.
bool ranks_before(const Detection& a, const Detection& b);

std::vector<Detection> sort_detections(std::span<const Detection> pool);

// Sequential clustering of the confidence-sorted pool. Each detection joins the
// same-label cluster whose seed box it overlaps most (IoU >= threshold, ties
// to the earliest cluster) or opens a new cluster. No per-group uniqueness.
std::vector<Cluster> bsas_cluster(std::span<const Detection> pool, const ClusteringParams& params);

}  // namespace qens
