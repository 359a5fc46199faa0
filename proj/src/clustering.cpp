#include "qens/clustering.hpp"

#include <algorithm>
#include <string>

#include "qens/errors.hpp"

namespace qens {

void ClusteringParams::validate() const {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw ConfigurationError("IoU threshold must lie in (0,1], got " + std::to_string(iou_threshold));
  }
}

bool ranks_before(const Detection& a, const Detection& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  if (a.group_index != b.group_index) return a.group_index < b.group_index;
  return a.query_index < b.query_index;
}

std::vector<Detection> sort_detections(std::span<const Detection> pool) {
  std::vector<Detection> out(pool.begin(), pool.end());
  std::stable_sort(out.begin(), out.end(), ranks_before);
  return out;
}

std::vector<Cluster> bsas_cluster(std::span<const Detection> pool, const ClusteringParams& params) {
  params.validate();
  std::vector<Cluster> clusters;
  for (const auto& det : sort_detections(pool)) {
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      if (clusters[c].label != det.label) continue;
      const double o = iou(det.box, clusters[c].seed().box);
      // Strict '>' keeps the earliest cluster on ties.
      if (o >= params.iou_threshold && o > best_iou) {
        best = static_cast<int>(c);
        best_iou = o;
      }
    }
    if (best < 0) {
      clusters.push_back(Cluster{det.label, {det}});
    } else {
      clusters[best].members.push_back(det);
    }
  }
  return clusters;
}

}  // namespace qens
