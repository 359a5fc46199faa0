#include <algorithm>
#include <numeric>
#include <set>

#include "qens/metrics.hpp"

namespace qens {
namespace {

constexpr int kRecallPoints = 101;

std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

// AP of one class at one IoU threshold. `dets` are already in ranking order.
double class_ap(const std::vector<const ProbabilisticDetection*>& dets, const GroundTruthStore& gts,
                int label, std::size_t num_gt, double threshold) {
  std::map<std::int64_t, std::vector<char>> matched;
  std::vector<double> precision;
  std::vector<double> recall;
  precision.reserve(dets.size());
  recall.reserve(dets.size());
  std::size_t tp = 0;
  std::size_t fp = 0;

  for (const auto* d : dets) {
    const auto& gt = gts.instances(d->image_id);
    auto& used = matched[d->image_id];
    used.resize(gt.size(), 0);
    int best = -1;
    double best_iou = std::min(threshold, 1.0 - 1e-10);
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (gt[j].label != label || used[j]) continue;
      const double o = iou(d->box, gt[j].box);
      if (o < best_iou) continue;
      best_iou = o;
      best = static_cast<int>(j);
    }
    if (best >= 0) {
      used[best] = 1;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
  }

  // Monotone precision envelope, then sample at fixed recall points.
  for (std::size_t i = precision.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double sum = 0.0;
  for (int r = 0; r < kRecallPoints; ++r) {
    const double level = static_cast<double>(r) / (kRecallPoints - 1);
    const auto it = std::lower_bound(recall.begin(), recall.end(), level);
    if (it != recall.end()) sum += precision[it - recall.begin()];
  }
  return sum / kRecallPoints;
}

}  // namespace

MapResult compute_map(std::span<const ProbabilisticDetection> dets, const GroundTruthStore& gts) {
  std::vector<ProbabilisticDetection> abs;
  abs.reserve(dets.size());
  for (const auto& d : dets) abs.push_back(to_absolute(d, gts));

  std::map<int, std::size_t> gt_count;
  for (const auto& [id, image] : gts.images()) {
    for (const auto& g : gts.instances(id)) ++gt_count[g.label];
  }

  MapResult result;
  result.iou_thresholds = coco_iou_thresholds();
  if (gt_count.empty()) return result;

  std::vector<double> per_threshold(result.iou_thresholds.size(), 0.0);
  for (const auto& [label, n] : gt_count) {
    std::vector<const ProbabilisticDetection*> ranked;
    for (const auto& d : abs) {
      if (d.label == label) ranked.push_back(&d);
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto* a, const auto* b) { return a->confidence > b->confidence; });
    double class_sum = 0.0;
    for (std::size_t t = 0; t < result.iou_thresholds.size(); ++t) {
      const double ap = class_ap(ranked, gts, label, n, result.iou_thresholds[t]);
      class_sum += ap;
      per_threshold[t] += ap;
    }
    result.per_class[label] = class_sum / static_cast<double>(result.iou_thresholds.size());
  }
  const auto classes = static_cast<double>(gt_count.size());
  result.ap50 = per_threshold[0] / classes;
  result.map = std::accumulate(per_threshold.begin(), per_threshold.end(), 0.0) /
               (classes * static_cast<double>(per_threshold.size()));
  return result;
}

}  // namespace qens
