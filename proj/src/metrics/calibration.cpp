#include <algorithm>
#include <cmath>

#include "qens/errors.hpp"
#include "qens/metrics.hpp"

namespace qens {

DeceResult compute_dece(std::span<const ProbabilisticDetection> dets, const GroundTruthStore& gts,
                        const DeceOptions& options) {
  if (options.bins < 1) throw ConfigurationError("D-ECE needs at least one bin");

  // Per image, kept detections in ranking order.
  std::map<std::int64_t, std::vector<ProbabilisticDetection>> by_image;
  for (const auto& d : dets) {
    if (d.confidence >= options.conf_threshold) by_image[d.image_id].push_back(to_absolute(d, gts));
  }

  const int B = options.bins;
  std::vector<double> conf_sum(B, 0.0);
  std::vector<std::size_t> tp(B, 0), count(B, 0);
  std::size_t total = 0;

  for (auto& [image_id, list] : by_image) {
    std::stable_sort(list.begin(), list.end(),
                     [](const auto& a, const auto& b) { return a.confidence > b.confidence; });
    const auto& gt = gts.instances(image_id);
    std::vector<char> used(gt.size(), 0);
    for (const auto& d : list) {
      int best = -1;
      double best_iou = options.match_iou;
      for (std::size_t j = 0; j < gt.size(); ++j) {
        if (used[j] || gt[j].label != d.label) continue;
        const double o = iou(d.box, gt[j].box);
        if (o >= best_iou && (best < 0 || o > best_iou)) {
          best_iou = o;
          best = static_cast<int>(j);
        }
      }
      if (best >= 0) used[best] = 1;
      const int b = std::min(B - 1, static_cast<int>(std::floor(d.confidence * B)));
      conf_sum[b] += d.confidence;
      tp[b] += best >= 0 ? 1 : 0;
      ++count[b];
      ++total;
    }
  }

  DeceResult result;
  result.samples = total;
  for (int b = 0; b < B; ++b) {
    ReliabilityBin bin;
    bin.lo = static_cast<double>(b) / B;
    bin.hi = static_cast<double>(b + 1) / B;
    bin.count = count[b];
    if (count[b] > 0) {
      const auto n = static_cast<double>(count[b]);
      bin.mean_confidence = conf_sum[b] / n;
      bin.precision = static_cast<double>(tp[b]) / n;
      result.dece += n / static_cast<double>(total) * std::abs(bin.precision - bin.mean_confidence);
    }
    result.bins.push_back(bin);
  }
  return result;
}

}  // namespace qens
