#include "qens/pipeline.hpp"

#include <algorithm>
#include <future>

#include "qens/errors.hpp"

namespace qens {

std::vector<ProbabilisticDetection> cluster_and_aggregate(const DetectionSetGroup& sets,
                                                          const PipelineOptions& options) {
  const auto pool = sets.pooled();
  const auto clusters = bsas_cluster(pool, options.clustering);
  return aggregate_all(clusters, std::max(1, sets.num_groups()), options.strategy,
                       options.conf_threshold, sets.image_id);
}

std::vector<ProbabilisticDetection> cluster_and_aggregate(std::span<const DetectionSetGroup> images,
                                                          const PipelineOptions& options,
                                                          int threads) {
  std::vector<std::vector<ProbabilisticDetection>> per_image(images.size());
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, images.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < images.size(); ++i) per_image[i] = cluster_and_aggregate(images[i], options);
  } else {
    std::vector<std::future<void>> jobs;
    for (std::size_t w = 0; w < workers; ++w) {
      jobs.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t i = w; i < images.size(); i += workers) {
          per_image[i] = cluster_and_aggregate(images[i], options);
        }
      }));
    }
    for (auto& j : jobs) j.get();
  }
  std::vector<ProbabilisticDetection> out;
  for (auto& v : per_image) out.insert(out.end(), v.begin(), v.end());
  return out;
}

DetectionSetGroup first_groups(const DetectionSetGroup& sets, int groups) {
  if (groups < 1) throw ConfigurationError("need at least one group");
  DetectionSetGroup out = sets;
  if (static_cast<int>(out.sets.size()) > groups) out.sets.resize(groups);
  return out;
}

}  // namespace qens
