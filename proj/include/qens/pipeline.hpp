#pragma once

#include <span>
#include <vector>

#include "qens/aggregation.hpp"
#include "qens/clustering.hpp"
#include "qens/detection.hpp"

namespace qens {

struct PipelineOptions {
  ClusteringParams clustering;
  AggregationStrategy strategy = AggregationStrategy::kMaxConfScaled;
  double conf_threshold = 0.3;
};

// Pool every set, cluster, aggregate. G for the support scaling is the number
// of sets in `sets`.
std::vector<ProbabilisticDetection> cluster_and_aggregate(const DetectionSetGroup& sets,
                                                          const PipelineOptions& options);

// Same, per image, in input order. `threads` > 1 processes images concurrently.
std::vector<ProbabilisticDetection> cluster_and_aggregate(std::span<const DetectionSetGroup> images,
                                                          const PipelineOptions& options,
                                                          int threads = 1);

// Keeps only the first `groups` sets (at least one) of each image.
DetectionSetGroup first_groups(const DetectionSetGroup& sets, int groups);

}  // namespace qens
