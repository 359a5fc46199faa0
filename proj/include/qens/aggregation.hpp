#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "qens/clustering.hpp"

namespace qens {

// Final detection with semantic (confidence) and spatial (covariance)
// uncertainty. Box and covariance share one format.
struct ProbabilisticDetection {
  Box box = Box::cxcywh(0.5, 0.5, 1.0, 1.0);
  BoxCovariance covariance = BoxCovariance::zero(BoxFormat::kCxCyWh);
  int label = 1;
  double confidence = 0.0;
  int support = 1;
  std::int64_t image_id = 0;
};

enum class AggregationStrategy { kMeanConf, kMaxConf, kMaxConfScaled };

std::string_view to_string(AggregationStrategy s);
std::optional<AggregationStrategy> parse_strategy(std::string_view s);

// kMaxConfScaled: min(|C|, G) / G * max c_i.
double final_confidence(const Cluster& cluster, int num_groups, AggregationStrategy strategy);

// exp(c_i) / sum_j exp(c_j) over raw confidences.
std::vector<double> softmax_weights(std::span<const double> confidences);

Box aggregate_box(const Cluster& cluster);
// sum_i w_i (b_i - mean)(b_i - mean)^T in cxcywh.
BoxCovariance aggregate_covariance(const Cluster& cluster, const Box& mean);

ProbabilisticDetection aggregate_cluster(const Cluster& cluster, int num_groups,
                                         AggregationStrategy strategy, std::int64_t image_id = 0);

// One output per cluster, dropping confidence < conf_threshold, sorted by
// confidence descending (stable).
std::vector<ProbabilisticDetection> aggregate_all(std::span<const Cluster> clusters, int num_groups,
                                                  AggregationStrategy strategy,
                                                  double conf_threshold, std::int64_t image_id = 0);

}  // namespace qens
