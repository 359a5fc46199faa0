#include "qens/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qens/errors.hpp"

namespace qens {
namespace {

void require_members(const Cluster& c) {
  if (c.members.empty()) throw ClusterError("cannot aggregate an empty cluster");
}

std::vector<double> member_weights(const Cluster& c) {
  std::vector<double> conf;
  conf.reserve(c.size());
  for (const auto& m : c.members) conf.push_back(m.confidence);
  return softmax_weights(conf);
}

}  // namespace

std::string_view to_string(AggregationStrategy s) {
  switch (s) {
    case AggregationStrategy::kMeanConf: return "mean_conf";
    case AggregationStrategy::kMaxConf: return "max_conf";
    case AggregationStrategy::kMaxConfScaled: return "max_conf_scaled";
  }
  return "?";
}

std::optional<AggregationStrategy> parse_strategy(std::string_view s) {
  for (auto v : {AggregationStrategy::kMeanConf, AggregationStrategy::kMaxConf,
                 AggregationStrategy::kMaxConfScaled}) {
    if (to_string(v) == s) return v;
  }
  // Short aliases used by the ablation tables.
  if (s == "mean") return AggregationStrategy::kMeanConf;
  if (s == "max") return AggregationStrategy::kMaxConf;
  if (s == "max_scaled") return AggregationStrategy::kMaxConfScaled;
  return std::nullopt;
}

double final_confidence(const Cluster& cluster, int num_groups, AggregationStrategy strategy) {
  require_members(cluster);
  if (num_groups < 1) throw ConfigurationError("number of groups must be >= 1");
  double mx = 0.0;
  double sum = 0.0;
  for (const auto& m : cluster.members) {
    mx = std::max(mx, m.confidence);
    sum += m.confidence;
  }
  switch (strategy) {
    case AggregationStrategy::kMeanConf:
      return sum / static_cast<double>(cluster.size());
    case AggregationStrategy::kMaxConf:
      return mx;
    case AggregationStrategy::kMaxConfScaled: {
      const auto n = static_cast<double>(std::min<std::size_t>(cluster.size(), num_groups));
      return n / static_cast<double>(num_groups) * mx;
    }
  }
  return mx;
}

std::vector<double> softmax_weights(std::span<const double> confidences) {
  // Confidences live in [0,1], so exp() cannot overflow: no max-shift.
  std::vector<double> w(confidences.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(confidences[i]);
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

Box aggregate_box(const Cluster& cluster) {
  require_members(cluster);
  const auto w = member_weights(cluster);
  // Weighted mean written as seed + sum_i w_i (b_i - seed): equal to the plain
  // weighted sum since the weights sum to one, and exact when all boxes agree.
  const auto& anchor = cluster.seed().box.coords();
  Box::Coords b = anchor;
  for (std::size_t i = 0; i < cluster.size(); ++i) {
    const auto& c = cluster.members[i].box.coords();
    for (int k = 0; k < 4; ++k) b[k] += w[i] * (c[k] - anchor[k]);
  }
  return Box::make(cluster.seed().box.format(), b);
}

BoxCovariance aggregate_covariance(const Cluster& cluster, const Box& mean) {
  require_members(cluster);
  const auto w = member_weights(cluster);
  const Eigen::Vector4d mu(mean.coords().data());
  Eigen::Matrix4d sigma = Eigen::Matrix4d::Zero();
  for (std::size_t i = 0; i < cluster.size(); ++i) {
    const Eigen::Vector4d dev = Eigen::Vector4d(cluster.members[i].box.coords().data()) - mu;
    sigma.noalias() += w[i] * dev * dev.transpose();
  }
  return BoxCovariance::checked(mean.format(), sigma);
}

ProbabilisticDetection aggregate_cluster(const Cluster& cluster, int num_groups,
                                         AggregationStrategy strategy, std::int64_t image_id) {
  const double conf = final_confidence(cluster, num_groups, strategy);
  const Box mean = aggregate_box(cluster);
  return ProbabilisticDetection{mean, aggregate_covariance(cluster, mean), cluster.label, conf,
                                static_cast<int>(cluster.size()), image_id};
}

std::vector<ProbabilisticDetection> aggregate_all(std::span<const Cluster> clusters, int num_groups,
                                                  AggregationStrategy strategy,
                                                  double conf_threshold, std::int64_t image_id) {
  if (num_groups < 1) throw ConfigurationError("number of groups must be >= 1");
  if (!(conf_threshold >= 0.0 && conf_threshold <= 1.0)) {
    throw ConfigurationError("confidence threshold must lie in [0,1]");
  }
  std::vector<ProbabilisticDetection> out;
  out.reserve(clusters.size());
  for (const auto& c : clusters) {
    auto d = aggregate_cluster(c, num_groups, strategy, image_id);
    if (d.confidence >= conf_threshold) out.push_back(std::move(d));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.confidence > b.confidence; });
  return out;
}

}  // namespace qens
