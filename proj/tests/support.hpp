#pragma once

// Hand-rolled generators and straight-line reference implementations used by
// the unit and acceptance tests. Nothing here calls into the code under test
// except for value types (Box, Detection, ...).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "qens/aggregation.hpp"
#include "qens/clustering.hpp"
#include "qens/detection.hpp"
#include "qens/geometry.hpp"
#include "qens/ground_truth.hpp"

namespace qtest {

using qens::Box;
using qens::Detection;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }
  std::mt19937_64& engine() { return rng_; }

  // Normalized cxcywh box fully inside the unit square.
  Box cxcywh_box(double min_side = 0.02, double max_side = 0.5) {
    const double w = uniform(min_side, max_side);
    const double h = uniform(min_side, max_side);
    return Box::cxcywh(uniform(w / 2, 1 - w / 2), uniform(h / 2, 1 - h / 2), w, h);
  }

  Box xyxy_box(double width, double height, double min_side = 1.0) {
    const double x1 = uniform(0, width - min_side);
    const double y1 = uniform(0, height - min_side);
    return Box::xyxy(x1, y1, uniform(x1 + min_side, width), uniform(y1 + min_side, height));
  }

  // Small jitter of `b`, kept valid.
  Box near(const Box& b, double scale) {
    for (;;) {
      const double w = b[2] * (1 + uniform(-scale, scale));
      const double h = b[3] * (1 + uniform(-scale, scale));
      const double cx = b[0] + uniform(-scale, scale) * b[2];
      const double cy = b[1] + uniform(-scale, scale) * b[3];
      if (cx - w / 2 >= 0 && cx + w / 2 <= 1 && cy - h / 2 >= 0 && cy + h / 2 <= 1 && w > 0 && h > 0) {
        return Box::cxcywh(cx, cy, w, h);
      }
    }
  }

  // Pool of detections drawn around a few anchors so that clusters form.
  // Confidences are quantized to force ties.
  std::vector<Detection> pool(int max_size, int classes = 2, int groups = 5) {
    const int n = integer(0, max_size);
    std::vector<Box> anchors;
    for (int i = 0, k = integer(1, 4); i < k; ++i) anchors.push_back(cxcywh_box(0.1, 0.4));
    std::vector<Detection> out;
    for (int i = 0; i < n; ++i) {
      const Box& a = anchors[integer(0, static_cast<int>(anchors.size()) - 1)];
      Detection d{coin(0.2) ? a : near(a, 0.15), integer(1, classes),
                  std::round(uniform(0, 1) * 20) / 20, integer(1, groups), i};
      out.push_back(d);
    }
    return out;
  }

  Eigen::Matrix4d psd(double scale = 1.0) {
    Eigen::Matrix4d a;
    for (int i = 0; i < 16; ++i) a.data()[i] = uniform(-scale, scale);
    const int rank = integer(0, 4);
    Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
    for (int r = 0; r < rank; ++r) m += a.col(r) * a.col(r).transpose();
    return m;
  }

 private:
  std::mt19937_64 rng_;
};

// ---------------------------------------------------------------------------
// Reference IoU (closed intervals), on raw corner arrays.

inline double ref_iou_corners(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  const double iw = std::max(0.0, std::min(a[2], b[2]) - std::max(a[0], b[0]));
  const double ih = std::max(0.0, std::min(a[3], b[3]) - std::max(a[1], b[1]));
  const double inter = iw * ih;
  const double ua = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
  return ua > 0 ? inter / ua : 0.0;
}

inline std::array<double, 4> corners_of(const Box& b) {
  if (b.format() == qens::BoxFormat::kXyXy) return b.coords();
  return {b[0] - b[2] / 2, b[1] - b[3] / 2, b[0] + b[2] / 2, b[1] + b[3] / 2};
}

// ---------------------------------------------------------------------------
// Reference BSAS: O(n^2) selection sort, then a literal scan over clusters.

struct RefCluster {
  int label;
  std::vector<Detection> members;
};

inline bool ref_before(const Detection& a, const Detection& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  if (a.group_index != b.group_index) return a.group_index < b.group_index;
  return a.query_index < b.query_index;
}

inline std::vector<RefCluster> ref_bsas(std::vector<Detection> pool, double theta) {
  for (std::size_t i = 0; i < pool.size(); ++i) {
    std::size_t best = i;
    for (std::size_t j = i + 1; j < pool.size(); ++j) {
      if (ref_before(pool[j], pool[best])) best = j;
    }
    std::swap(pool[i], pool[best]);
  }
  std::vector<RefCluster> clusters;
  for (const auto& d : pool) {
    int chosen = -1;
    double chosen_iou = -1.0;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      if (clusters[c].label != d.label) continue;
      const double o = ref_iou_corners(corners_of(clusters[c].members[0].box), corners_of(d.box));
      if (o >= theta && o > chosen_iou) {
        chosen = static_cast<int>(c);
        chosen_iou = o;
      }
    }
    if (chosen < 0) {
      clusters.push_back({d.label, {d}});
    } else {
      clusters[chosen].members.push_back(d);
    }
  }
  return clusters;
}

// ---------------------------------------------------------------------------
// Brute-force aggregation: explicit sums with long double accumulation.

struct RefAggregate {
  std::array<double, 4> mean;
  Eigen::Matrix4d cov;
  std::vector<double> weights;
};

inline RefAggregate ref_aggregate(const std::vector<Detection>& members) {
  long double denom = 0;
  for (const auto& m : members) denom += std::exp(static_cast<long double>(m.confidence));
  RefAggregate r;
  for (const auto& m : members) {
    r.weights.push_back(static_cast<double>(std::exp(static_cast<long double>(m.confidence)) / denom));
  }
  for (int k = 0; k < 4; ++k) {
    long double s = 0;
    for (std::size_t i = 0; i < members.size(); ++i) s += r.weights[i] * static_cast<long double>(members[i].box[k]);
    r.mean[k] = static_cast<double>(s);
  }
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      long double s = 0;
      for (std::size_t i = 0; i < members.size(); ++i) {
        s += r.weights[i] * (static_cast<long double>(members[i].box[a]) - r.mean[a]) *
             (static_cast<long double>(members[i].box[b]) - r.mean[b]);
      }
      r.cov(a, b) = static_cast<double>(s);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Assignment by permutation enumeration (square or rectangular).

inline double brute_assignment_cost(const Eigen::MatrixXd& cost) {
  const int r = static_cast<int>(cost.rows());
  const int c = static_cast<int>(cost.cols());
  const int n = std::max(r, c);
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0;
    for (int i = 0; i < r; ++i) {
      if (perm[i] < c) s += cost(i, perm[i]);
    }
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// ---------------------------------------------------------------------------
// Brute-force COCO-style AP: explicit PR curve, then for each of 101 recall
// points the max precision at recall >= r.

struct RefDet {
  std::int64_t image;
  int label;
  std::array<double, 4> xyxy;
  double score;
};

struct RefGt {
  std::int64_t image;
  int label;
  std::array<double, 4> xyxy;
};

inline double ref_ap(const std::vector<RefDet>& dets, const std::vector<RefGt>& gts, int label,
                     double thr) {
  std::vector<RefDet> d;
  for (const auto& x : dets) {
    if (x.label == label) d.push_back(x);
  }
  std::vector<RefGt> g;
  for (const auto& x : gts) {
    if (x.label == label) g.push_back(x);
  }
  if (g.empty()) return -1.0;
  std::stable_sort(d.begin(), d.end(), [](const RefDet& a, const RefDet& b) { return a.score > b.score; });
  std::vector<bool> used(g.size(), false);
  std::vector<double> prec, rec;
  int tp = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    int best = -1;
    double best_iou = std::min(thr, 1 - 1e-10);
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (used[j] || g[j].image != d[i].image) continue;
      const double o = ref_iou_corners(d[i].xyxy, g[j].xyxy);
      if (o >= best_iou) {
        best_iou = o;
        best = static_cast<int>(j);
      }
    }
    if (best >= 0) {
      used[best] = true;
      ++tp;
    }
    prec.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    rec.push_back(static_cast<double>(tp) / static_cast<double>(g.size()));
  }
  double sum = 0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    double p = 0;
    for (std::size_t i = 0; i < prec.size(); ++i) {
      if (rec[i] >= r) p = std::max(p, prec[i]);
    }
    sum += p;
  }
  return sum / 101.0;
}

inline double ref_map(const std::vector<RefDet>& dets, const std::vector<RefGt>& gts) {
  std::vector<int> labels;
  for (const auto& g : gts) labels.push_back(g.label);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  if (labels.empty()) return 0.0;
  double total = 0;
  int count = 0;
  for (int t = 0; t < 10; ++t) {
    const double thr = 0.5 + 0.05 * t;
    for (int l : labels) {
      total += ref_ap(dets, gts, l, thr);
      ++count;
    }
  }
  return total / count;
}

// ---------------------------------------------------------------------------
// Bivariate normal CDF by adaptive Simpson over the conditional form
// P = int_{-inf}^{a} phi(x) Phi((b - rho x) / sqrt(1 - rho^2)) dx.

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double ref_bvn_cdf(double a, double b, double rho) {
  const double s = std::sqrt(1 - rho * rho);
  auto f = [&](double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2 * M_PI) * std_normal_cdf((b - rho * x) / s);
  };
  const double lo = -10.0;
  const int n = 20000;
  const double h = (a - lo) / n;
  double sum = f(lo) + f(a);
  for (int i = 1; i < n; ++i) sum += f(lo + i * h) * (i % 2 ? 4 : 2);
  return sum * h / 3;
}

}  // namespace qtest
