#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "qens/aggregation.hpp"
#include "qens/ground_truth.hpp"

namespace qens {

// ---------------------------------------------------------------------------
// Linear assignment

struct Assignment {
  std::vector<int> row_to_col;  // -1 when the row is unassigned
  double total_cost = 0.0;
};

// Minimum-cost assignment (Kuhn-Munkres with potentials, O(n^3)). Rectangular
// matrices are zero-padded to square; padded pairs are reported as -1.
Assignment hungarian_assign(const Eigen::MatrixXd& cost);

// ---------------------------------------------------------------------------
// Shared evaluation plumbing

// A detection moved into absolute-pixel xyxy via its image's size.
ProbabilisticDetection to_absolute(const ProbabilisticDetection& det, const GroundTruthStore& gts);

// ---------------------------------------------------------------------------
// COCO-style mAP

struct MapResult {
  double map = 0.0;                 // mean over classes and IoU thresholds
  double ap50 = 0.0;                // mean over classes at IoU 0.50
  std::map<int, double> per_class;  // mean over thresholds, classes with GT only
  std::vector<double> iou_thresholds;
};

// Greedy confidence-ordered matching at IoU 0.50:0.05:0.95, 101-point
// interpolated AP. Throws DataError for detections on unknown images.
MapResult compute_map(std::span<const ProbabilisticDetection> dets, const GroundTruthStore& gts);

// ---------------------------------------------------------------------------
// Detection expected calibration error

struct ReliabilityBin {
  double lo = 0.0;
  double hi = 0.0;
  double mean_confidence = 0.0;
  double precision = 0.0;
  std::size_t count = 0;
};

struct DeceOptions {
  int bins = 10;
  double conf_threshold = 0.3;
  double match_iou = 0.5;
};

struct DeceResult {
  double dece = 0.0;
  std::vector<ReliabilityBin> bins;
  std::size_t samples = 0;
  bool no_samples() const { return samples == 0; }
};

DeceResult compute_dece(std::span<const ProbabilisticDetection> dets, const GroundTruthStore& gts,
                        const DeceOptions& options = {});

// ---------------------------------------------------------------------------
// Probabilistic detection quality (box ground truth)

struct PdqOptions {
  double conf_threshold = 0.3;
  // Per-corner-coordinate standard deviation floor, pixels.
  double epsilon = 1.0;
  // Heatmap probabilities below this are treated as zero.
  double heatmap_threshold = 0.0027;
};

struct PdqCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

struct PdqResult {
  double pdq = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double mean_spatial = 0.0;  // over true positives
  double mean_label = 0.0;
  double mean_pairwise = 0.0;
  double total_pairwise = 0.0;
  // TP/FN keyed by ground-truth class, FP by detection class.
  std::map<int, PdqCounts> per_class;
};

// P(X <= a, Y <= b) for standard bivariate normal with correlation rho.
double bivariate_normal_cdf(double a, double b, double rho);

// Spatial quality of one detection (absolute xyxy, covariance present) against
// one ground-truth box, on the pixel grid of `image`.
double spatial_quality(const ProbabilisticDetection& det, const Box& gt_box, ImageSize image,
                       const PdqOptions& options = {});

PdqResult compute_pdq(std::span<const ProbabilisticDetection> dets, const GroundTruthStore& gts,
                      const PdqOptions& options = {});

// ---------------------------------------------------------------------------
// Report

struct EvalReport {
  MapResult map;
  DeceResult dece;
  PdqResult pdq;
  std::size_t detections = 0;
  std::size_t ground_truths = 0;
  std::map<int, std::size_t> gt_per_class;

  nlohmann::json to_json() const;
  // lo,hi,mean_conf,precision,count
  std::string reliability_csv() const;
};

struct EvalOptions {
  DeceOptions dece;
  PdqOptions pdq;
};

EvalReport evaluate(std::span<const ProbabilisticDetection> dets, const GroundTruthStore& gts,
                    const EvalOptions& options = {});

}  // namespace qens
