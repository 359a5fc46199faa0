#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qens/detection.hpp"
#include "qens/ground_truth.hpp"

namespace qens {

struct SceneParams {
  ImageSize image{320.0, 240.0};
  int min_objects = 3;
  int max_objects = 8;
  int num_classes = 3;
  double min_box = 16.0;  // pixels, both sides
  double max_box = 96.0;
  double overlap_limit = 0.3;  // max pairwise ground-truth IoU, in [0,1)
  std::uint64_t seed = 0;

  void validate() const;  // ConfigurationError
};

// Box jitter is relative to each box's own width/height.
struct EnsembleNoise {
  double box_sigma = 0.05;
  double conf_base = 0.8;
  double conf_jitter = 0.1;  // Gaussian std around conf_base
  double miss_prob = 0.1;    // per group and object
  double fp_rate = 0.5;      // Poisson mean per group
  std::uint64_t seed = 0;

  void validate() const;
};

constexpr int kMaxPlacementAttempts = 10000;

// Integer-pixel xyxy boxes with pairwise IoU <= overlap_limit. Throws
// CapacityError when an object cannot be placed in kMaxPlacementAttempts.
std::vector<GroundTruthInstance> generate_scene(const SceneParams& params,
                                                std::int64_t image_id = 0);

// `images` scenes with ids 1..images, seeds derived from params.seed.
GroundTruthStore generate_dataset(const SceneParams& params, int images);

// G simulated detection sets over one image's ground truth. Each group draws
// from its own stream keyed by (seed, image_id, group), so group g is the
// same whatever G is.
DetectionSetGroup simulate_ensemble(std::span<const GroundTruthInstance> gts, ImageSize image,
                                    std::int64_t image_id, int num_groups,
                                    const EnsembleNoise& noise, int num_classes);

std::vector<DetectionSetGroup> simulate_dataset(const GroundTruthStore& store, int num_groups,
                                                const EnsembleNoise& noise, int num_classes);

}  // namespace qens
