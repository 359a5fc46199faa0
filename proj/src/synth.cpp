#include "qens/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "qens/errors.hpp"

namespace qens {
namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  std::uint64_t out[1];
  seq.generate(reinterpret_cast<std::uint32_t*>(out), reinterpret_cast<std::uint32_t*>(out) + 2);
  return out[0];
}

// Smallest normalized extent a simulated box may shrink to: one pixel.
Box clamp_to_image(double cx, double cy, double w, double h, ImageSize image) {
  const double min_w = 1.0 / image.width;
  const double min_h = 1.0 / image.height;
  double x1 = cx - 0.5 * w, x2 = cx + 0.5 * w;
  double y1 = cy - 0.5 * h, y2 = cy + 0.5 * h;
  if (x1 >= 0.0 && y1 >= 0.0 && x2 <= 1.0 && y2 <= 1.0 && w >= min_w && h >= min_h) {
    return Box::cxcywh(cx, cy, w, h);
  }
  x1 = std::clamp(x1, 0.0, 1.0 - min_w);
  y1 = std::clamp(y1, 0.0, 1.0 - min_h);
  x2 = std::clamp(x2, x1 + min_w, 1.0);
  y2 = std::clamp(y2, y1 + min_h, 1.0);
  return Box::cxcywh(0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1);
}

}  // namespace

void SceneParams::validate() const {
  if (!(image.width > 0.0) || !(image.height > 0.0)) {
    throw ConfigurationError("scene image size must be positive");
  }
  if (min_objects < 0 || max_objects < min_objects) {
    throw ConfigurationError("object count range must satisfy 0 <= min <= max");
  }
  if (num_classes < 1) throw ConfigurationError("scene needs at least one class");
  if (!(min_box >= 1.0) || max_box < min_box) {
    throw ConfigurationError("box size range must satisfy 1 <= min <= max");
  }
  if (min_box > image.width || min_box > image.height) {
    throw ConfigurationError("minimum box size exceeds the image");
  }
  if (!(overlap_limit >= 0.0 && overlap_limit < 1.0)) {
    throw ConfigurationError("overlap limit must lie in [0,1)");
  }
}

void EnsembleNoise::validate() const {
  if (!(box_sigma >= 0.0)) throw ConfigurationError("box jitter must be >= 0");
  if (!(conf_jitter >= 0.0)) throw ConfigurationError("confidence jitter must be >= 0");
  if (!(conf_base >= 0.0 && conf_base <= 1.0)) throw ConfigurationError("confidence base outside [0,1]");
  if (!(miss_prob >= 0.0 && miss_prob <= 1.0)) throw ConfigurationError("miss probability outside [0,1]");
  if (!(fp_rate >= 0.0)) throw ConfigurationError("false-positive rate must be >= 0");
}

std::vector<GroundTruthInstance> generate_scene(const SceneParams& params, std::int64_t image_id) {
  params.validate();
  std::mt19937_64 rng(mix(params.seed, static_cast<std::uint64_t>(image_id)));
  std::uniform_int_distribution<int> count(params.min_objects, params.max_objects);
  std::uniform_int_distribution<int> label(1, params.num_classes);
  const int W = static_cast<int>(std::floor(params.image.width));
  const int H = static_cast<int>(std::floor(params.image.height));
  const int lo = static_cast<int>(std::ceil(params.min_box));
  std::uniform_int_distribution<int> bw(lo, std::max(lo, std::min(W, static_cast<int>(params.max_box))));
  std::uniform_int_distribution<int> bh(lo, std::max(lo, std::min(H, static_cast<int>(params.max_box))));

  const int n = count(rng);
  std::vector<GroundTruthInstance> out;
  for (int i = 0; i < n; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxPlacementAttempts && !placed; ++attempt) {
      const int w = bw(rng);
      const int h = bh(rng);
      const int x = std::uniform_int_distribution<int>(0, W - w)(rng);
      const int y = std::uniform_int_distribution<int>(0, H - h)(rng);
      const Box box = Box::xyxy(x, y, x + w, y + h);
      const bool ok = std::all_of(out.begin(), out.end(), [&](const auto& g) {
        return iou(box, g.box) <= params.overlap_limit;
      });
      if (ok) {
        out.push_back({image_id, label(rng), box, image_id * 100000 + i + 1});
        placed = true;
      }
    }
    if (!placed) {
      throw CapacityError("could not place object " + std::to_string(i + 1) + " of " +
                          std::to_string(n) + " after " + std::to_string(kMaxPlacementAttempts) +
                          " attempts");
    }
  }
  return out;
}

GroundTruthStore generate_dataset(const SceneParams& params, int images) {
  GroundTruthStore store;
  for (int c = 1; c <= params.num_classes; ++c) store.add_category(c, "class_" + std::to_string(c));
  for (int i = 1; i <= images; ++i) {
    store.add_image({i, params.image, "synthetic_" + std::to_string(i) + ".png"});
    for (const auto& g : generate_scene(params, i)) store.add_instance(g);
  }
  return store;
}

DetectionSetGroup simulate_ensemble(std::span<const GroundTruthInstance> gts, ImageSize image,
                                    std::int64_t image_id, int num_groups,
                                    const EnsembleNoise& noise, int num_classes) {
  noise.validate();
  if (num_groups < 1) throw ConfigurationError("ensemble needs at least one group");
  if (num_classes < 1) throw ConfigurationError("ensemble needs at least one class");

  DetectionSetGroup out;
  out.image_id = image_id;
  out.image = image;
  out.sets.resize(num_groups);
  for (int g = 1; g <= num_groups; ++g) {
    std::mt19937_64 rng(mix(mix(noise.seed, static_cast<std::uint64_t>(image_id)), g));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto& set = out.sets[g - 1];
    int query = 0;
    for (const auto& gt : gts) {
      // Draw everything up front so the stream layout does not depend on
      // whether this object is missed.
      const double miss = unit(rng);
      const double j[4] = {gauss(rng), gauss(rng), gauss(rng), gauss(rng)};
      const double jc = gauss(rng);
      if (miss < noise.miss_prob) continue;
      const Box n = convert(gt.box, BoxFormat::kCxCyWh, image);
      const double w = n[2], h = n[3];
      const double s = noise.box_sigma;
      const Box box = s == 0.0 ? n
                               : clamp_to_image(n[0] + s * w * j[0], n[1] + s * h * j[1],
                                                w + s * w * j[2], h + s * h * j[3], image);
      const double conf = std::clamp(noise.conf_base + noise.conf_jitter * jc, 0.0, 1.0);
      set.push_back({box, gt.label, conf, g, query++});
    }
    const int fps = noise.fp_rate > 0.0 ? std::poisson_distribution<int>(noise.fp_rate)(rng) : 0;
    std::uniform_real_distribution<double> size(0.05, 0.3);
    std::uniform_real_distribution<double> fp_conf(0.05, 0.5);
    std::uniform_int_distribution<int> label(1, num_classes);
    for (int f = 0; f < fps; ++f) {
      const double w = size(rng), h = size(rng);
      const double cx = 0.5 * w + unit(rng) * (1.0 - w);
      const double cy = 0.5 * h + unit(rng) * (1.0 - h);
      const int k = label(rng);
      set.push_back({clamp_to_image(cx, cy, w, h, image), k, fp_conf(rng), g, query++});
    }
  }
  return out;
}

std::vector<DetectionSetGroup> simulate_dataset(const GroundTruthStore& store, int num_groups,
                                                const EnsembleNoise& noise, int num_classes) {
  std::vector<DetectionSetGroup> out;
  for (const auto& [id, image] : store.images()) {
    out.push_back(simulate_ensemble(store.instances(id), image.size, id, num_groups, noise, num_classes));
  }
  return out;
}

}  // namespace qens
