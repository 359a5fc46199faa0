#include "qens/ground_truth.hpp"

#include <algorithm>

#include "qens/errors.hpp"

namespace qens {
namespace {
// Allowance for decimal round-off at the image border.
constexpr double kBorderSlack = 1e-6;
const std::vector<GroundTruthInstance> kNoInstances;
}  // namespace

bool operator==(const ImageRecord& a, const ImageRecord& b) {
  return a.id == b.id && a.size.width == b.size.width && a.size.height == b.size.height &&
         a.file_name == b.file_name;
}

bool operator==(const GroundTruthInstance& a, const GroundTruthInstance& b) {
  return a.image_id == b.image_id && a.label == b.label && a.box == b.box &&
         a.instance_id == b.instance_id;
}

void GroundTruthStore::add_image(const ImageRecord& image) {
  if (!(image.size.width > 0.0) || !(image.size.height > 0.0)) {
    throw ValidationError("image " + std::to_string(image.id) + " has non-positive size");
  }
  images_[image.id] = image;
}

void GroundTruthStore::add_category(int id, std::string name) { categories_[id] = std::move(name); }

void GroundTruthStore::add_instance(const GroundTruthInstance& gt) {
  const auto it = images_.find(gt.image_id);
  if (it == images_.end()) {
    throw ReferenceError("ground truth references unknown image_id " + std::to_string(gt.image_id));
  }
  if (gt.box.format() != BoxFormat::kXyXy) {
    throw ValidationError("ground truth boxes must be absolute xyxy");
  }
  const auto& c = gt.box.coords();
  const auto& s = it->second.size;
  if (c[0] < -kBorderSlack || c[1] < -kBorderSlack || c[2] > s.width + kBorderSlack ||
      c[3] > s.height + kBorderSlack) {
    throw ValidationError("ground truth instance " + std::to_string(gt.instance_id) +
                          " lies outside image " + std::to_string(gt.image_id));
  }
  auto& list = instances_[gt.image_id];
  // Keep per-image lists sorted by instance id: insertion order is irrelevant.
  const auto pos = std::upper_bound(list.begin(), list.end(), gt, [](const auto& a, const auto& b) {
    return a.instance_id < b.instance_id;
  });
  list.insert(pos, gt);
}

const ImageRecord& GroundTruthStore::image(std::int64_t id) const {
  const auto it = images_.find(id);
  if (it == images_.end()) throw ReferenceError("unknown image_id " + std::to_string(id));
  return it->second;
}

const std::vector<GroundTruthInstance>& GroundTruthStore::instances(std::int64_t image_id) const {
  const auto it = instances_.find(image_id);
  return it == instances_.end() ? kNoInstances : it->second;
}

std::size_t GroundTruthStore::instance_count() const {
  std::size_t n = 0;
  for (const auto& [id, list] : instances_) n += list.size();
  return n;
}

}  // namespace qens
