#include "qens/metrics.hpp"

namespace qens {

ProbabilisticDetection to_absolute(const ProbabilisticDetection& det, const GroundTruthStore& gts) {
  if (det.box.format() == BoxFormat::kXyXy && det.covariance.format() == BoxFormat::kXyXy) {
    gts.image(det.image_id);  // still reject unknown images
    return det;
  }
  const ImageSize size = gts.image(det.image_id).size;
  ProbabilisticDetection out = det;
  out.covariance = covariance_convert(det.covariance, det.box, BoxFormat::kXyXy, size);
  out.box = convert(det.box, BoxFormat::kXyXy, size);
  return out;
}

}  // namespace qens
