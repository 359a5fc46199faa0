#include "qens/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "qens/errors.hpp"

namespace qens {
namespace {

// Slack for normalized coordinates produced by weighted averaging.
constexpr double kUnitSlack = 1e-9;

void check_image(ImageSize image) {
  if (!(image.width > 0.0) || !(image.height > 0.0) || !std::isfinite(image.width) ||
      !std::isfinite(image.height)) {
    throw DimensionError("image size must be positive, got " + std::to_string(image.width) + "x" +
                         std::to_string(image.height));
  }
}

}  // namespace

std::string_view to_string(BoxFormat f) {
  return f == BoxFormat::kCxCyWh ? "cxcywh" : "xyxy";
}

Box Box::make(BoxFormat format, const Coords& c) {
  for (double v : c) {
    if (!std::isfinite(v)) throw ValidationError("box coordinate is not finite");
  }
  if (format == BoxFormat::kCxCyWh) {
    if (!(c[2] > 0.0) || !(c[3] > 0.0)) throw ValidationError("cxcywh box needs w > 0 and h > 0");
    for (double v : c) {
      if (v < -kUnitSlack || v > 1.0 + kUnitSlack) {
        throw ValidationError("cxcywh coordinate outside [0,1]: " + std::to_string(v));
      }
    }
  } else if (!(c[2] > c[0]) || !(c[3] > c[1])) {
    throw ValidationError("xyxy box needs x2 > x1 and y2 > y1");
  }
  return Box(format, c);
}

Box Box::cxcywh(double cx, double cy, double w, double h) {
  return make(BoxFormat::kCxCyWh, {cx, cy, w, h});
}

Box Box::xyxy(double x1, double y1, double x2, double y2) {
  return make(BoxFormat::kXyXy, {x1, y1, x2, y2});
}

Box::Coords Box::corners() const {
  if (format_ == BoxFormat::kXyXy) return c_;
  return {c_[0] - 0.5 * c_[2], c_[1] - 0.5 * c_[3], c_[0] + 0.5 * c_[2], c_[1] + 0.5 * c_[3]};
}

double Box::area() const {
  if (format_ == BoxFormat::kCxCyWh) return c_[2] * c_[3];
  return (c_[2] - c_[0]) * (c_[3] - c_[1]);
}

BoxCovariance BoxCovariance::zero(BoxFormat format) {
  return BoxCovariance(format, Eigen::Matrix4d::Zero());
}

BoxCovariance BoxCovariance::checked(BoxFormat format, const Eigen::Matrix4d& m) {
  if (!m.allFinite()) throw CovarianceError("covariance has non-finite entries");
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol) {
    throw CovarianceError("covariance is not symmetric");
  }
  const Eigen::Matrix4d sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(sym, Eigen::EigenvaluesOnly);
  // Eigenvalue slack grows with magnitude so pixel^2 matrices are judged like
  // normalized ones.
  const double tol = kEigenTol * std::max(1.0, sym.cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -tol) {
    throw CovarianceError("covariance is not positive semi-definite (min eigenvalue " +
                          std::to_string(es.eigenvalues().minCoeff()) + ")");
  }
  return BoxCovariance(format, sym);
}

double iou(const Box& a, const Box& b) {
  if (a.format() != b.format()) {
    throw ParameterizationError("iou of " + std::string(to_string(a.format())) + " and " +
                                std::string(to_string(b.format())) + " boxes");
  }
  const auto ca = a.corners();
  const auto cb = b.corners();
  const double iw = std::min(ca[2], cb[2]) - std::max(ca[0], cb[0]);
  const double ih = std::min(ca[3], cb[3]) - std::max(ca[1], cb[1]);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

Box convert(const Box& box, BoxFormat target, ImageSize image) {
  check_image(image);
  if (box.format() == target) return box;
  const auto& c = box.coords();
  const double W = image.width;
  const double H = image.height;
  if (target == BoxFormat::kXyXy) {
    const auto k = box.corners();
    return Box::xyxy(k[0] * W, k[1] * H, k[2] * W, k[3] * H);
  }
  return Box::cxcywh((c[0] + c[2]) / (2.0 * W), (c[1] + c[3]) / (2.0 * H), (c[2] - c[0]) / W,
                     (c[3] - c[1]) / H);
}

Eigen::Matrix4d conversion_jacobian(BoxFormat from, BoxFormat to, ImageSize image) {
  check_image(image);
  if (from == to) return Eigen::Matrix4d::Identity();
  const double W = image.width;
  const double H = image.height;
  Eigen::Matrix4d j;
  if (to == BoxFormat::kXyXy) {
    j << W, 0, -0.5 * W, 0,  //
        0, H, 0, -0.5 * H,   //
        W, 0, 0.5 * W, 0,    //
        0, H, 0, 0.5 * H;
  } else {
    j << 0.5 / W, 0, 0.5 / W, 0,  //
        0, 0.5 / H, 0, 0.5 / H,   //
        -1.0 / W, 0, 1.0 / W, 0,  //
        0, -1.0 / H, 0, 1.0 / H;
  }
  return j;
}

BoxCovariance covariance_convert(const BoxCovariance& cov, const Box& box, BoxFormat target,
                                 ImageSize image) {
  if (cov.format() != box.format()) {
    throw ParameterizationError("covariance and box formats differ");
  }
  // Re-validate: the input may have been built from an unchecked source.
  BoxCovariance::checked(cov.format(), cov.matrix());
  const Eigen::Matrix4d j = conversion_jacobian(box.format(), target, image);
  const Eigen::Matrix4d out = j * cov.matrix() * j.transpose();
  return BoxCovariance::checked(target, 0.5 * (out + out.transpose()));
}

}  // namespace qens
