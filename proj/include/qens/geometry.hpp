#pragma once

#include <array>
#include <cstddef>
#include <string_view>

#include <Eigen/Core>

namespace qens {

// Normalized center/size (the decoder's native output) or absolute pixel
// corners (what COCO files and PDQ consume).
enum class BoxFormat { kCxCyWh, kXyXy };

std::string_view to_string(BoxFormat f);

struct ImageSize {
  double width = 0.0;
  double height = 0.0;
};

// Axis-aligned box. Construction validates: positive extent, and for
// kCxCyWh every coordinate in [0,1]. Zero-area boxes are rejected.
class Box {
 public:
  using Coords = std::array<double, 4>;

  static Box cxcywh(double cx, double cy, double w, double h);
  static Box xyxy(double x1, double y1, double x2, double y2);
  static Box make(BoxFormat format, const Coords& c);

  BoxFormat format() const { return format_; }
  const Coords& coords() const { return c_; }
  double operator[](std::size_t i) const { return c_[i]; }

  // (x1, y1, x2, y2) in the box's own units.
  Coords corners() const;
  double area() const;

  friend bool operator==(const Box&, const Box&) = default;

 private:
  Box(BoxFormat format, const Coords& c) : format_(format), c_(c) {}

  BoxFormat format_;
  Coords c_;
};

// Symmetric PSD 4x4 covariance over the coordinates of a Box of the same
// format (normalized^2 or pixel^2).
class BoxCovariance {
 public:
  static constexpr double kSymmetryTol = 1e-9;
  static constexpr double kEigenTol = 1e-9;

  static BoxCovariance zero(BoxFormat format);
  // Throws CovarianceError when `m` is asymmetric or has a negative eigenvalue
  // beyond tolerance.
  static BoxCovariance checked(BoxFormat format, const Eigen::Matrix4d& m);

  BoxFormat format() const { return format_; }
  const Eigen::Matrix4d& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

 private:
  BoxCovariance(BoxFormat format, const Eigen::Matrix4d& m) : format_(format), m_(m) {}

  BoxFormat format_;
  Eigen::Matrix4d m_;
};

// Closed-interval IoU: boxes sharing only an edge give 0.
double iou(const Box& a, const Box& b);

Box convert(const Box& box, BoxFormat target, ImageSize image);

// Jacobian of the (linear) map from `from` coordinates to `to` coordinates.
Eigen::Matrix4d conversion_jacobian(BoxFormat from, BoxFormat to, ImageSize image);

// J * cov * J^T. `box` fixes the source format and must agree with `cov`.
BoxCovariance covariance_convert(const BoxCovariance& cov, const Box& box, BoxFormat target,
                                 ImageSize image);

}  // namespace qens
