#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "qens/errors.hpp"
#include "qens/metrics.hpp"

namespace qens {
namespace {

// Clip for log() of zero heatmap probabilities.
constexpr double kTiny = 1e-14;
// Heatmap support extends this many standard deviations past the mean box.
constexpr double kSupportSigmas = 6.0;

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Genz's BVND: P(X > dh, Y > dk) for a standard bivariate normal.
double bvnd(double dh, double dk, double r) {
  static constexpr double kW[3][10] = {
      {0.1713244923791705, 0.3607615730481384, 0.4679139345726904},
      {0.04717533638651177, 0.1069393259953183, 0.1600783285433464, 0.2031674267230659,
       0.2334925365383547, 0.2491470458134029},
      {0.01761400713915212, 0.04060142980038694, 0.06267204833410906, 0.08327674157670475,
       0.1019301198172404, 0.1181945319615184, 0.1316886384491766, 0.1420961093183821,
       0.1491729864726037, 0.1527533871307259}};
  static constexpr double kX[3][10] = {
      {-0.9324695142031522, -0.6612093864662647, -0.2386191860831970},
      {-0.9815606342467191, -0.9041172563704750, -0.7699026741943050, -0.5873179542866171,
       -0.3678314989981802, -0.1252334085114692},
      {-0.9931285991850949, -0.9639719272779138, -0.9122344282513259, -0.8391169718222188,
       -0.7463319064601508, -0.6360536807265150, -0.5108670019508271, -0.3737060887154196,
       -0.2277858511416451, -0.07652652113349733}};
  constexpr double kTwoPi = 2.0 * std::numbers::pi;

  int ng = 0;
  int lg = 3;
  if (std::abs(r) >= 0.3) {
    ng = std::abs(r) < 0.75 ? 1 : 2;
    lg = std::abs(r) < 0.75 ? 6 : 10;
  }
  double h = dh;
  double k = dk;
  double hk = h * k;
  double bvn = 0.0;
  if (std::abs(r) < 0.925) {
    const double hs = (h * h + k * k) / 2.0;
    const double asr = std::asin(r);
    for (int i = 0; i < lg; ++i) {
      double sn = std::sin(asr * (kX[ng][i] + 1.0) / 2.0);
      bvn += kW[ng][i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      sn = std::sin(asr * (-kX[ng][i] + 1.0) / 2.0);
      bvn += kW[ng][i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
    }
    return bvn * asr / (2.0 * kTwoPi) + normal_cdf(-h) * normal_cdf(-k);
  }
  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  if (std::abs(r) < 1.0) {
    const double as = (1.0 - r) * (1.0 + r);
    double a = std::sqrt(as);
    const double bs = (h - k) * (h - k);
    const double c = (4.0 - hk) / 8.0;
    const double d = (12.0 - hk) / 16.0;
    bvn = a * std::exp(-(bs / as + hk) / 2.0) *
          (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
    if (hk > -160.0) {
      const double b = std::sqrt(bs);
      bvn -= std::exp(-hk / 2.0) * std::sqrt(kTwoPi) * normal_cdf(-b / a) * b *
             (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    a /= 2.0;
    for (int i = 0; i < lg; ++i) {
      double xs = std::pow(a * (kX[ng][i] + 1.0), 2);
      double rs = std::sqrt(1.0 - xs);
      bvn += a * kW[ng][i] *
             (std::exp(-bs / (2.0 * xs) - hk / (1.0 + rs)) / rs -
              std::exp(-(bs / xs + hk) / 2.0) * (1.0 + c * xs * (1.0 + d * xs)));
      xs = as * std::pow(-kX[ng][i] + 1.0, 2) / 4.0;
      rs = std::sqrt(1.0 - xs);
      bvn += a * kW[ng][i] * std::exp(-(bs / xs + hk) / 2.0) *
             (std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs - (1.0 + c * xs * (1.0 + d * xs)));
    }
    bvn = -bvn / kTwoPi;
  }
  if (r > 0.0) bvn += normal_cdf(-std::max(h, k));
  if (r < 0.0) bvn = -bvn + std::max(0.0, normal_cdf(-h) - normal_cdf(-k));
  return bvn;
}

struct CornerGaussian {
  double mx, my, sx, sy, rho;
};

// 2x2 block of the corner covariance with eigenvalues floored at eps^2.
CornerGaussian corner_gaussian(const Eigen::Matrix4d& cov, int first, double mx, double my,
                               double eps) {
  Eigen::Matrix2d c = cov.block<2, 2>(first, first);
  c = 0.5 * (c + c.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(c);
  const Eigen::Vector2d ev = es.eigenvalues().cwiseMax(eps * eps);
  c = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  const double sx = std::sqrt(c(0, 0));
  const double sy = std::sqrt(c(1, 1));
  return {mx, my, sx, sy, std::clamp(c(0, 1) / (sx * sy), -1.0, 1.0)};
}

// P(corner <= p) componentwise.
double lower_prob(const CornerGaussian& g, double px, double py) {
  return bivariate_normal_cdf((px - g.mx) / g.sx, (py - g.my) / g.sy, g.rho);
}

// P(corner >= p) componentwise; (-X, -Y) keeps the same correlation.
double upper_prob(const CornerGaussian& g, double px, double py) {
  return bivariate_normal_cdf((g.mx - px) / g.sx, (g.my - py) / g.sy, g.rho);
}

// Integer pixel range [lo, hi) whose centers fall in [a, b].
std::pair<int, int> pixel_span(double a, double b, int limit) {
  const int lo = std::max(0, static_cast<int>(std::ceil(a - 0.5)));
  const int hi = std::min(limit, static_cast<int>(std::floor(b - 0.5)) + 1);
  return {lo, std::max(lo, hi)};
}

// Probability heatmap of one detection over the pixels where it can be
// nonzero, stored as summed-area tables of log(P) and log(1 - P).
class Heatmap {
 public:
  Heatmap(const ProbabilisticDetection& det, ImageSize image, const PdqOptions& opt) {
    const auto& b = det.box.coords();
    const auto& cov = det.covariance.matrix();
    const auto tl = corner_gaussian(cov, 0, b[0], b[1], opt.epsilon);
    const auto br = corner_gaussian(cov, 2, b[2], b[3], opt.epsilon);
    const int W = static_cast<int>(std::ceil(image.width));
    const int H = static_cast<int>(std::ceil(image.height));
    std::tie(x0_, x1_) = pixel_span(b[0] - kSupportSigmas * tl.sx, b[2] + kSupportSigmas * br.sx, W);
    std::tie(y0_, y1_) = pixel_span(b[1] - kSupportSigmas * tl.sy, b[3] + kSupportSigmas * br.sy, H);
    const int w = x1_ - x0_;
    const int h = y1_ - y0_;
    log_p_.assign((w + 1) * (h + 1), 0.0);
    log_q_.assign((w + 1) * (h + 1), 0.0);
    for (int y = 0; y < h; ++y) {
      const double py = y0_ + y + 0.5;
      for (int x = 0; x < w; ++x) {
        const double px = x0_ + x + 0.5;
        double p = lower_prob(tl, px, py) * upper_prob(br, px, py);
        if (p < opt.heatmap_threshold) p = 0.0;
        at(log_p_, x + 1, y + 1) = std::log(std::max(p, kTiny)) + at(log_p_, x, y + 1) +
                                   at(log_p_, x + 1, y) - at(log_p_, x, y);
        at(log_q_, x + 1, y + 1) = std::log(std::max(1.0 - p, kTiny)) + at(log_q_, x, y + 1) +
                                   at(log_q_, x + 1, y) - at(log_q_, x, y);
      }
    }
  }

  double spatial_quality(const Box& gt, ImageSize image) const {
    const auto& g = gt.coords();
    const auto [gx0, gx1] = pixel_span(g[0], g[2], static_cast<int>(std::ceil(image.width)));
    const auto [gy0, gy1] = pixel_span(g[1], g[3], static_cast<int>(std::ceil(image.height)));
    const double n_fg = static_cast<double>(gx1 - gx0) * (gy1 - gy0);
    if (n_fg <= 0.0) return 0.0;
    // Ground-truth pixels inside the heatmap support.
    const int ix0 = std::max(gx0, x0_), ix1 = std::min(gx1, x1_);
    const int iy0 = std::max(gy0, y0_), iy1 = std::min(gy1, y1_);
    double fg_in = 0.0, bg_in = 0.0, n_in = 0.0;
    if (ix1 > ix0 && iy1 > iy0) {
      fg_in = rect(log_p_, ix0, iy0, ix1, iy1);
      bg_in = rect(log_q_, ix0, iy0, ix1, iy1);
      n_in = static_cast<double>(ix1 - ix0) * (iy1 - iy0);
    }
    if (n_in == 0.0) return 0.0;
    const double fg = fg_in + (n_fg - n_in) * std::log(kTiny);
    const double bg = rect(log_q_, x0_, y0_, x1_, y1_) - bg_in;
    const double q = std::exp((fg + bg) / n_fg);
    // Qualities at the clip floor mean "no overlap", not a weak match.
    return q < 2.0 * kTiny ? 0.0 : q;
  }

 private:
  double& at(std::vector<double>& t, int x, int y) { return t[y * (x1_ - x0_ + 1) + x]; }
  double at(const std::vector<double>& t, int x, int y) const { return t[y * (x1_ - x0_ + 1) + x]; }
  double rect(const std::vector<double>& t, int ax, int ay, int bx, int by) const {
    if (bx <= ax || by <= ay) return 0.0;
    ax -= x0_, bx -= x0_, ay -= y0_, by -= y0_;
    return at(t, bx, by) - at(t, ax, by) - at(t, bx, ay) + at(t, ax, ay);
  }

  int x0_ = 0, x1_ = 0, y0_ = 0, y1_ = 0;
  std::vector<double> log_p_;
  std::vector<double> log_q_;
};

}  // namespace

double bivariate_normal_cdf(double a, double b, double rho) {
  if (std::abs(rho) < 1e-15) return normal_cdf(a) * normal_cdf(b);
  return std::clamp(bvnd(-a, -b, rho), 0.0, 1.0);
}

double spatial_quality(const ProbabilisticDetection& det, const Box& gt_box, ImageSize image,
                       const PdqOptions& options) {
  if (det.box.format() != BoxFormat::kXyXy || det.covariance.format() != BoxFormat::kXyXy ||
      gt_box.format() != BoxFormat::kXyXy) {
    throw ParameterizationError("spatial quality needs absolute xyxy boxes and covariance");
  }
  return Heatmap(det, image, options).spatial_quality(gt_box, image);
}

PdqResult compute_pdq(std::span<const ProbabilisticDetection> dets, const GroundTruthStore& gts,
                      const PdqOptions& options) {
  if (!(options.epsilon > 0.0)) throw ConfigurationError("PDQ covariance floor must be positive");

  std::map<std::int64_t, std::vector<ProbabilisticDetection>> by_image;
  for (const auto& d : dets) {
    if (d.confidence >= options.conf_threshold) by_image[d.image_id].push_back(to_absolute(d, gts));
  }

  PdqResult r;
  double spatial_sum = 0.0;
  double label_sum = 0.0;
  for (const auto& [image_id, record] : gts.images()) {
    const auto& gt = gts.instances(image_id);
    const auto it = by_image.find(image_id);
    const std::vector<ProbabilisticDetection> none;
    const auto& list = it == by_image.end() ? none : it->second;

    Eigen::MatrixXd pairwise = Eigen::MatrixXd::Zero(list.size(), gt.size());
    Eigen::MatrixXd spatial = Eigen::MatrixXd::Zero(list.size(), gt.size());
    for (std::size_t i = 0; i < list.size(); ++i) {
      const Heatmap heat(list[i], record.size, options);
      for (std::size_t j = 0; j < gt.size(); ++j) {
        const double label_q = list[i].label == gt[j].label ? list[i].confidence : 0.0;
        if (label_q <= 0.0) continue;
        spatial(i, j) = heat.spatial_quality(gt[j].box, record.size);
        pairwise(i, j) = std::sqrt(spatial(i, j) * label_q);
      }
    }

    std::vector<char> gt_hit(gt.size(), 0);
    if (!list.empty() && !gt.empty()) {
      const auto a = hungarian_assign(-pairwise);
      for (std::size_t i = 0; i < list.size(); ++i) {
        const int j = a.row_to_col[i];
        if (j >= 0 && pairwise(i, j) > 0.0) {
          gt_hit[j] = 1;
          ++r.tp;
          ++r.per_class[gt[j].label].tp;
          r.total_pairwise += pairwise(i, j);
          spatial_sum += spatial(i, j);
          label_sum += list[i].confidence;
        } else {
          ++r.fp;
          ++r.per_class[list[i].label].fp;
        }
      }
    } else {
      for (const auto& d : list) {
        ++r.fp;
        ++r.per_class[d.label].fp;
      }
    }
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (!gt_hit[j]) {
        ++r.fn;
        ++r.per_class[gt[j].label].fn;
      }
    }
  }
  for (const auto& [image_id, list] : by_image) {
    if (!gts.has_image(image_id)) throw ReferenceError("unknown image_id " + std::to_string(image_id));
  }

  const std::size_t denom = r.tp + r.fp + r.fn;
  if (denom > 0) r.pdq = r.total_pairwise / static_cast<double>(denom);
  if (r.tp > 0) {
    const auto tp = static_cast<double>(r.tp);
    r.mean_spatial = spatial_sum / tp;
    r.mean_label = label_sum / tp;
    r.mean_pairwise = r.total_pairwise / tp;
  }
  return r;
}

}  // namespace qens
