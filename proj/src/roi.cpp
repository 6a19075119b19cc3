#include "veinpatch/roi.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace veinpatch {

namespace {

constexpr double kMaxRotationDeg = 45.0;

double deg_to_rad(double d) { return d * std::numbers::pi / 180.0; }

ProbMap scale_by_max(const RealMap& response) {
  auto src = response.pixels();
  const double peak = *std::max_element(src.begin(), src.end());
  ProbMap out(response.width(), response.height());
  if (!(peak > 0.0)) return out;
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::clamp(src[i] / peak, 0.0, 1.0);
  return out;
}

// (x', y') = R(theta) (x - c) + c with theta in degrees.
EdgePoint rotate_point(double x, double y, double theta_deg, double cx, double cy) {
  const double t = deg_to_rad(theta_deg);
  const double dx = x - cx;
  const double dy = y - cy;
  return {std::cos(t) * dx - std::sin(t) * dy + cx, std::sin(t) * dx + std::cos(t) * dy + cy};
}

double least_squares_slope(const std::vector<EdgePoint>& pts) {
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : pts) {
    mx += x;
    my += y;
  }
  mx /= pts.size();
  my /= pts.size();
  double sxy = 0.0, sxx = 0.0;
  for (const auto& [x, y] : pts) {
    sxy += (x - mx) * (y - my);
    sxx += (x - mx) * (x - mx);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

}  // namespace

ProbMap orientation_intensity(const GrayImage& img, int window) {
  require(window >= 3 && window % 2 == 1, ErrorCode::kInvalidParameter,
          "orientation window must be odd and >= 3");
  const int w = img.width();
  const int h = img.height();
  RealMap gxx(w, h), gyy(w, h), gxy(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = 0.5 * (double(img.at(reflect_index(x + 1, w), y)) -
                               img.at(reflect_index(x - 1, w), y));
      const double gy = 0.5 * (double(img.at(x, reflect_index(y + 1, h))) -
                               img.at(x, reflect_index(y - 1, h)));
      gxx.at(x, y) = gx * gx;
      gyy.at(x, y) = gy * gy;
      gxy.at(x, y) = gx * gy;
    }
  }
  const int half = window / 2;
  RealMap tent(window, window);
  for (int v = -half; v <= half; ++v) {
    for (int u = -half; u <= half; ++u) {
      tent.at(u + half, v + half) = double(half + 1 - std::abs(u)) * (half + 1 - std::abs(v));
    }
  }
  const RealMap m20 = correlate(gxx, tent);
  const RealMap m02 = correlate(gyy, tent);
  const RealMap m11 = correlate(gxy, tent);
  RealMap lambda(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double a = m20.at(x, y);
      const double c = m02.at(x, y);
      const double b = m11.at(x, y);
      const double l = 0.5 * (a + c) + std::sqrt(0.25 * (a - c) * (a - c) + b * b);
      lambda.at(x, y) = std::max(l, 0.0);
    }
  }
  return scale_by_max(lambda);
}

RealMap gabor_kernel(double wavelength, double sigma) {
  require(std::isfinite(wavelength) && wavelength > 1.0, ErrorCode::kInvalidParameter,
          "gabor wavelength must exceed 1 pixel");
  require(std::isfinite(sigma) && sigma > 0.0, ErrorCode::kInvalidParameter,
          "gabor sigma must be positive");
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  RealMap k(2 * r + 1, 2 * r + 1);
  double total = 0.0;
  for (int y = -r; y <= r; ++y) {
    for (int x = -r; x <= r; ++x) {
      const double env = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
      const double v = env * std::cos(2.0 * std::numbers::pi * y / wavelength);
      k.at(x + r, y + r) = v;
      total += v;
    }
  }
  const double mean = total / k.size();
  for (double& v : k.pixels()) v -= mean;
  return k;
}

ProbMap gabor_horizontal(const ProbMap& map, double wavelength, double sigma) {
  const RealMap kernel = gabor_kernel(wavelength, sigma);
  RealMap response = correlate(to_real(map), kernel);
  // Flat input: response is zero up to rounding.
  auto px = response.pixels();
  const auto [lo, hi] = std::minmax_element(px.begin(), px.end());
  if (*hi - *lo <= 1e-12) return ProbMap(map.width(), map.height());
  return scale_by_max(response);
}

EdgeCurve fit_edge_quadratic(const std::vector<EdgePoint>& points, int min_points) {
  require(static_cast<int>(points.size()) >= min_points && !points.empty(),
          ErrorCode::kInsufficientEdgeEvidence,
          "need at least " + std::to_string(min_points) + " edge points, got " +
              std::to_string(points.size()));
  const auto n = static_cast<Eigen::Index>(points.size());
  double mx = 0.0;
  for (const auto& p : points) mx += p.first;
  mx /= n;
  double sx = 0.0;
  for (const auto& p : points) sx = std::max(sx, std::abs(p.first - mx));
  require(sx > 0.0, ErrorCode::kDegenerateFit, "all edge points share one column");

  Eigen::MatrixXd design(n, 3);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = (points[i].first - mx) / sx;
    design(i, 0) = t * t;
    design(i, 1) = t;
    design(i, 2) = 1.0;
    rhs(i) = points[i].second;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  require(qr.rank() == 3, ErrorCode::kDegenerateFit, "edge point design matrix is rank deficient");
  const Eigen::Vector3d sol = qr.solve(rhs);
  // Undo the column scaling t = (x - mx) / sx.
  EdgeCurve curve;
  curve.a = sol(0) / (sx * sx);
  curve.b = -2.0 * sol(0) * mx / (sx * sx) + sol(1) / sx;
  curve.c0 = sol(0) * mx * mx / (sx * sx) - sol(1) * mx / sx + sol(2);
  require(std::isfinite(curve.a) && std::isfinite(curve.b) && std::isfinite(curve.c0),
          ErrorCode::kDegenerateFit, "non-finite quadratic fit");
  return curve;
}

RoiResult align_and_crop(const GrayImage& img, const EdgeCurve& upper, const EdgeCurve& lower,
                         int out_w, int out_h, double inset) {
  require(out_w > 0 && out_h > 0, ErrorCode::kInvalidParameter, "ROI size must be positive");
  const int w = img.width();
  const int h = img.height();
  const double cx = 0.5 * (w - 1);
  const double cy = 0.5 * (h - 1);

  for (const EdgeCurve* curve : {&upper, &lower}) {
    for (double x : {0.0, cx, double(w - 1)}) {
      const double y = (*curve)(x);
      require(std::isfinite(y) && y >= -h && y <= 2.0 * h, ErrorCode::kImplausibleGeometry,
              "edge curve leaves the sanity band");
    }
  }

  std::vector<EdgePoint> centerline;
  centerline.reserve(w);
  for (int x = 0; x < w; ++x) centerline.emplace_back(x, 0.5 * (upper(x) + lower(x)));
  const double angle = std::atan(least_squares_slope(centerline)) * 180.0 / std::numbers::pi;
  require(std::abs(angle) <= kMaxRotationDeg, ErrorCode::kImplausibleGeometry,
          "finger rotation exceeds 45 degrees");

  RoiResult result;
  result.rotation_deg = -angle;
  result.upper = upper;
  result.lower = lower;
  result.source_w = w;
  result.source_h = h;

  const int col_lo = static_cast<int>(std::floor(0.1 * w));
  const int col_hi = static_cast<int>(std::ceil(0.9 * w)) - 1;
  double top = -std::numeric_limits<double>::infinity();
  double bottom = std::numeric_limits<double>::infinity();
  std::vector<EdgePoint> rotated_center;
  for (double x = -0.5 * w; x <= 1.5 * w; x += 0.25) {
    const double yu = upper(x);
    const double yl = lower(x);
    const auto [ux, uy] = rotate_point(x, yu, result.rotation_deg, cx, cy);
    const auto [lx, ly] = rotate_point(x, yl, result.rotation_deg, cx, cy);
    const auto [mx, my] = rotate_point(x, 0.5 * (yu + yl), result.rotation_deg, cx, cy);
    const bool u_in = ux >= col_lo && ux <= col_hi;
    const bool l_in = lx >= col_lo && lx <= col_hi;
    if (u_in) top = std::max(top, uy);
    if (l_in) bottom = std::min(bottom, ly);
    if (mx >= col_lo && mx <= col_hi) {
      require(yl > yu, ErrorCode::kImplausibleGeometry, "finger edges cross inside the crop");
      rotated_center.emplace_back(mx, my);
    }
  }
  require(std::isfinite(top) && std::isfinite(bottom) && rotated_center.size() >= 2,
          ErrorCode::kImplausibleGeometry, "finger edges do not span the crop columns");
  result.aligned_slope = least_squares_slope(rotated_center);

  const double margin = std::max(2.0, inset * (bottom - top));
  const int row_lo = static_cast<int>(std::ceil(top + margin));
  const int row_hi = static_cast<int>(std::floor(bottom - margin));
  require(row_hi - row_lo + 1 >= 2, ErrorCode::kImplausibleGeometry,
          "finger band too thin to crop");

  result.box = CropBox{col_lo, row_lo, col_hi - col_lo + 1, row_hi - row_lo + 1};
  const RealMap rotated = rotate(to_real(img), result.rotation_deg, 0.0);
  ProbMap window(result.box.w, result.box.h);
  for (int y = 0; y < result.box.h; ++y) {
    for (int x = 0; x < result.box.w; ++x) {
      const int sx = result.box.x0 + x;
      const int sy = result.box.y0 + y;
      window.at(x, y) = rotated.contains(sx, sy) ? rotated.at(sx, sy) / 255.0 : 0.0;
    }
  }
  result.roi = to_gray(resize(window, out_w, out_h));
  return result;
}

namespace {

// Refits after dropping points far from the current curve; the band's end caps
// and stray responses otherwise bend the fit.
EdgeCurve fit_edge_trimmed(std::vector<EdgePoint> pts, int min_points) {
  EdgeCurve curve = fit_edge_quadratic(pts, min_points);
  for (int round = 0; round < 5; ++round) {
    std::vector<double> res;
    res.reserve(pts.size());
    for (const auto& [x, y] : pts) res.push_back(std::abs(y - curve(x)));
    std::vector<double> sorted = res;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double cut = std::max(3.0, 3.0 * 1.4826 * sorted[sorted.size() / 2]);
    std::vector<EdgePoint> kept;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (res[i] <= cut) kept.push_back(pts[i]);
    }
    if (kept.size() == pts.size() || static_cast<int>(kept.size()) < min_points) break;
    pts = std::move(kept);
    curve = fit_edge_quadratic(pts, min_points);
  }
  return curve;
}

}  // namespace

RoiResult extract_roi(const GrayImage& img, const RoiConfig& cfg) {
  require(cfg.min_edge_points >= 3, ErrorCode::kInvalidParameter,
          "roi.min_edge_points must be at least 3");
  const ProbMap edges = orientation_intensity(img, cfg.window);
  const ProbMap enhanced = gabor_horizontal(edges, cfg.gabor_wavelength, cfg.gabor_sigma);
  const BinaryImage mask = binarize(enhanced, cfg.threshold);

  const int w = img.width();
  const int h = img.height();
  // Per column, the first foreground run is the upper edge and the last run the
  // lower edge, each taken at its outer pixel. Columns showing a single run
  // (one edge out of frame) and runs touching the image border are skipped.
  std::vector<EdgePoint> upper_pts;
  std::vector<EdgePoint> lower_pts;
  for (int x = 0; x < w; ++x) {
    int first_top = -1, last_bottom = -1, runs = 0;
    bool border = false;
    for (int y = 0; y < h;) {
      if (!mask.at(x, y)) {
        ++y;
        continue;
      }
      const int start = y;
      while (y < h && mask.at(x, y)) ++y;
      if (runs == 0) {
        first_top = start;
        border = border || start == 0;
      }
      last_bottom = y - 1;
      ++runs;
    }
    if (runs < 2) continue;
    if (!border && first_top >= 0) upper_pts.emplace_back(x, first_top);
    if (last_bottom < h - 1) lower_pts.emplace_back(x, last_bottom);
  }
  require(static_cast<int>(upper_pts.size()) >= cfg.min_edge_points &&
              static_cast<int>(lower_pts.size()) >= cfg.min_edge_points,
          ErrorCode::kInsufficientEdgeEvidence,
          "too few finger edge pixels (upper " + std::to_string(upper_pts.size()) + ", lower " +
              std::to_string(lower_pts.size()) + ")");
  const EdgeCurve upper = fit_edge_trimmed(upper_pts, cfg.min_edge_points);
  const EdgeCurve lower = fit_edge_trimmed(lower_pts, cfg.min_edge_points);
  return align_and_crop(img, upper, lower, cfg.out_w, cfg.out_h, cfg.inset);
}

EdgePoint roi_to_source(const RoiResult& result, double u, double v) {
  const double sx = result.roi.width() > 1
                        ? u * (result.box.w - 1) / (result.roi.width() - 1)
                        : 0.5 * (result.box.w - 1);
  const double sy = result.roi.height() > 1
                        ? v * (result.box.h - 1) / (result.roi.height() - 1)
                        : 0.5 * (result.box.h - 1);
  const double cx = 0.5 * (result.source_w - 1);
  const double cy = 0.5 * (result.source_h - 1);
  return rotate_point(result.box.x0 + sx, result.box.y0 + sy, -result.rotation_deg, cx, cy);
}

}  // namespace veinpatch
