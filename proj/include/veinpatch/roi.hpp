#pragma once

#include <utility>
#include <vector>

#include "veinpatch/imaging.hpp"

namespace veinpatch {

/// y = a*x^2 + b*x + c0 in image coordinates (x = column, y = row).
struct EdgeCurve {
  double a = 0.0;
  double b = 0.0;
  double c0 = 0.0;

  double operator()(double x) const noexcept { return (a * x + b) * x + c0; }
};

struct RoiConfig {
  double threshold = 0.35;
  int window = 5;
  double gabor_wavelength = 8.0;
  double gabor_sigma = 4.0;
  int out_w = 225;
  int out_h = 90;
  int min_edge_points = 10;
  /// Extra vertical margin removed inside the fitted edges, as a fraction of
  /// the band height (at least 2 px).
  double inset = 0.06;
};

struct CropBox {
  int x0 = 0;
  int y0 = 0;
  int w = 0;
  int h = 0;
};

struct RoiResult {
  GrayImage roi;
  double rotation_deg = 0.0;
  EdgeCurve upper;
  EdgeCurve lower;
  /// Crop window in the rotated source frame.
  CropBox box;
  /// Least-squares slope of the centerline after rotation.
  double aligned_slope = 0.0;
  int source_w = 0;
  int source_h = 0;
};

using EdgePoint = std::pair<double, double>;  // (x, y)

/// Largest eigenvalue of the tent-weighted windowed second-order moment
/// matrix of the intensity gradient, divided by its image maximum.
ProbMap orientation_intensity(const GrayImage& img, int window);

/// Even-symmetric, zero-mean Gabor kernel whose carrier oscillates along y.
RealMap gabor_kernel(double wavelength, double sigma);

/// Positive part of the Gabor response scaled by its maximum; flat input
/// gives all zero.
ProbMap gabor_horizontal(const ProbMap& map, double wavelength, double sigma);

EdgeCurve fit_edge_quadratic(const std::vector<EdgePoint>& points, int min_points = 10);

RoiResult align_and_crop(const GrayImage& img, const EdgeCurve& upper, const EdgeCurve& lower,
                         int out_w, int out_h, double inset = RoiConfig{}.inset);

RoiResult extract_roi(const GrayImage& img, const RoiConfig& cfg = {});

/// Map an ROI pixel back to source image coordinates.
EdgePoint roi_to_source(const RoiResult& result, double u, double v);

}  // namespace veinpatch
