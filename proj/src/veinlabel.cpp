#include "veinpatch/veinlabel.hpp"

#include <algorithm>
#include <cmath>

namespace veinpatch {

ProbMap curvature_response(const GrayImage& roi, double sigma) {
  require(std::isfinite(sigma) && sigma >= 1.0 && sigma <= 6.0, ErrorCode::kInvalidParameter,
          "curvature sigma must lie in [1, 6]");
  const RealMap smooth = gaussian_blur(to_real(roi), sigma);
  const int w = smooth.width();
  const int h = smooth.height();
  auto at = [&](int x, int y) { return smooth.at(reflect_index(x, w), reflect_index(y, h)); };
  RealMap response(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double c = at(x, y);
      const double hxx = at(x + 1, y) - 2.0 * c + at(x - 1, y);
      const double hyy = at(x, y + 1) - 2.0 * c + at(x, y - 1);
      const double hxy =
          0.25 * (at(x + 1, y + 1) - at(x + 1, y - 1) - at(x - 1, y + 1) + at(x - 1, y - 1));
      // Positive curvature across a dark valley.
      const double lmax = 0.5 * (hxx + hyy) + std::sqrt(0.25 * (hxx - hyy) * (hxx - hyy) + hxy * hxy);
      response.at(x, y) = std::max(lmax, 0.0);
    }
  }
  return normalize_min_max(response);
}

SoftLabel make_soft_label(const GrayImage& roi, double sigma_curv, double sigma_smooth) {
  const ProbMap ridge = curvature_response(roi, sigma_curv);
  const RealMap blurred = gaussian_blur(to_real(ridge), sigma_smooth);
  SoftLabel label{normalize_min_max(blurred), false};
  auto px = label.map.pixels();
  label.degenerate = std::none_of(px.begin(), px.end(), [](double v) { return v >= 0.5; });
  return label;
}

}  // namespace veinpatch
