#pragma once

#include "veinpatch/imaging.hpp"

namespace veinpatch {

struct SoftLabel {
  ProbMap map;
  /// Set when the source produced a flat response; such labels are kept out
  /// of training sets.
  bool degenerate = false;
};

struct VeinLabelConfig {
  double sigma_curv = 3.0;
  double sigma_smooth = 1.0;
};

/// Dark-ridge strength: max(largest Hessian eigenvalue, 0) of the
/// sigma-smoothed image, min-max normalized. sigma must lie in [1, 6].
ProbMap curvature_response(const GrayImage& roi, double sigma);

SoftLabel make_soft_label(const GrayImage& roi, double sigma_curv = 3.0, double sigma_smooth = 1.0);

}  // namespace veinpatch
