#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "veinpatch/error.hpp"

namespace veinpatch {

/// Row-major 2-D raster. The tag parameter keeps gray images, probability
/// maps and masks from being mixed up at call sites.
template <typename T, typename Tag>
class Raster {
 public:
  using value_type = T;

  Raster() = default;

  Raster(int width, int height, T fill = T{}) : width_(width), height_(height) {
    require(width > 0 && height > 0, ErrorCode::kInvalidParameter,
            "raster dimensions must be positive, got " + std::to_string(width) + "x" +
                std::to_string(height));
    data_.assign(static_cast<std::size_t>(width) * height, fill);
  }

  Raster(int width, int height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    require(width > 0 && height > 0, ErrorCode::kInvalidParameter,
            "raster dimensions must be positive");
    require(data_.size() == static_cast<std::size_t>(width) * height, ErrorCode::kShape,
            "raster data length does not match width*height");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  std::span<T> pixels() noexcept { return data_; }
  std::span<const T> pixels() const noexcept { return data_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

struct GrayTag;
struct ProbTag;
struct RealTag;
struct BinaryTag;

/// 8-bit intensities.
using GrayImage = Raster<std::uint8_t, GrayTag>;
/// Values in [0, 1].
using ProbMap = Raster<double, ProbTag>;
/// Unbounded real-valued filter responses.
using RealMap = Raster<double, RealTag>;
/// Nonzero means foreground.
using BinaryImage = Raster<std::uint8_t, BinaryTag>;

/// Mirror index into [0, n) without repeating the edge sample.
int reflect_index(int i, int n) noexcept;

/// Normalized 1-D Gaussian taps, radius ceil(3*sigma).
std::vector<double> gaussian_kernel(double sigma);

ProbMap gaussian_blur(const ProbMap& map, double sigma);
RealMap gaussian_blur(const RealMap& map, double sigma);

/// 2-D cross-correlation with a centered odd-sized kernel, reflected borders.
RealMap correlate(const RealMap& map, const RealMap& kernel);

/// Pixel is foreground iff value > threshold.
BinaryImage binarize(const ProbMap& map, double threshold);

/// Zhang-Suen thinning iterated to a fixed point. Pixels outside the image
/// count as background.
BinaryImage skeletonize(const BinaryImage& img);

/// Bilinear resize with corner-aligned sampling.
ProbMap resize(const ProbMap& map, int new_w, int new_h);

ProbMap to_prob(const GrayImage& img);
GrayImage to_gray(const ProbMap& map);

RealMap to_real(const GrayImage& img);
RealMap to_real(const ProbMap& map);

/// Global min-max rescale to [0, 1]; a flat map becomes all zero.
ProbMap normalize_min_max(const RealMap& map);

/// Clamp each value into [0, 1].
ProbMap clamp_unit(const RealMap& map);

/// Bilinear sample at a real position; `fill` outside the image.
double sample_bilinear(const RealMap& map, double x, double y, double fill = 0.0);

/// Rotate content about the image center so a horizontal line acquires slope
/// tan(degrees) in image coordinates (x right, y down). Bilinear, `fill`
/// outside the source.
RealMap rotate(const RealMap& map, double degrees, double fill = 0.0);

/// Zero-padded rectangular window starting at (x0, y0).
ProbMap crop(const ProbMap& map, int x0, int y0, int w, int h);

std::size_t count_foreground(const BinaryImage& img);

/// Number of 8-connected foreground components.
int count_components(const BinaryImage& img);

}  // namespace veinpatch
