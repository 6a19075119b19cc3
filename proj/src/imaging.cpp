#include "veinpatch/imaging.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace veinpatch {

int reflect_index(int i, int n) noexcept {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

std::vector<double> gaussian_kernel(double sigma) {
  require(std::isfinite(sigma) && sigma > 0.0, ErrorCode::kInvalidParameter,
          "gaussian sigma must be positive and finite");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const double v = std::exp(-0.5 * k * k / (sigma * sigma));
    taps[k + radius] = v;
    total += v;
  }
  for (double& v : taps) v /= total;
  return taps;
}

namespace {

template <typename Map>
Map blur_separable(const Map& map, double sigma) {
  const std::vector<double> taps = gaussian_kernel(sigma);
  const int radius = static_cast<int>(taps.size() / 2);
  const int w = map.width();
  const int h = map.height();
  RealMap tmp(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += taps[k + radius] * map.at(reflect_index(x + k, w), y);
      }
      tmp.at(x, y) = acc;
    }
  }
  Map out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += taps[k + radius] * tmp.at(x, reflect_index(y + k, h));
      }
      out.at(x, y) = acc;
    }
  }
  return out;
}

}  // namespace

ProbMap gaussian_blur(const ProbMap& map, double sigma) {
  ProbMap out = blur_separable(map, sigma);
  for (double& v : out.pixels()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

RealMap gaussian_blur(const RealMap& map, double sigma) { return blur_separable(map, sigma); }

RealMap correlate(const RealMap& map, const RealMap& kernel) {
  require(kernel.width() % 2 == 1 && kernel.height() % 2 == 1, ErrorCode::kShape,
          "correlation kernel must have odd dimensions");
  const int rx = kernel.width() / 2;
  const int ry = kernel.height() / 2;
  const int w = map.width();
  const int h = map.height();
  RealMap out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int dy = -ry; dy <= ry; ++dy) {
        const int sy = reflect_index(y + dy, h);
        for (int dx = -rx; dx <= rx; ++dx) {
          acc += kernel.at(dx + rx, dy + ry) * map.at(reflect_index(x + dx, w), sy);
        }
      }
      out.at(x, y) = acc;
    }
  }
  return out;
}

BinaryImage binarize(const ProbMap& map, double threshold) {
  BinaryImage out(map.width(), map.height());
  auto src = map.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > threshold ? 1 : 0;
  return out;
}

namespace {

// 8-connected labels, 0 for background, 1.. in scan order.
std::vector<int> label_components(const BinaryImage& img, int& count) {
  const int w = img.width();
  const int h = img.height();
  std::vector<int> label(img.size(), 0);
  std::vector<std::pair<int, int>> stack;
  count = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      if (!img.at(x, y) || label[idx]) continue;
      label[idx] = ++count;
      stack.emplace_back(x, y);
      while (!stack.empty()) {
        const auto [cx, cy] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx;
            const int ny = cy + dy;
            if (!img.contains(nx, ny) || !img.at(nx, ny)) continue;
            const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
            if (label[nidx]) continue;
            label[nidx] = count;
            stack.emplace_back(nx, ny);
          }
        }
      }
    }
  }
  return label;
}

}  // namespace

BinaryImage skeletonize(const BinaryImage& img) {
  BinaryImage cur = img;
  for (auto& v : cur.pixels()) v = v ? 1 : 0;
  const int w = cur.width();
  const int h = cur.height();
  auto px = [&](int x, int y) -> int { return cur.contains(x, y) ? cur.at(x, y) : 0; };

  std::vector<std::size_t> doomed;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      doomed.clear();
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (!cur.at(x, y)) continue;
          // P2..P9 clockwise from north.
          const std::array<int, 8> n = {px(x, y - 1),     px(x + 1, y - 1), px(x + 1, y),
                                        px(x + 1, y + 1), px(x, y + 1),     px(x - 1, y + 1),
                                        px(x - 1, y),     px(x - 1, y - 1)};
          int b = 0;
          int a = 0;
          for (int k = 0; k < 8; ++k) {
            b += n[k];
            if (n[k] == 0 && n[(k + 1) % 8] == 1) ++a;
          }
          if (b < 2 || b > 6 || a != 1) continue;
          const bool keep = pass == 0 ? (n[0] * n[2] * n[4] != 0 || n[2] * n[4] * n[6] != 0)
                                      : (n[0] * n[2] * n[6] != 0 || n[0] * n[4] * n[6] != 0);
          if (keep) continue;
          doomed.push_back(static_cast<std::size_t>(y) * w + x);
        }
      }
      // Zhang-Suen erases 2x2 blocks outright; keep one pixel of any
      // component that would vanish.
      if (!doomed.empty()) {
        int count = 0;
        const std::vector<int> label = label_components(cur, count);
        std::vector<int> size(count + 1, 0), hit(count + 1, 0);
        for (int l : label) ++size[l];
        for (std::size_t idx : doomed) ++hit[label[idx]];
        std::vector<char> spared(count + 1, 0);
        std::erase_if(doomed, [&](std::size_t idx) {
          const int l = label[idx];
          if (hit[l] < size[l] || spared[l]) return false;
          spared[l] = 1;
          return true;
        });
      }
      auto pix = cur.pixels();
      for (std::size_t idx : doomed) pix[idx] = 0;
      if (!doomed.empty()) changed = true;
    }
  }
  return cur;
}

namespace {

double source_coord(int i, int src_n, int dst_n) {
  if (dst_n == 1) return 0.5 * (src_n - 1);
  return static_cast<double>(i) * (src_n - 1) / (dst_n - 1);
}

template <typename Map>
double bilinear_inside(const Map& map, double x, double y) {
  const int w = map.width();
  const int h = map.height();
  const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, w - 1);
  const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = map.at(x0, y0) * (1.0 - fx) + map.at(x1, y0) * fx;
  const double bot = map.at(x0, y1) * (1.0 - fx) + map.at(x1, y1) * fx;
  return top * (1.0 - fy) + bot * fy;
}

}  // namespace

ProbMap resize(const ProbMap& map, int new_w, int new_h) {
  require(new_w > 0 && new_h > 0, ErrorCode::kInvalidParameter,
          "resize target dimensions must be positive");
  if (new_w == map.width() && new_h == map.height()) return map;
  ProbMap out(new_w, new_h);
  for (int y = 0; y < new_h; ++y) {
    const double sy = source_coord(y, map.height(), new_h);
    for (int x = 0; x < new_w; ++x) {
      const double sx = source_coord(x, map.width(), new_w);
      out.at(x, y) = std::clamp(bilinear_inside(map, sx, sy), 0.0, 1.0);
    }
  }
  return out;
}

ProbMap to_prob(const GrayImage& img) {
  ProbMap out(img.width(), img.height());
  auto src = img.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] / 255.0;
  return out;
}

GrayImage to_gray(const ProbMap& map) {
  GrayImage out(map.width(), map.height());
  auto src = map.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<std::uint8_t>(std::lround(std::clamp(src[i], 0.0, 1.0) * 255.0));
  }
  return out;
}

RealMap to_real(const GrayImage& img) {
  RealMap out(img.width(), img.height());
  auto src = img.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i];
  return out;
}

RealMap to_real(const ProbMap& map) {
  auto src = map.pixels();
  return RealMap(map.width(), map.height(), std::vector<double>(src.begin(), src.end()));
}

ProbMap normalize_min_max(const RealMap& map) {
  auto src = map.pixels();
  const auto [lo, hi] = std::minmax_element(src.begin(), src.end());
  ProbMap out(map.width(), map.height());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = std::clamp((src[i] - *lo) / range, 0.0, 1.0);
  }
  return out;
}

ProbMap clamp_unit(const RealMap& map) {
  ProbMap out(map.width(), map.height());
  auto src = map.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::clamp(src[i], 0.0, 1.0);
  return out;
}

double sample_bilinear(const RealMap& map, double x, double y, double fill) {
  const int w = map.width();
  const int h = map.height();
  if (!(x > -1.0 && y > -1.0 && x < w && y < h)) return fill;
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  auto get = [&](int xx, int yy) { return map.contains(xx, yy) ? map.at(xx, yy) : fill; };
  const double top = get(x0, y0) * (1.0 - fx) + get(x0 + 1, y0) * fx;
  const double bot = get(x0, y0 + 1) * (1.0 - fx) + get(x0 + 1, y0 + 1) * fx;
  return top * (1.0 - fy) + bot * fy;
}

RealMap rotate(const RealMap& map, double degrees, double fill) {
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad);
  const double s = std::sin(rad);
  const double cx = 0.5 * (map.width() - 1);
  const double cy = 0.5 * (map.height() - 1);
  RealMap out(map.width(), map.height());
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      // Inverse rotation maps the output pixel back into the source.
      const double sx = c * dx + s * dy + cx;
      const double sy = -s * dx + c * dy + cy;
      out.at(x, y) = sample_bilinear(map, sx, sy, fill);
    }
  }
  return out;
}

ProbMap crop(const ProbMap& map, int x0, int y0, int w, int h) {
  ProbMap out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (map.contains(x0 + x, y0 + y)) out.at(x, y) = map.at(x0 + x, y0 + y);
    }
  }
  return out;
}

std::size_t count_foreground(const BinaryImage& img) {
  auto px = img.pixels();
  return static_cast<std::size_t>(std::count_if(px.begin(), px.end(), [](auto v) { return v != 0; }));
}

int count_components(const BinaryImage& img) {
  int count = 0;
  label_components(img, count);
  return count;
}

}  // namespace veinpatch
