#include <doctest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"
#include "veinpatch/roi.hpp"

using namespace veinpatch;

namespace {

// Bright band between two gently curved edges on a dark ground, optionally
// rotated by `deg` about the image centre.
struct Phantom {
  int w = 320, h = 160;
  double top = 48, bottom = 112, bend = 4e-5;
  double upper(double x) const { return top + bend * (x - w / 2.0) * (x - w / 2.0); }
  double lower(double x) const { return bottom - bend * (x - w / 2.0) * (x - w / 2.0); }

  RealMap real() const {
    RealMap m(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double in_top = 1.0 / (1.0 + std::exp(-(y - upper(x)) / 1.2));
        const double in_bot = 1.0 / (1.0 + std::exp((y - lower(x)) / 1.2));
        m.at(x, y) = 30.0 + 160.0 * in_top * in_bot;
      }
    return m;
  }

  GrayImage image(double deg = 0.0) const {
    RealMap m = real();
    if (deg != 0.0) m = rotate(m, deg, 30.0);
    GrayImage g(w, h);
    for (std::size_t i = 0; i < g.size(); ++i)
      g.pixels()[i] = static_cast<std::uint8_t>(std::clamp(std::lround(m.pixels()[i]), 0L, 255L));
    return g;
  }

  bool inside(double x, double y) const { return y > upper(x) && y < lower(x); }
};

GrayImage step_image(bool horizontal) {
  GrayImage g(16, 16, 0);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) g.at(x, y) = (horizontal ? y : x) >= 8 ? 255 : 0;
  return g;
}

// Tent-weighted gradient moments evaluated directly at one pixel.
double direct_moment_lambda(const GrayImage& img, int px, int py, int window) {
  const int w = img.width(), h = img.height(), half = window / 2;
  auto g = [&](int x, int y) { return double(img.at(reflect_index(x, w), reflect_index(y, h))); };
  double a = 0, b = 0, c = 0;
  for (int v = -half; v <= half; ++v)
    for (int u = -half; u <= half; ++u) {
      const int x = reflect_index(px + u, w), y = reflect_index(py + v, h);
      const double gx = 0.5 * (g(x + 1, y) - g(x - 1, y));
      const double gy = 0.5 * (g(x, y + 1) - g(x, y - 1));
      const double t = double(half + 1 - std::abs(u)) * (half + 1 - std::abs(v));
      a += t * gx * gx;
      c += t * gy * gy;
      b += t * gx * gy;
    }
  return 0.5 * (a + c) + std::sqrt(0.25 * (a - c) * (a - c) + b * b);
}

}  // namespace

TEST_SUITE("roi") {

TEST_CASE("orientation_intensity of a constant image is zero") {
  const ProbMap r = orientation_intensity(GrayImage(12, 9, 77), 5);
  for (double v : r.pixels()) CHECK(v == 0.0);
}

TEST_CASE("orientation_intensity on a horizontal step matches direct moments") {
  const GrayImage g = step_image(true);
  const ProbMap r = orientation_intensity(g, 5);
  double peak = 0;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) peak = std::max(peak, direct_moment_lambda(g, x, y, 5));
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) CHECK(r.at(x, y) == doctest::Approx(direct_moment_lambda(g, x, y, 5) / peak));
  for (int x = 0; x < 16; ++x) {
    int best = 0;
    for (int y = 1; y < 16; ++y)
      if (r.at(x, y) > r.at(x, best)) best = y;
    CHECK((best == 7 || best == 8));
    CHECK(r.at(x, 7) == doctest::Approx(r.at(x, 8)));
  }
}

TEST_CASE("orientation_intensity is symmetric between step orientations") {
  const ProbMap h = orientation_intensity(step_image(true), 5);
  const ProbMap v = orientation_intensity(step_image(false), 5);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) CHECK(h.at(x, y) == doctest::Approx(v.at(y, x)).epsilon(1e-12));
}

TEST_CASE("orientation_intensity rejects bad windows") {
  CHECK_THROWS_AS(orientation_intensity(GrayImage(8, 8), 4), Error);
  CHECK_THROWS_AS(orientation_intensity(GrayImage(8, 8), 1), Error);
}

TEST_CASE("gabor_horizontal favours horizontal lines") {
  ProbMap hl(41, 41, 0.0), vl(41, 41, 0.0);
  for (int i = 0; i < 41; ++i) {
    hl.at(i, 20) = 1.0;
    vl.at(20, i) = 1.0;
  }
  const RealMap k = gabor_kernel(8.0, 4.0);
  const RealMap rh = correlate(to_real(hl), k), rv = correlate(to_real(vl), k);
  double mh = 0, mv = 0;
  for (double v : rh.pixels()) mh = std::max(mh, v);
  for (double v : rv.pixels()) mv = std::max(mv, v);
  CHECK(mh > mv);
  const ProbMap flat = gabor_horizontal(ProbMap(9, 9, 0.4), 8.0, 4.0);
  for (double v : flat.pixels()) CHECK(v == 0.0);
  CHECK_THROWS_AS(gabor_horizontal(hl, 1.0, 4.0), Error);
  CHECK_THROWS_AS(gabor_horizontal(hl, 8.0, 0.0), Error);
}

TEST_CASE("gabor impulse response reproduces the kernel") {
  const RealMap k = gabor_kernel(8.0, 2.0);
  const int n = k.width() * 3;
  RealMap imp(n, n, 0.0);
  imp.at(n / 2, n / 2) = 1.0;
  const RealMap r = correlate(imp, k);
  const int half = k.width() / 2;
  // correlation with an impulse flips the kernel; the even kernel is symmetric
  for (int v = -half; v <= half; ++v)
    for (int u = -half; u <= half; ++u)
      CHECK(r.at(n / 2 + u, n / 2 + v) == doctest::Approx(k.at(half - u, half - v)).epsilon(1e-12));
}

TEST_CASE("fit_edge_quadratic exact cases") {
  std::vector<EdgePoint> pts;
  for (int x = -6; x <= 6; ++x) pts.emplace_back(x, 2.0 * x * x - 3.0 * x + 1.0);
  EdgeCurve c = fit_edge_quadratic(pts);
  CHECK(c.a == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(c.b == doctest::Approx(-3.0).epsilon(1e-9));
  CHECK(c.c0 == doctest::Approx(1.0).epsilon(1e-9));

  pts.clear();
  for (int x = 0; x < 20; ++x) pts.emplace_back(x, 4.0 * x + 7.0);
  c = fit_edge_quadratic(pts);
  CHECK(std::abs(c.a) < 1e-9);
  CHECK(c.b == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(c.c0 == doctest::Approx(7.0).epsilon(1e-9));
}

TEST_CASE("fit_edge_quadratic agrees with a normal-equations solve") {
  std::vector<EdgePoint> pts;
  for (int x = 0; x < 30; ++x) pts.emplace_back(x, 0.01 * x * x + 0.5 * x + 3.0);
  pts[12].second += 40.0;  // gross outlier
  // normal equations, Cramer's rule
  double s[5] = {0, 0, 0, 0, 0}, t[3] = {0, 0, 0};
  for (auto [x, y] : pts) {
    double p = 1;
    for (int k = 0; k < 5; ++k) {
      s[k] += p;
      if (k < 3) t[k] += p * y;
      p *= x;
    }
  }
  // columns (x^2, x, 1)
  const double m[3][3] = {{s[4], s[3], s[2]}, {s[3], s[2], s[1]}, {s[2], s[1], s[0]}};
  const double r[3] = {t[2], t[1], t[0]};
  auto det3 = [](const double q[3][3]) {
    return q[0][0] * (q[1][1] * q[2][2] - q[1][2] * q[2][1]) - q[0][1] * (q[1][0] * q[2][2] - q[1][2] * q[2][0]) +
           q[0][2] * (q[1][0] * q[2][1] - q[1][1] * q[2][0]);
  };
  const double d = det3(m);
  double sol[3];
  for (int col = 0; col < 3; ++col) {
    double q[3][3];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) q[i][j] = j == col ? r[i] : m[i][j];
    sol[col] = det3(q) / d;
  }
  const EdgeCurve c = fit_edge_quadratic(pts);
  CHECK(c.a == doctest::Approx(sol[0]).epsilon(1e-7));
  CHECK(c.b == doctest::Approx(sol[1]).epsilon(1e-7));
  CHECK(c.c0 == doctest::Approx(sol[2]).epsilon(1e-7));

  // no perturbed triple does better
  auto rss = [&](double a, double b, double c0) {
    double e = 0;
    for (auto [x, y] : pts) e += (y - (a * x * x + b * x + c0)) * (y - (a * x * x + b * x + c0));
    return e;
  };
  const double best = rss(c.a, c.b, c.c0);
  for (double da : {-1e-3, 1e-3})
    for (double db : {-1e-2, 1e-2})
      for (double dc : {-0.1, 0.1}) CHECK(best <= rss(c.a + da, c.b + db, c.c0 + dc));
}

TEST_CASE("fit_edge_quadratic errors") {
  std::vector<EdgePoint> few{{0, 1}, {1, 2}, {2, 3}};
  try {
    fit_edge_quadratic(few);
    FAIL("accepted 3 points");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInsufficientEdgeEvidence);
  }
  std::vector<EdgePoint> vertical;
  for (int i = 0; i < 15; ++i) vertical.emplace_back(5.0, i);
  try {
    fit_edge_quadratic(vertical);
    FAIL("accepted a rank-deficient design");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegenerateFit);
  }
}

TEST_CASE("align_and_crop on an aligned band") {
  const Phantom ph;
  EdgeCurve up{0, 0, 50}, lo{0, 0, 110};
  const RoiResult r = align_and_crop(ph.image(), up, lo, 225, 90);
  CHECK(r.roi.width() == 225);
  CHECK(r.roi.height() == 90);
  CHECK(std::abs(r.rotation_deg) < 1e-9);
  CHECK(std::abs(r.aligned_slope) < 0.01);
}

TEST_CASE("align_and_crop geometry errors") {
  const Phantom ph;
  try {
    align_and_crop(ph.image(), EdgeCurve{0, 2.0, 10}, EdgeCurve{0, 2.0, 70}, 225, 90);
    FAIL("accepted a 63 degree centerline");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kImplausibleGeometry);
  }
  try {
    align_and_crop(ph.image(), EdgeCurve{0, 0, 110}, EdgeCurve{0, 0, 50}, 225, 90);
    FAIL("accepted crossed curves");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kImplausibleGeometry);
  }
}

TEST_CASE("extract_roi on a phantom keeps only band pixels") {
  const Phantom ph;
  const RoiResult r = extract_roi(ph.image());
  CHECK(r.roi.width() == 225);
  CHECK(r.roi.height() == 90);
  CHECK(std::abs(r.rotation_deg) < 0.5);
  int inside = 0, total = 0;
  for (int v = 0; v < r.roi.height(); ++v)
    for (int u = 0; u < r.roi.width(); ++u) {
      const auto [x, y] = roi_to_source(r, u, v);
      inside += ph.inside(x, y);
      ++total;
    }
  CHECK(inside >= 0.99 * total);
}

TEST_CASE("extract_roi recovers rotation") {
  const Phantom ph;
  for (double deg : {-15.0, -8.0, -5.0, 5.0, 8.0, 15.0}) {
    CAPTURE(deg);
    const RoiResult r = extract_roi(ph.image(deg));
    CHECK(std::abs(r.rotation_deg + deg) <= 0.5);
  }
}

TEST_CASE("extract_roi content is stable under rotation") {
  const Phantom ph;
  const RoiResult a = extract_roi(ph.image());
  const RoiResult b = extract_roi(ph.image(8.0));
  double mad = 0;
  for (std::size_t i = 0; i < a.roi.size(); ++i) mad += std::abs(double(a.roi.pixels()[i]) - b.roi.pixels()[i]);
  mad /= static_cast<double>(a.roi.size());
  CHECK(mad <= 3.0);
}

TEST_CASE("extract_roi on a black image") {
  try {
    extract_roi(GrayImage(320, 160, 0));
    FAIL("black image accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInsufficientEdgeEvidence);
  }
}

TEST_CASE("extract_roi honours the configured size") {
  RoiConfig cfg;
  cfg.out_w = 128;
  cfg.out_h = 64;
  const RoiResult r = extract_roi(Phantom{}.image(3.0), cfg);
  CHECK(r.roi.width() == 128);
  CHECK(r.roi.height() == 64);
}

}  // TEST_SUITE
