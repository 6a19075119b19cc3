#include "veinpatch/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <vector>

#include "veinpatch/pgm.hpp"
#include "veinpatch/random.hpp"

namespace veinpatch {

namespace {

// Quadratic ribbon y = y0 + s (x - x0) + k (x - x0)^2 over [xa, xb], in finger
// coordinates (x along the finger, y across it).
struct Ridge {
  double x0, y0, s, k, xa, xb, half_width, depth;

  double y(double x) const { return y0 + s * (x - x0) + k * (x - x0) * (x - x0); }
  double slope(double x) const { return s + 2.0 * k * (x - x0); }

  // Perpendicular-distance approximation, with rounded caps past the ends.
  double distance(double x, double yy) const {
    const double xc = std::clamp(x, xa, xb);
    const double dy = std::abs(yy - y(xc)) / std::sqrt(1.0 + slope(xc) * slope(xc));
    const double dx = std::abs(x - xc);
    return std::hypot(dx, dy);
  }
};

struct Finger {
  // Band edges, quadratic in x.
  double ua, ub, uc;
  double la, lb, lc;
  std::vector<Ridge> ridges;

  double upper(double x) const { return ua * x * x + ub * x + uc; }
  double lower(double x) const { return la * x * x + lb * x + lc; }
};

bool separated(const Ridge& a, const Ridge& b) {
  const double need = a.half_width + b.half_width + 6.0;
  const double lo = std::max(a.xa, b.xa) - need;
  const double hi = std::min(a.xb, b.xb) + need;
  for (double x = lo; x <= hi; x += 1.0) {
    const double xa = std::clamp(x, a.xa, a.xb);
    const double xb = std::clamp(x, b.xa, b.xb);
    if (std::hypot(xa - xb, a.y(xa) - b.y(xb)) < need) return false;
  }
  return true;
}

Finger make_finger(const SynthSpec& spec, int class_id) {
  Rng rng(mix_seed(spec.seed, 0x1000 + static_cast<std::uint64_t>(class_id)));
  const double w = spec.width;
  const double h = spec.height;
  Finger f{};
  const double cx = 0.5 * (w - 1);
  const double half = h * rng.uniform(0.30, 0.34);
  const double mid = 0.5 * (h - 1) + rng.uniform(-0.03, 0.03) * h;
  const double taper = rng.uniform(-0.04, 0.04) * h / w;  // finger narrows toward one end
  const double bow = rng.uniform(-1.0, 1.0) * 6.0 / (w * w);
  f.ua = bow;
  f.ub = -taper - 2.0 * bow * cx;
  f.uc = mid - half + bow * cx * cx + taper * cx;
  f.la = -bow * 0.5;
  f.lb = taper + bow * cx;
  f.lc = mid + half - 0.5 * bow * cx * cx - taper * cx;

  Rng count_rng(mix_seed(spec.seed, 0x2000 + static_cast<std::uint64_t>(class_id)));
  const int count = count_rng.uniform_int(spec.ridge_min, spec.ridge_max);
  int attempts = 0;
  while (static_cast<int>(f.ridges.size()) < count && attempts < 4000) {
    ++attempts;
    Ridge r{};
    const double len = rng.uniform(0.3, 0.6) * w;
    r.xa = rng.uniform(0.05 * w, 0.95 * w - len);
    r.xb = r.xa + len;
    r.x0 = rng.uniform(r.xa, r.xb);
    r.half_width = rng.uniform(1.6, 3.2);
    r.depth = rng.uniform(45.0, 75.0);
    r.s = rng.uniform(-0.25, 0.25);
    r.k = rng.uniform(-1.0, 1.0) * 1.5 / len;
    const double band_lo = mid - 0.72 * half;
    const double band_hi = mid + 0.72 * half;
    r.y0 = rng.uniform(band_lo, band_hi);
    bool inside = true;
    for (double x = r.xa; x <= r.xb && inside; x += 2.0) {
      inside = r.y(x) > band_lo && r.y(x) < band_hi;
    }
    if (!inside) continue;
    bool ok = true;
    for (const Ridge& other : f.ridges) ok = ok && separated(r, other);
    if (ok) f.ridges.push_back(r);
  }
  return f;
}

double smoothstep_edge(double d) { return 1.0 / (1.0 + std::exp(-d / 1.2)); }

}  // namespace

int synth_ridge_count(const SynthSpec& spec, int class_id) {
  return static_cast<int>(make_finger(spec, class_id).ridges.size());
}

SynthSample synth_sample(const SynthSpec& spec, int class_id, int session, int sample) {
  require(spec.width >= 32 && spec.height >= 32, ErrorCode::kInvalidParameter,
          "synthetic image is too small");
  require(spec.ridge_min >= 1 && spec.ridge_max >= spec.ridge_min, ErrorCode::kInvalidParameter,
          "invalid ridge count range");
  require(spec.contrast_lo > 0.0 && spec.contrast_hi >= spec.contrast_lo && spec.noise >= 0.0 &&
              spec.jitter >= 0.0,
          ErrorCode::kInvalidParameter, "invalid photometric or jitter range");
  const Finger f = make_finger(spec, class_id);
  Rng rng(mix_seed(spec.seed, (static_cast<std::uint64_t>(class_id) << 20) ^
                                  (static_cast<std::uint64_t>(session) << 12) ^
                                  static_cast<std::uint64_t>(sample)));
  const double tx = rng.uniform(-spec.jitter, spec.jitter);
  const double ty = rng.uniform(-spec.jitter, spec.jitter);
  const double theta = rng.uniform(-spec.rotation_jitter_deg, spec.rotation_jitter_deg) * std::numbers::pi / 180.0;
  const double contrast = rng.uniform(spec.contrast_lo, spec.contrast_hi);
  const double brightness = rng.uniform(-spec.brightness, spec.brightness);

  const int w = spec.width;
  const int h = spec.height;
  const double cx = 0.5 * (w - 1);
  const double cy = 0.5 * (h - 1);
  const double ct = std::cos(theta);
  const double st = std::sin(theta);
  SynthSample out{GrayImage(w, h), ProbMap(w, h)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Inverse jitter: image pixel -> finger coordinates.
      const double dx = x - cx - tx;
      const double dy = y - cy - ty;
      const double u = cx + ct * dx + st * dy;
      const double v = cy - st * dx + ct * dy;
      const double yu = f.upper(u);
      const double yl = f.lower(u);
      const double band = smoothstep_edge(v - yu) * smoothstep_edge(yl - v);
      const double rel = (v - 0.5 * (yu + yl)) / std::max(1.0, 0.5 * (yl - yu));
      const double flesh = 160.0 + 40.0 * std::max(0.0, 1.0 - rel * rel);
      double dark = 0.0;
      double label = 0.0;
      for (const Ridge& r : f.ridges) {
        const double d = r.distance(u, v);
        const double g = std::exp(-d * d / (2.0 * r.half_width * r.half_width));
        dark = std::max(dark, r.depth * g);
        label = std::max(label, g);
      }
      constexpr double kGround = 25.0;
      const double value = kGround + band * (flesh - kGround - dark);
      const double noisy = contrast * (value - 128.0) + 128.0 + brightness + spec.noise * rng.normal();
      out.image.at(x, y) = static_cast<std::uint8_t>(std::lround(std::clamp(noisy, 0.0, 255.0)));
      out.label.at(x, y) = band > 0.5 ? label : 0.0;
    }
  }
  return out;
}

DatasetManifest synth_generate(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  require(spec.classes >= 1 && spec.samples_per_class >= 1, ErrorCode::kInvalidParameter,
          "synthetic dataset needs at least one class and sample");
  require(spec.sessions == 1 || spec.sessions == 2, ErrorCode::kInvalidParameter,
          "sessions must be 1 or 2");
  DatasetManifest manifest;
  manifest.base = out_dir;
  char buf[64];
  for (int c = 0; c < spec.classes; ++c) {
    for (int s = 1; s <= spec.sessions; ++s) {
      for (int k = 0; k < spec.samples_per_class; ++k) {
        const SynthSample sample = synth_sample(spec, c, s, k);
        std::snprintf(buf, sizeof buf, "cls_%03d/s%d/img_%d.pgm", c, s, k);
        write_pgm(out_dir / "images" / buf, sample.image);
        write_pgm(out_dir / "labels" / buf, to_gray(sample.label));
        manifest.entries.push_back({std::string("images/") + buf, c, s, k});
      }
    }
  }
  write_manifest(out_dir / "manifest.csv", manifest,
                 "synthetic finger dataset\nseed " + std::to_string(spec.seed) + ", " +
                     std::to_string(spec.classes) + " classes x " + std::to_string(spec.sessions) +
                     " session(s) x " + std::to_string(spec.samples_per_class) + " samples");
  return manifest;
}

}  // namespace veinpatch
