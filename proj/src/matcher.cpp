#include "veinpatch/matcher.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "veinpatch/random.hpp"

namespace veinpatch {

MatchResult match_descriptors(const DescriptorSet& probe, const DescriptorSet& gallery, double td) {
  require(td > 0.0, ErrorCode::kInvalidParameter, "distance threshold t_d must be positive");
  MatchResult result;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    int best = -1;
    double best_d = 0.0;
    for (std::size_t j = 0; j < gallery.size(); ++j) {
      const double d = descriptor_distance(probe.descriptors[i], gallery.descriptors[j]);
      if (best < 0 || d < best_d) {
        best = static_cast<int>(j);
        best_d = d;
      }
    }
    if (best >= 0 && best_d < td) result.raw_matches.push_back({static_cast<int>(i), best, best_d});
  }

  std::vector<Match> order = result.raw_matches;
  std::sort(order.begin(), order.end(), [](const Match& a, const Match& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.probe != b.probe) return a.probe < b.probe;
    return a.gallery < b.gallery;
  });
  std::vector<char> used(gallery.size(), 0);
  // Each probe appears at most once in raw_matches already.
  for (const Match& m : order) {
    if (used[m.gallery]) continue;
    used[m.gallery] = 1;
    result.unique_matches.push_back(m);
  }
  return result;
}

namespace {

struct Normalizer {
  double cx, cy, s;
};

Normalizer similarity_normalizer(const std::vector<Correspondence>& pts, bool target) {
  double cx = 0.0, cy = 0.0;
  for (const auto& p : pts) {
    cx += target ? p.u : p.x;
    cy += target ? p.v : p.y;
  }
  cx /= pts.size();
  cy /= pts.size();
  double mean_r = 0.0;
  for (const auto& p : pts) mean_r += std::hypot((target ? p.u : p.x) - cx, (target ? p.v : p.y) - cy);
  mean_r /= pts.size();
  return {cx, cy, mean_r > 1e-12 ? std::sqrt(2.0) / mean_r : 1.0};
}

bool collinear(const Correspondence& a, const Correspondence& b, const Correspondence& c, bool target) {
  const double ax = target ? a.u : a.x, ay = target ? a.v : a.y;
  const double bx = target ? b.u : b.x, by = target ? b.v : b.y;
  const double cx = target ? c.u : c.x, cy = target ? c.v : c.y;
  const double cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
  const double scale = std::max({std::hypot(bx - ax, by - ay) * std::hypot(cx - ax, cy - ay), 1e-12});
  return std::abs(cross) / scale < 1e-6;
}

bool degenerate_sample(const std::vector<Correspondence>& s) {
  for (int side = 0; side < 2; ++side) {
    for (int a = 0; a < 4; ++a) {
      for (int b = a + 1; b < 4; ++b) {
        for (int c = b + 1; c < 4; ++c) {
          if (collinear(s[a], s[b], s[c], side == 1)) return true;
        }
      }
    }
  }
  return false;
}

}  // namespace

std::optional<Homography> fit_homography(const std::vector<Correspondence>& pts) {
  require(pts.size() >= 4, ErrorCode::kInvalidInput, "homography fit needs at least 4 correspondences");
  const Normalizer ns = similarity_normalizer(pts, false);
  const Normalizer nt = similarity_normalizer(pts, true);
  Eigen::MatrixXd a(2 * pts.size(), 9);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double x = (pts[i].x - ns.cx) * ns.s, y = (pts[i].y - ns.cy) * ns.s;
    const double u = (pts[i].u - nt.cx) * nt.s, v = (pts[i].v - nt.cy) * nt.s;
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Eigen::Matrix3d ts, tt_inv;
  ts << ns.s, 0, -ns.s * ns.cx, 0, ns.s, -ns.s * ns.cy, 0, 0, 1;
  tt_inv << 1.0 / nt.s, 0, nt.cx, 0, 1.0 / nt.s, nt.cy, 0, 0, 1;
  const Eigen::Matrix3d full = tt_inv * hn * ts;
  const double h33 = full(2, 2);
  if (!std::isfinite(h33) || std::abs(h33) < 1e-12 * full.norm()) return std::nullopt;
  Homography out;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out[3 * r + c] = full(r, c) / h33;
  }
  for (double v : out) {
    if (!std::isfinite(v)) return std::nullopt;
  }
  return out;
}

double reprojection_error(const Homography& h, const Correspondence& c) {
  const double w = h[6] * c.x + h[7] * c.y + h[8];
  if (std::abs(w) < 1e-12) return std::numeric_limits<double>::infinity();
  const double px = (h[0] * c.x + h[1] * c.y + h[2]) / w;
  const double py = (h[3] * c.x + h[4] * c.y + h[5]) / w;
  return std::hypot(px - c.u, py - c.v);
}

namespace {

std::vector<int> inliers_of(const Homography& h, const std::vector<Correspondence>& pts, double tol) {
  std::vector<int> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (reprojection_error(h, pts[i]) < tol) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<Correspondence> select(const std::vector<Correspondence>& pts, const std::vector<int>& idx) {
  std::vector<Correspondence> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(pts[i]);
  return out;
}

}  // namespace

RansacResult ransac_homography(const std::vector<Correspondence>& pts, int iterations, double tol,
                               std::uint64_t seed) {
  require(iterations >= 1 && tol > 0.0, ErrorCode::kInvalidParameter,
          "RANSAC needs a positive iteration count and tolerance");
  RansacResult best;
  if (pts.size() < 4) return best;
  Rng rng(seed);
  const int n = static_cast<int>(pts.size());
  const int max_draws = iterations * 10;
  int draws = 0;
  for (int it = 0; it < iterations && draws < max_draws;) {
    ++draws;
    std::array<int, 4> pick{};
    for (int k = 0; k < 4; ++k) {
      int c;
      do {
        c = static_cast<int>(rng.below(n));
      } while (std::find(pick.begin(), pick.begin() + k, c) != pick.begin() + k);
      pick[k] = c;
    }
    const std::vector<Correspondence> sample = select(pts, {pick.begin(), pick.end()});
    if (degenerate_sample(sample)) continue;
    ++it;
    const std::optional<Homography> h = fit_homography(sample);
    if (!h) continue;
    std::vector<int> in = inliers_of(*h, pts, tol);
    if (in.size() > best.inliers.size()) {
      best.inliers = std::move(in);
      best.homography = h;
    }
  }
  if (best.inliers.size() < 4) return RansacResult{};

  // Refit until the inlier set is stable, so the returned set agrees with the returned model.
  for (int round = 0; round < 20; ++round) {
    const std::optional<Homography> h = fit_homography(select(pts, best.inliers));
    if (!h) break;
    std::vector<int> in = inliers_of(*h, pts, tol);
    if (in.size() < 4) break;
    const bool stable = in == best.inliers;
    best.inliers = std::move(in);
    best.homography = h;
    if (stable) break;
  }
  // The last refit may have grown or shrunk the set; keep only points consistent with the final model.
  best.inliers = inliers_of(*best.homography, pts, tol);
  if (best.inliers.size() < 4) return RansacResult{};
  return best;
}

MatchResult match_images(const DescriptorSet& probe, const DescriptorSet& gallery, const MatcherConfig& cfg) {
  MatchResult result = match_descriptors(probe, gallery, cfg.td);
  if (result.unique_matches.size() < 4) return result;
  std::vector<Correspondence> pts;
  pts.reserve(result.unique_matches.size());
  for (const Match& m : result.unique_matches) {
    const Keypoint& a = probe.keypoints[m.probe];
    const Keypoint& b = gallery.keypoints[m.gallery];
    pts.push_back({double(a.x), double(a.y), double(b.x), double(b.y)});
  }
  const RansacResult r = ransac_homography(pts, cfg.ransac_iters, cfg.tol, cfg.seed);
  result.homography = r.homography;
  for (int i : r.inliers) result.inliers.push_back(result.unique_matches[i]);
  result.score = static_cast<int>(result.inliers.size());
  return result;
}

}  // namespace veinpatch
