#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "veinpatch/descriptor.hpp"

namespace veinpatch {

struct Match {
  int probe = 0;
  int gallery = 0;
  double distance = 0.0;

  friend bool operator==(const Match&, const Match&) = default;
};

/// Row-major 3x3.
using Homography = std::array<double, 9>;

struct MatchResult {
  std::vector<Match> raw_matches;
  std::vector<Match> unique_matches;
  std::vector<Match> inliers;
  std::optional<Homography> homography;
  int score = 0;
};

struct MatcherConfig {
  double td = 1.2;
  int ransac_iters = 500;
  double tol = 3.0;
  std::uint64_t seed = 0;
};

/// Nearest gallery neighbour per probe below `td`, then greedy one-to-one
/// filtering by ascending distance. Fills raw_matches and unique_matches.
MatchResult match_descriptors(const DescriptorSet& probe, const DescriptorSet& gallery, double td);

struct Correspondence {
  double x = 0.0;
  double y = 0.0;
  double u = 0.0;
  double v = 0.0;
};

/// 4+ point DLT with similarity normalization on both sides; h33 = 1.
std::optional<Homography> fit_homography(const std::vector<Correspondence>& pts);

/// Forward reprojection error of (x, y) -> (u, v).
double reprojection_error(const Homography& h, const Correspondence& c);

struct RansacResult {
  std::optional<Homography> homography;
  std::vector<int> inliers;  // indices into the input, ascending
};

RansacResult ransac_homography(const std::vector<Correspondence>& pts, int iterations, double tol,
                               std::uint64_t seed);

MatchResult match_images(const DescriptorSet& probe, const DescriptorSet& gallery,
                         const MatcherConfig& cfg = {});

enum class Decision { kAccept, kReject };

inline Decision decide(int score, int threshold) {
  return score >= threshold ? Decision::kAccept : Decision::kReject;
}

}  // namespace veinpatch
