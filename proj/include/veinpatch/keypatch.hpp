#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "veinpatch/imaging.hpp"

namespace veinpatch {

inline constexpr int kPatchSize = 32;

struct Keypoint {
  int x = 0;
  int y = 0;
  double orientation = -1.0;
  int scale = 11;

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct KeypointConfig {
  int c = 4;
  int ks = 11;
  double sigma = 1.0;
  /// 8-bit level; candidates need a blurred value strictly above it.
  int candidate_threshold = 20;
  int min_candidates = 20;
};

struct Candidate {
  int x = 0;
  int y = 0;
  friend bool operator==(const Candidate&, const Candidate&) = default;
};

/// Skeleton pixels of the blurred map above the candidate threshold, in
/// row-major order.
std::vector<Candidate> skeleton_candidates(const ProbMap& map, double sigma, int candidate_threshold);

/// Greedy square-mask reduction over `candidates` in their given order.
std::vector<Candidate> reduce_candidates(const std::vector<Candidate>& candidates, int width,
                                         int height, int c);

std::vector<Keypoint> detect_keypoints(const ProbMap& map, const KeypointConfig& cfg = {});

using Patch = ProbMap;

/// ks x ks window around the keypoint, zero outside the map, rescaled to 32x32.
Patch extract_patch(const ProbMap& map, const Keypoint& kp);

std::vector<Patch> extract_patches(const ProbMap& map, const std::vector<Keypoint>& kps);

std::string format_keypoints_csv(const std::vector<Keypoint>& kps);
std::vector<Keypoint> parse_keypoints_csv(const std::string& text);
void write_keypoints(const std::filesystem::path& path, const std::vector<Keypoint>& kps);
std::vector<Keypoint> read_keypoints(const std::filesystem::path& path);

}  // namespace veinpatch
