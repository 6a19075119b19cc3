#include "veinpatch/keypatch.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "veinpatch/pgm.hpp"

namespace veinpatch {

std::vector<Candidate> skeleton_candidates(const ProbMap& map, double sigma, int candidate_threshold) {
  require(candidate_threshold >= 0 && candidate_threshold <= 255, ErrorCode::kInvalidParameter,
          "candidate threshold must be an 8-bit level");
  const ProbMap blurred = gaussian_blur(map, sigma);
  const double level = candidate_threshold / 255.0;
  const BinaryImage skeleton = skeletonize(binarize(blurred, level));
  std::vector<Candidate> out;
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      if (skeleton.at(x, y) && blurred.at(x, y) * 255.0 > candidate_threshold) out.push_back({x, y});
    }
  }
  return out;
}

std::vector<Candidate> reduce_candidates(const std::vector<Candidate>& candidates, int width,
                                         int height, int c) {
  require(c >= 0, ErrorCode::kInvalidParameter, "reduction factor c must be non-negative");
  BinaryImage mask(width, height, 1);
  std::vector<Candidate> kept;
  for (const Candidate& p : candidates) {
    if (!mask.at(p.x, p.y)) continue;
    const int y0 = std::max(0, p.y - c), y1 = std::min(height - 1, p.y + c);
    const int x0 = std::max(0, p.x - c), x1 = std::min(width - 1, p.x + c);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) mask.at(x, y) = 0;
    }
    kept.push_back(p);
  }
  return kept;
}

std::vector<Keypoint> detect_keypoints(const ProbMap& map, const KeypointConfig& cfg) {
  require(cfg.ks > 0, ErrorCode::kInvalidParameter, "keypoint scale ks must be positive");
  const std::vector<Candidate> candidates =
      skeleton_candidates(map, cfg.sigma, cfg.candidate_threshold);
  if (static_cast<int>(candidates.size()) < cfg.min_candidates) {
    fail(ErrorCode::kInsufficientMinutiae,
         "found " + std::to_string(candidates.size()) + " skeleton candidates, need at least " +
             std::to_string(cfg.min_candidates));
  }
  std::vector<Keypoint> out;
  for (const Candidate& p : reduce_candidates(candidates, map.width(), map.height(), cfg.c)) {
    out.push_back({p.x, p.y, -1.0, cfg.ks});
  }
  return out;
}

Patch extract_patch(const ProbMap& map, const Keypoint& kp) {
  require(kp.scale > 0, ErrorCode::kInvalidParameter, "keypoint scale must be positive");
  const int half = kp.scale / 2;
  return resize(crop(map, kp.x - half, kp.y - half, kp.scale, kp.scale), kPatchSize, kPatchSize);
}

std::vector<Patch> extract_patches(const ProbMap& map, const std::vector<Keypoint>& kps) {
  std::vector<Patch> out;
  out.reserve(kps.size());
  for (const Keypoint& kp : kps) out.push_back(extract_patch(map, kp));
  return out;
}

std::string format_keypoints_csv(const std::vector<Keypoint>& kps) {
  std::string out = "x,y,scale\n";
  for (const Keypoint& kp : kps) {
    out += std::to_string(kp.x) + "," + std::to_string(kp.y) + "," + std::to_string(kp.scale) + "\n";
  }
  return out;
}

std::vector<Keypoint> parse_keypoints_csv(const std::string& text) {
  std::vector<Keypoint> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#' || line == "x,y,scale") continue;
    int v[3];
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (int i = 0; i < 3; ++i) {
      auto [next, ec] = std::from_chars(p, end, v[i]);
      const bool sep_ok = i < 2 ? (next < end && *next == ',') : next == end;
      require(ec == std::errc{} && sep_ok, ErrorCode::kFormat,
              "malformed keypoint line " + std::to_string(line_no) + ": '" + line + "'");
      p = next + 1;
    }
    require(v[0] >= 0 && v[1] >= 0 && v[2] > 0, ErrorCode::kFormat,
            "invalid keypoint on line " + std::to_string(line_no));
    out.push_back({v[0], v[1], -1.0, v[2]});
  }
  return out;
}

void write_keypoints(const std::filesystem::path& path, const std::vector<Keypoint>& kps) {
  const std::string text = format_keypoints_csv(kps);
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<Keypoint> read_keypoints(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  return parse_keypoints_csv(std::string(bytes.begin(), bytes.end()));
}

}  // namespace veinpatch
