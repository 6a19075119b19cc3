#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "support.hpp"
#include "veinpatch/error.hpp"
#include "veinpatch/keypatch.hpp"

using namespace veinpatch;

namespace {

// Three ribbons meeting at (cx, cy), each 3 px wide.
ProbMap three_branch(int w, int h, int cx, int cy) {
  ProbMap m(w, h, 0.0);
  const double angles[3] = {-1.9, 0.2, 2.4};
  for (double a : angles) {
    for (int t = 0; t < 32; ++t) {
      const int x = cx + static_cast<int>(std::lround(t * std::cos(a)));
      const int y = cy + static_cast<int>(std::lround(t * std::sin(a)));
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) m.at(x + dx, y + dy) = 0.9;
    }
  }
  return m;
}

std::vector<vptest::Alg1Point> points(const std::vector<Keypoint>& kps) {
  std::vector<vptest::Alg1Point> out;
  for (const Keypoint& k : kps) out.push_back({k.x, k.y});
  return out;
}

}  // namespace

TEST_SUITE("keypatch") {

TEST_CASE("empty map has too few candidates") {
  try {
    detect_keypoints(ProbMap(64, 32, 0.0));
    FAIL("expected insufficient minutiae");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInsufficientMinutiae);
  }
}

TEST_CASE("greedy mask keeps only the first of two close candidates") {
  const auto kept = reduce_candidates({{5, 5}, {8, 7}}, 20, 20, 4);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0] == Candidate{5, 5});
  // Chebyshev distance 5 > c survives
  CHECK(reduce_candidates({{5, 5}, {10, 9}}, 20, 20, 4).size() == 2);
  // the mask is clipped at the border
  CHECK(reduce_candidates({{0, 0}, {1, 1}, {19, 19}}, 20, 20, 1).size() == 2);
  // c = 0 keeps everything
  CHECK(reduce_candidates({{1, 1}, {2, 1}, {3, 1}}, 5, 5, 0).size() == 3);
  CHECK_THROWS_AS(reduce_candidates({{1, 1}}, 5, 5, -1), Error);
}

TEST_CASE("masked candidates do not mask further points") {
  // (6,1) is masked by (2,1); (9,1) lies 3 from (6,1) but 7 from (2,1), so it is kept
  const auto kept = reduce_candidates({{2, 1}, {6, 1}, {9, 1}}, 12, 3, 4);
  CHECK(kept == std::vector<Candidate>{{2, 1}, {9, 1}});
}

TEST_CASE("three-branch phantom matches the algorithm replay") {
  const ProbMap m = three_branch(120, 90, 60, 45);
  for (int c : {1, 2, 4, 7}) {
    KeypointConfig cfg;
    cfg.c = c;
    const auto kps = detect_keypoints(m, cfg);
    const auto replay = vptest::replay_alg1(m, c, cfg.sigma, cfg.candidate_threshold);
    CHECK(replay.candidates.size() >= 20);
    CHECK(points(kps) == replay.kept);
    for (const Keypoint& k : kps) {
      CHECK(k.orientation == -1.0);
      CHECK(k.scale == cfg.ks);
    }
  }
}

TEST_CASE("random stroke maps match the algorithm replay") {
  Rng rng(77);
  int checked = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const ProbMap m = vptest::random_stroke_map(rng, 160, 80);
    KeypointConfig cfg;
    cfg.c = rng.uniform_int(1, 8);
    const auto replay = vptest::replay_alg1(m, cfg.c, cfg.sigma, cfg.candidate_threshold);
    if (replay.candidates.size() < 20) {
      CHECK_THROWS_AS(detect_keypoints(m, cfg), Error);
      continue;
    }
    CHECK(points(detect_keypoints(m, cfg)) == replay.kept);
    ++checked;
  }
  CHECK(checked > 20);
}

TEST_CASE("keypoints are thresholded skeleton pixels") {
  Rng rng(3);
  const ProbMap m = vptest::random_stroke_map(rng, 128, 96);
  const ProbMap g = gaussian_blur(m, 1.0);
  const BinaryImage s = skeletonize(binarize(g, 20 / 255.0));
  for (const Keypoint& k : detect_keypoints(m)) {
    CHECK(s.at(k.x, k.y) != 0);
    CHECK(g.at(k.x, k.y) * 255.0 > 20.0);
  }
}

TEST_CASE("min_candidates boundary") {
  const ProbMap m = three_branch(120, 90, 60, 45);
  const auto n = static_cast<int>(skeleton_candidates(m, 1.0, 20).size());
  KeypointConfig cfg;
  cfg.min_candidates = n;
  CHECK_NOTHROW(detect_keypoints(m, cfg));
  cfg.min_candidates = n + 1;
  CHECK_THROWS_AS(detect_keypoints(m, cfg), Error);
}

TEST_CASE("appending below-threshold columns leaves keypoints unchanged") {
  const ProbMap m = three_branch(120, 90, 60, 45);
  ProbMap wider(160, 90, 0.0);
  for (int y = 0; y < 90; ++y)
    for (int x = 0; x < 160; ++x) wider.at(x, y) = x < 120 ? m.at(x, y) : 0.02;
  CHECK(detect_keypoints(wider) == detect_keypoints(m));
}

TEST_CASE("translation moves every keypoint by the same offset") {
  const ProbMap a = three_branch(140, 100, 60, 45);
  const ProbMap b = three_branch(140, 100, 67, 49);
  const auto ka = detect_keypoints(a), kb = detect_keypoints(b);
  REQUIRE(ka.size() == kb.size());
  for (std::size_t i = 0; i < ka.size(); ++i) {
    CHECK(kb[i].x == ka[i].x + 7);
    CHECK(kb[i].y == ka[i].y + 4);
  }
}

TEST_CASE("patch of a constant map is constant") {
  const Patch p = extract_patch(ProbMap(64, 48, 0.5), Keypoint{32, 24, -1.0, 11});
  CHECK(p.width() == kPatchSize);
  CHECK(p.height() == kPatchSize);
  for (double v : p.pixels()) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("corner keypoint pads the window with zeros") {
  const ProbMap ones(40, 40, 1.0);
  const Patch p = extract_patch(ones, Keypoint{0, 0, -1.0, 11});
  // the 11x11 window starts at (-5, -5): its first five rows and columns are padding
  ProbMap window(11, 11, 0.0);
  for (int y = 5; y < 11; ++y)
    for (int x = 5; x < 11; ++x) window.at(x, y) = 1.0;
  const ProbMap expect = resize(window, 32, 32);
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(p.pixels()[i] == doctest::Approx(expect.pixels()[i]).epsilon(1e-12));
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 32; ++x) CHECK(p.at(x, y) == 0.0);
  for (int y = 22; y < 32; ++y)
    for (int x = 22; x < 32; ++x) CHECK(p.at(x, y) == 1.0);
}

TEST_CASE("ks 32 interior patch is the raw window") {
  Rng rng(9);
  ProbMap m(80, 70, 0.0);
  for (double& v : m.pixels()) v = rng.uniform();
  const Patch p = extract_patch(m, Keypoint{40, 30, -1.0, 32});
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) CHECK(p.at(x, y) == doctest::Approx(m.at(24 + x, 14 + y)).epsilon(1e-12));
}

TEST_CASE("patch values stay in the unit interval") {
  Rng rng(10);
  const ProbMap m = vptest::random_stroke_map(rng, 100, 60);
  for (const Patch& p : extract_patches(m, detect_keypoints(m)))
    for (double v : p.pixels()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  const Patch zero = extract_patch(ProbMap(30, 30, 0.0), Keypoint{3, 27, -1.0, 15});
  for (double v : zero.pixels()) CHECK(v == 0.0);
}

TEST_CASE("keypoint CSV round trip and rejection") {
  const std::vector<Keypoint> kps{{1, 2, -1.0, 11}, {30, 4, -1.0, 7}};
  const std::string text = format_keypoints_csv(kps);
  CHECK(text == "x,y,scale\n1,2,11\n30,4,7\n");
  CHECK(parse_keypoints_csv(text) == kps);
  CHECK_THROWS_AS(parse_keypoints_csv("1,2\n"), Error);
  CHECK_THROWS_AS(parse_keypoints_csv("1,2,0\n"), Error);
  CHECK_THROWS_AS(parse_keypoints_csv("1,2,3x\n"), Error);
  const auto dir = vptest::temp_dir("kps");
  write_keypoints(dir / "k.csv", kps);
  CHECK(read_keypoints(dir / "k.csv") == kps);
}

}  // TEST_SUITE
