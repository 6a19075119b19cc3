#pragma once

#include <cstdint>
#include <filesystem>

#include "veinpatch/imaging.hpp"
#include "veinpatch/protocol.hpp"

namespace veinpatch {

struct SynthSpec {
  int classes = 10;
  int samples_per_class = 4;
  /// 1 or 2; with 2, each session holds samples_per_class images.
  int sessions = 1;
  int ridge_min = 3;
  int ridge_max = 8;
  double jitter = 2.0;  // px, uniform translation per sample
  double rotation_jitter_deg = 1.5;
  double contrast_lo = 0.85;
  double contrast_hi = 1.15;
  double brightness = 10.0;  // +- gray levels
  double noise = 3.0;        // gray-level standard deviation
  int width = 320;
  int height = 160;
  std::uint64_t seed = 0;
};

struct SynthSample {
  GrayImage image;
  /// Ridge profile in image coordinates.
  ProbMap label;
};

/// Deterministic in (spec.seed, class_id, session, sample).
SynthSample synth_sample(const SynthSpec& spec, int class_id, int session, int sample);

/// Number of ridges placed for a class.
int synth_ridge_count(const SynthSpec& spec, int class_id);

/// Writes images/, labels/ and manifest.csv under `out_dir`.
DatasetManifest synth_generate(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace veinpatch
