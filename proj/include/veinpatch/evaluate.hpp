#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "veinpatch/pipeline.hpp"
#include "veinpatch/protocol.hpp"

namespace veinpatch {

enum class Protocol { kFvc2004, kCrossSession };

Protocol parse_protocol(const std::string& name);
std::string protocol_name(Protocol p);

PairList make_pairs(const DatasetManifest& manifest, Protocol protocol);

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Exceptions are
/// rethrown after all workers stop.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// Per-image pipeline output. A failed image has an empty set and an error.
struct ImageResult {
  DescriptorSet set;
  std::string error;
  std::size_t keypoints = 0;
};

std::vector<ImageResult> describe_manifest(const DatasetManifest& manifest, const PipelineConfig& cfg,
                                           const PipelineModels& models, const PipelineOptions& opts = {});

struct EvalReport {
  std::string protocol;
  std::size_t images = 0;
  std::size_t failed_images = 0;
  std::vector<std::string> failures;
  std::vector<std::string> warnings;
  std::vector<int> genuine_scores;
  std::vector<int> imposter_scores;
  double mean_keypoints = 0.0;
  RocCurve roc;
};

/// Scores every pair (RANSAC seeded per pair) and computes the ROC.
EvalReport score_pairs(const DatasetManifest& manifest, const std::vector<ImageResult>& images,
                       const PairList& pairs, const MatcherConfig& matcher, int threads);

EvalReport evaluate(const DatasetManifest& manifest, const PipelineConfig& cfg, Protocol protocol,
                    const PipelineOptions& opts = {});

/// Counts, EER, threshold, per-threshold FAR/FRR and score histograms.
std::string report_json(const EvalReport& report);
std::string roc_csv(const RocCurve& roc);

enum class SweepAxis { kC, kKs };

struct SweepRow {
  int value = 0;
  double eer = 0.0;
  double mean_keypoints = 0.0;
  double mean_runtime_ms = 0.0;
};

/// Values lo..hi inclusive; ROI and vein maps are computed once.
std::vector<SweepRow> sweep(const DatasetManifest& manifest, const PipelineConfig& cfg, Protocol protocol,
                            SweepAxis axis, int lo, int hi,
                            const std::function<void(const SweepRow&)>& on_row = {});

std::string sweep_csv(SweepAxis axis, const std::vector<SweepRow>& rows);

}  // namespace veinpatch
