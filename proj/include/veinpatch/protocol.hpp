#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace veinpatch {

struct ManifestEntry {
  std::string path;
  int class_id = 0;
  int session = 1;
  int sample_index = 0;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  /// Relative entry paths resolve against this directory.
  std::filesystem::path base;

  std::filesystem::path resolve(const ManifestEntry& e) const;
};

/// CSV `path,class_id,session,sample_index`; `#` lines are comments.
DatasetManifest parse_manifest(const std::string& text);
std::string format_manifest(const DatasetManifest& manifest, const std::string& comment = {});
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest,
                    const std::string& comment = {});

using IndexPair = std::pair<std::size_t, std::size_t>;

/// Pairs of manifest entry indices.
struct PairList {
  std::vector<IndexPair> genuine;
  std::vector<IndexPair> imposter;
  std::vector<std::string> warnings;
};

/// Pooled sessions: every same-class unordered pair is genuine; the first
/// sample of class i against the first of class j (i < j) is imposter.
PairList fvc2004_pairs(const DatasetManifest& manifest);

/// Session 1 x session 2 within a class is genuine; the first session-1
/// sample of class i against the first session-2 sample of class j (i < j)
/// is imposter. Classes lacking a session are dropped with a warning.
PairList cross_session_pairs(const DatasetManifest& manifest);

struct RocCurve {
  std::vector<double> thresholds;
  std::vector<double> far;
  std::vector<double> frr;
  double eer = 0.0;
  double eer_threshold = 0.0;
};

/// Accept when score >= threshold. Thresholds are the distinct scores plus
/// one past the maximum; the EER is interpolated linearly at the first
/// threshold where FAR no longer exceeds FRR.
RocCurve roc_eer(const std::vector<double>& genuine, const std::vector<double>& imposter);

}  // namespace veinpatch
