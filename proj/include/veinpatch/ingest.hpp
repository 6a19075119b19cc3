#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "veinpatch/protocol.hpp"

namespace veinpatch {

struct IngestResult {
  DatasetManifest manifest;
  /// "relative/path: reason" for files that matched but could not be read.
  std::vector<std::string> excluded;
};

/// Walks `root` for PGM files whose root-relative path matches `layout`, a
/// pattern with {class}, {session} and {sample} placeholders (integers), for
/// example "cls_{class}/s{session}/img_{sample}.pgm". Without {session}
/// every entry is session 1. Manifest paths are relative to `manifest_dir`.
IngestResult ingest(const std::filesystem::path& root, const std::string& layout,
                    const std::filesystem::path& manifest_dir);

}  // namespace veinpatch
