#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "veinpatch/descriptor.hpp"
#include "veinpatch/keypatch.hpp"
#include "veinpatch/matcher.hpp"
#include "veinpatch/roi.hpp"
#include "veinpatch/unet.hpp"
#include "veinpatch/veinlabel.hpp"

namespace veinpatch {

struct PipelineConfig {
  RoiConfig roi;
  VeinLabelConfig vein;
  /// "traditional" (curvature extractor) or "unet".
  std::string extractor = "traditional";
  std::string unet_model;
  KeypointConfig keypoint;
  /// "raw" or a path to a trained descriptor model.
  std::string descriptor = "raw";
  MatcherConfig matcher;
  TrainConfig unet_train;
  DescTrainConfig desc_train;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Models referenced by a PipelineConfig, loaded once and shared read-only.
struct PipelineModels {
  std::shared_ptr<UNetModel> unet;
  std::shared_ptr<DescModel> desc;
};

PipelineModels load_models(const PipelineConfig& cfg);

struct PipelineArtifacts {
  RoiResult roi;
  ProbMap vein;
  std::vector<Keypoint> keypoints;
  std::vector<Patch> patches;
  DescriptorSet descriptors;
};

ProbMap vein_map(const GrayImage& roi, const PipelineConfig& cfg, const PipelineModels& models);
/// `source` names the input in stage errors.
PipelineArtifacts run_pipeline(const GrayImage& image, const PipelineConfig& cfg,
                               const PipelineModels& models, const std::string& source = "<memory>");

/// Keypoints, patches and descriptors from an existing vein map.
DescriptorSet describe_vein_map(const ProbMap& vein, const PipelineConfig& cfg, const PipelineModels& models,
                                std::vector<Keypoint>* keypoints = nullptr,
                                std::vector<Patch>* patches = nullptr);

struct PipelineOptions {
  std::optional<std::filesystem::path> dump_dir;
  /// Descriptor sets are cached here by content hash when set.
  std::optional<std::filesystem::path> cache_dir;
};

DescriptorSet run_pipeline(const std::filesystem::path& image_path, const PipelineConfig& cfg,
                           const PipelineModels& models, const PipelineOptions& opts = {});

/// Stable serialization of every setting that affects descriptors.
std::string descriptor_cache_key(const PipelineConfig& cfg);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h = 0xcbf29ce484222325ull);

/// Tiles patches into one gray image for inspection.
GrayImage patch_grid(const std::vector<Patch>& patches, int columns = 16);

}  // namespace veinpatch
