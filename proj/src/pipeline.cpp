#include "veinpatch/pipeline.hpp"

#include <cstdio>
#include <sstream>

#include "veinpatch/pgm.hpp"

namespace veinpatch {

PipelineModels load_models(const PipelineConfig& cfg) {
  PipelineModels models;
  if (cfg.extractor == "unet") {
    require(!cfg.unet_model.empty(), ErrorCode::kInvalidParameter,
            "extractor 'unet' needs unet.model to name a trained model");
    models.unet = std::make_shared<UNetModel>(load_unet(cfg.unet_model));
  } else {
    require(cfg.extractor == "traditional", ErrorCode::kInvalidParameter,
            "extractor must be 'traditional' or 'unet', got '" + cfg.extractor + "'");
  }
  if (cfg.descriptor != "raw") models.desc = std::make_shared<DescModel>(load_desc(cfg.descriptor));
  return models;
}

ProbMap vein_map(const GrayImage& roi, const PipelineConfig& cfg, const PipelineModels& models) {
  if (cfg.extractor == "unet") {
    require(models.unet != nullptr, ErrorCode::kState, "U-Net extractor selected but no model loaded");
    return infer(*models.unet, roi);
  }
  return make_soft_label(roi, cfg.vein.sigma_curv, cfg.vein.sigma_smooth).map;
}

DescriptorSet describe_vein_map(const ProbMap& vein, const PipelineConfig& cfg, const PipelineModels& models,
                                std::vector<Keypoint>* keypoints_out, std::vector<Patch>* patches_out) {
  const std::vector<Keypoint> kps = detect_keypoints(vein, cfg.keypoint);
  const std::vector<Patch> patches = extract_patches(vein, kps);
  DescriptorSet set;
  if (models.desc) {
    set.keypoints = kps;
    set.descriptors = describe(*models.desc, patches);
  } else {
    for (std::size_t i = 0; i < kps.size(); ++i) {
      try {
        set.descriptors.push_back(raw_descriptor(patches[i]));
        set.keypoints.push_back(kps[i]);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kDegeneratePatch) throw;
      }
    }
  }
  if (keypoints_out) *keypoints_out = kps;
  if (patches_out) *patches_out = patches;
  return set;
}

PipelineArtifacts run_pipeline(const GrayImage& image, const PipelineConfig& cfg, const PipelineModels& models,
                               const std::string& source) {
  PipelineArtifacts out;
  const char* stage = "roi";
  try {
    out.roi = extract_roi(image, cfg.roi);
    stage = "vein";
    out.vein = vein_map(out.roi.roi, cfg, models);
    stage = "keypoints";
    out.descriptors = describe_vein_map(out.vein, cfg, models, &out.keypoints, &out.patches);
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, source, e);
  }
  return out;
}

std::string descriptor_cache_key(const PipelineConfig& cfg) {
  std::ostringstream k;
  k.precision(17);
  k << "v1|roi:" << cfg.roi.threshold << ',' << cfg.roi.window << ',' << cfg.roi.gabor_wavelength << ','
    << cfg.roi.gabor_sigma << ',' << cfg.roi.out_w << ',' << cfg.roi.out_h << ','
    << cfg.roi.min_edge_points << ',' << cfg.roi.inset << "|vein:" << cfg.vein.sigma_curv << ','
    << cfg.vein.sigma_smooth << "|ext:" << cfg.extractor;
  if (cfg.extractor == "unet") k << ':' << cfg.unet_model;
  k << "|kp:" << cfg.keypoint.c << ',' << cfg.keypoint.ks << ',' << cfg.keypoint.sigma << ','
    << cfg.keypoint.candidate_threshold << ',' << cfg.keypoint.min_candidates << "|desc:" << cfg.descriptor;
  return k.str();
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h) {
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

std::uint64_t file_hash(const std::filesystem::path& p) {
  if (p.empty() || !std::filesystem::exists(p)) return 0;
  return fnv1a64(read_file_bytes(p));
}

}  // namespace

GrayImage patch_grid(const std::vector<Patch>& patches, int columns) {
  require(columns > 0, ErrorCode::kInvalidParameter, "patch grid needs at least one column");
  const int n = std::max<int>(1, static_cast<int>(patches.size()));
  const int cols = std::min(columns, n);
  const int rows = (n + cols - 1) / cols;
  GrayImage grid(cols * (kPatchSize + 1), rows * (kPatchSize + 1), 0);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const int gx = static_cast<int>(i) % cols * (kPatchSize + 1);
    const int gy = static_cast<int>(i) / cols * (kPatchSize + 1);
    const GrayImage g = to_gray(patches[i]);
    for (int y = 0; y < kPatchSize; ++y) {
      for (int x = 0; x < kPatchSize; ++x) grid.at(gx + x, gy + y) = g.at(x, y);
    }
  }
  return grid;
}

DescriptorSet run_pipeline(const std::filesystem::path& image_path, const PipelineConfig& cfg,
                           const PipelineModels& models, const PipelineOptions& opts) {
  std::vector<std::uint8_t> bytes;
  GrayImage image;
  try {
    bytes = read_file_bytes(image_path);
    image = decode_pgm(bytes);
  } catch (const Error& e) {
    throw StageError("load", image_path.string(), e);
  }

  std::filesystem::path cache_file;
  if (opts.cache_dir && !opts.dump_dir) {
    std::string key = descriptor_cache_key(cfg);
    std::uint64_t h = fnv1a64(bytes);
    h = fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(key.data()), key.size()), h);
    // Model contents, not just their paths, feed the key.
    const std::uint64_t mh[2] = {cfg.extractor == "unet" ? file_hash(cfg.unet_model) : 0,
                                 cfg.descriptor != "raw" ? file_hash(cfg.descriptor) : 0};
    h = fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(mh), sizeof mh), h);
    char name[40];
    std::snprintf(name, sizeof name, "%016llx.bin", static_cast<unsigned long long>(h));
    cache_file = *opts.cache_dir / name;
    if (std::filesystem::exists(cache_file)) return read_descriptor_set(cache_file, cfg.keypoint.ks);
  }

  const PipelineArtifacts art = run_pipeline(image, cfg, models, image_path.string());
  if (opts.dump_dir) {
    const std::filesystem::path& d = *opts.dump_dir;
    write_pgm(d / "roi.pgm", art.roi.roi);
    write_pgm(d / "vein.pgm", to_gray(art.vein));
    write_keypoints(d / "keypoints.csv", art.keypoints);
    write_pgm(d / "patches.pgm", patch_grid(art.patches));
    write_descriptor_set(d / "descriptors.bin", art.descriptors);
  }
  if (!cache_file.empty()) write_descriptor_set(cache_file, art.descriptors);
  return art.descriptors;
}

}  // namespace veinpatch
