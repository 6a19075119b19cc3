#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "veinpatch/graph.hpp"
#include "veinpatch/keypatch.hpp"
#include "veinpatch/layers.hpp"

namespace veinpatch {

inline constexpr int kDescriptorDim = 128;

using Descriptor = std::array<float, kDescriptorDim>;

double descriptor_distance(const Descriptor& a, const Descriptor& b);

/// Keypoints of one image paired with their descriptors.
struct DescriptorSet {
  std::vector<Keypoint> keypoints;
  std::vector<Descriptor> descriptors;

  std::size_t size() const noexcept { return descriptors.size(); }
  friend bool operator==(const DescriptorSet&, const DescriptorSet&) = default;
};

/// Little-endian: u32 count, then per keypoint u16 x, u16 y, 128 x f32.
std::vector<std::uint8_t> encode_descriptor_set(const DescriptorSet& set);
DescriptorSet decode_descriptor_set(std::span<const std::uint8_t> bytes, int scale = 11);
void write_descriptor_set(const std::filesystem::path& path, const DescriptorSet& set);
DescriptorSet read_descriptor_set(const std::filesystem::path& path, int scale = 11);

/// Convolutional embedder: six 3x3 conv/BN/ReLU units (32,32,64,64,128,128
/// channels, stride 2 at units 3 and 5), an 8x8 conv to 128, L2 normalization.
template <typename T>
class DescNet {
 public:
  explicit DescNet(std::uint64_t seed = 0);

  /// [N,1,32,32] -> [N,128] unit rows. Inputs should be standardized.
  Var forward(Graph<T>& g, Var patches);

  std::vector<Parameter<T>*> parameters();
  std::vector<std::pair<std::string, Tensor<T>*>> state();
  std::size_t parameter_count() const;

 private:
  std::vector<ConvUnit<T>> units_;
  ConvLayer<T> head_;
};

extern template class DescNet<float>;
extern template class DescNet<double>;

using DescModel = DescNet<float>;

/// Per-patch zero mean, unit variance, stacked to [N,1,32,32].
template <typename T>
Tensor<T> standardize_patches(std::span<const Patch> patches);

Descriptor describe(DescModel& model, const Patch& patch);
std::vector<Descriptor> describe(DescModel& model, std::span<const Patch> patches);

/// Training-free descriptor: centered, normalized, projected by a fixed
/// orthonormal 128x1024 matrix, renormalized.
Descriptor raw_descriptor(const Patch& patch);

/// Quadratic hinge triplet loss with hardest in-batch negatives.
/// `anchors` and `positives` are [N, D].
template <typename T>
Var fos_loss(Graph<T>& g, Var anchors, Var positives, double margin);

/// Mean over anchors of the second-order distance between the anchor-set
/// and positive-set distance structures.
template <typename T>
Var sos_regularizer(Graph<T>& g, Var anchors, Var positives);

double fos_loss(std::span<const Descriptor> anchors, std::span<const Descriptor> positives,
                double margin);
double sos_regularizer(std::span<const Descriptor> anchors, std::span<const Descriptor> positives);

/// classes[k] holds the samples of patch class k.
struct PatchCorpus {
  std::vector<std::vector<Patch>> classes;
};

struct PatchCorpusSpec {
  int classes = 64;
  int samples_per_class = 8;
  int max_shift = 2;
  double contrast_lo = 0.7;
  double contrast_hi = 1.0;
  double noise = 0.03;
  std::uint64_t seed = 0;
};

/// Line and junction ribbons drawn through the patch centre, with shift and
/// photometric augmentation per sample.
PatchCorpus synth_patch_corpus(const PatchCorpusSpec& spec);

/// One subdirectory per class, PGM files inside; non-32x32 patches are resized.
PatchCorpus load_patch_corpus(const std::filesystem::path& root);
void save_patch_corpus(const std::filesystem::path& root, const PatchCorpus& corpus);

struct DescTrainConfig {
  int batch_classes = 32;
  double margin = 1.0;
  double learning_rate = 1e-3;
  int epochs = 60;
  std::uint64_t seed = 0;
};

struct DescTrainLog {
  std::vector<double> epoch_loss;
};

using DescEpochCallback = std::function<void(int epoch, double mean_loss)>;

DescTrainLog train_desc(DescModel& model, const PatchCorpus& corpus, const DescTrainConfig& cfg,
                        const DescEpochCallback& on_epoch = {});

/// Area under the ROC of pair distances: probability that a random
/// non-matching pair is farther apart than a random matching pair.
double pair_distance_auc(std::span<const double> matching, std::span<const double> non_matching);

/// Matching and non-matching distances over every pair of described samples.
void corpus_pair_distances(const std::vector<std::vector<Descriptor>>& described,
                           std::vector<double>& matching, std::vector<double>& non_matching);

void save_desc(const std::filesystem::path& path, DescModel& model);
DescModel load_desc(const std::filesystem::path& path);

}  // namespace veinpatch
