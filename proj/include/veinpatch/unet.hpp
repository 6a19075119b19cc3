#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "veinpatch/graph.hpp"
#include "veinpatch/imaging.hpp"
#include "veinpatch/layers.hpp"
#include "veinpatch/veinlabel.hpp"

namespace veinpatch {

/// Network input size (columns x rows).
inline constexpr int kUNetInputW = 256;
inline constexpr int kUNetInputH = 128;

struct UNetConfig {
  /// Width of the first level; levels use base, 2*base, 4*base, 8*base.
  int base_width = 16;
  bool batch_norm = true;
  std::uint64_t seed = 0;
};

/// Four-level encoder/decoder with channel-concatenation skips. Decoder
/// levels upsample by nearest-neighbour replication followed by a 3x3 conv.
template <typename T>
class UNet {
 public:
  explicit UNet(const UNetConfig& cfg = {});

  /// [N,1,H,W] -> [N,1,H,W] probabilities; H and W must be divisible by 8.
  Var forward(Graph<T>& g, Var input);

  std::vector<Parameter<T>*> parameters();
  std::vector<std::pair<std::string, Tensor<T>*>> state();

  /// Convolution weights and biases.
  std::size_t conv_parameter_count() const;
  /// Batch-norm scale and shift.
  std::size_t bn_parameter_count() const;
  std::size_t parameter_count() const { return conv_parameter_count() + bn_parameter_count(); }

  std::vector<int> channel_widths() const;
  const UNetConfig& config() const noexcept { return cfg_; }

 private:
  struct DoubleConv {
    ConvUnit<T> first;
    ConvUnit<T> second;
  };

  DoubleConv make_double(const std::string& name, int in, int out, Rng& rng) const;

  UNetConfig cfg_;
  std::vector<DoubleConv> encoder_;  // 4 levels, last is the bottleneck
  std::vector<ConvUnit<T>> up_;      // 3 upsample convs, deepest first
  std::vector<DoubleConv> decoder_;  // 3 levels, deepest first
  ConvLayer<T> head_;
};

extern template class UNet<float>;
extern template class UNet<double>;

using UNetModel = UNet<float>;

/// Mean over the batch of Dice(s) + lambda * mean-pixel BCE.
template <typename T>
Var dice_bce_loss(Graph<T>& g, Var pred, const Tensor<T>& label, double smoothing, double bce_weight);

/// Convenience evaluation on maps; shapes must match pairwise.
double dice_bce_loss(const std::vector<ProbMap>& pred, const std::vector<ProbMap>& label,
                     double smoothing, double bce_weight);

struct TrainConfig {
  int batch_size = 16;
  double learning_rate = 1e-4;
  int epochs = 20;
  double smoothing = 1.0;
  double bce_weight = 1.0;
  std::uint64_t seed = 0;
};

struct TrainSample {
  GrayImage roi;
  SoftLabel label;
};

struct TrainLog {
  std::vector<double> epoch_loss;
  int skipped_degenerate = 0;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

TrainLog train_unet(UNetModel& model, const std::vector<TrainSample>& data, const TrainConfig& cfg,
                    const EpochCallback& on_epoch = {});

/// Vein probability map aligned with `roi`.
ProbMap infer(UNetModel& model, const GrayImage& roi);

/// TP / (TP + FP) with prediction and label binarized at 0.5, pooled over
/// all pixels.
double precision_score(const std::vector<ProbMap>& pred, const std::vector<ProbMap>& label);

double precision_eval(UNetModel& model, const std::vector<TrainSample>& data);

struct UNetMetadata {
  UNetConfig arch;
  TrainConfig train;
  std::vector<double> epoch_loss;
};

/// Writes `path` (VPW1) and `path` + ".json".
void save_unet(const std::filesystem::path& path, UNetModel& model, const UNetMetadata& meta);
UNetModel load_unet(const std::filesystem::path& path);

}  // namespace veinpatch
