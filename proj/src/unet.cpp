#include "veinpatch/unet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

#include "json.hpp"
#include "veinpatch/adam.hpp"
#include "veinpatch/random.hpp"

namespace veinpatch {

template <typename T>
typename UNet<T>::DoubleConv UNet<T>::make_double(const std::string& name, int in, int out,
                                                   Rng& rng) const {
  return DoubleConv{ConvUnit<T>(name + ".0", in, out, 3, 1, 1, cfg_.batch_norm, true, rng),
                    ConvUnit<T>(name + ".1", out, out, 3, 1, 1, cfg_.batch_norm, true, rng)};
}

template <typename T>
UNet<T>::UNet(const UNetConfig& cfg) : cfg_(cfg) {
  require(cfg.base_width >= 1, ErrorCode::kInvalidParameter, "U-Net base width must be positive");
  Rng rng(cfg.seed);
  const std::vector<int> widths = channel_widths();
  int in = 1;
  for (std::size_t level = 0; level < widths.size(); ++level) {
    encoder_.push_back(make_double("enc" + std::to_string(level), in, widths[level], rng));
    in = widths[level];
  }
  for (int level = static_cast<int>(widths.size()) - 2; level >= 0; --level) {
    const int deep = widths[level + 1];
    const int out = widths[level];
    up_.emplace_back("up" + std::to_string(level), deep, out, 3, 1, 1, cfg_.batch_norm, true, rng);
    decoder_.push_back(make_double("dec" + std::to_string(level), 2 * out, out, rng));
  }
  head_ = ConvLayer<T>("head", widths.front(), 1, 1, 1, 0, rng);
}

template <typename T>
std::vector<int> UNet<T>::channel_widths() const {
  const int b = cfg_.base_width;
  return {b, 2 * b, 4 * b, 8 * b};
}

template <typename T>
Var UNet<T>::forward(Graph<T>& g, Var input) {
  const Tensor<T>& x = g.value(input);
  require(x.rank() == 4 && x.dim(1) == 1 && x.dim(2) % 8 == 0 && x.dim(3) % 8 == 0,
          ErrorCode::kShape, "U-Net expects [N,1,H,W] with H, W divisible by 8, got " +
                                 shape_string(x.shape()));
  std::vector<Var> skips;
  Var h = input;
  for (std::size_t level = 0; level < encoder_.size(); ++level) {
    if (level > 0) h = nn::maxpool2(g, h);
    h = encoder_[level].first.forward(g, h);
    h = encoder_[level].second.forward(g, h);
    skips.push_back(h);
  }
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    h = up_[i].forward(g, nn::upsample2(g, h));
    h = nn::concat_channels(g, skips[skips.size() - 2 - i], h);
    h = decoder_[i].first.forward(g, h);
    h = decoder_[i].second.forward(g, h);
  }
  return nn::sigmoid(g, head_.forward(g, h));
}

template <typename T>
std::vector<Parameter<T>*> UNet<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& d : encoder_) {
    d.first.collect(out);
    d.second.collect(out);
  }
  for (std::size_t i = 0; i < up_.size(); ++i) {
    up_[i].collect(out);
    decoder_[i].first.collect(out);
    decoder_[i].second.collect(out);
  }
  out.push_back(&head_.weight);
  out.push_back(&head_.bias);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> UNet<T>::state() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (auto& d : encoder_) {
    d.first.state(out);
    d.second.state(out);
  }
  for (std::size_t i = 0; i < up_.size(); ++i) {
    up_[i].state(out);
    decoder_[i].first.state(out);
    decoder_[i].second.state(out);
  }
  out.emplace_back(head_.weight.name, &head_.weight.value);
  out.emplace_back(head_.bias.name, &head_.bias.value);
  return out;
}

template <typename T>
std::size_t UNet<T>::conv_parameter_count() const {
  std::size_t n = head_.parameter_count();
  for (const auto& d : encoder_) n += d.first.conv.parameter_count() + d.second.conv.parameter_count();
  for (std::size_t i = 0; i < up_.size(); ++i) {
    n += up_[i].conv.parameter_count() + decoder_[i].first.conv.parameter_count() +
         decoder_[i].second.conv.parameter_count();
  }
  return n;
}

template <typename T>
std::size_t UNet<T>::bn_parameter_count() const {
  if (!cfg_.batch_norm) return 0;
  std::size_t n = 0;
  auto unit = [&](const ConvUnit<T>& u) { n += u.bn.gamma.value.size() + u.bn.beta.value.size(); };
  for (const auto& d : encoder_) {
    unit(d.first);
    unit(d.second);
  }
  for (std::size_t i = 0; i < up_.size(); ++i) {
    unit(up_[i]);
    unit(decoder_[i].first);
    unit(decoder_[i].second);
  }
  return n;
}

template class UNet<float>;
template class UNet<double>;

template <typename T>
Var dice_bce_loss(Graph<T>& g, Var pred, const Tensor<T>& label, double smoothing, double bce_weight) {
  const Tensor<T>& p = g.value(pred);
  require(p.shape() == label.shape(), ErrorCode::kShape,
          "loss shape mismatch: prediction " + shape_string(p.shape()) + " vs label " +
              shape_string(label.shape()));
  require(smoothing > 0.0 && bce_weight >= 0.0, ErrorCode::kInvalidParameter,
          "smoothing must be > 0 and BCE weight >= 0");
  const int n = p.dim(0);
  const std::size_t per = p.size() / n;
  // Keeps log() finite; the clamp has zero gradient.
  const double clip = std::is_same_v<T, float> ? 1e-6 : 1e-12;

  std::vector<double> inter(n, 0.0), total(n, 0.0);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    double bce = 0.0;
    for (std::size_t j = 0; j < per; ++j) {
      const double pv = p[i * per + j];
      const double yv = label[i * per + j];
      inter[i] += pv * yv;
      total[i] += pv + yv;
      const double pc = std::clamp(pv, clip, 1.0 - clip);
      bce -= yv * std::log(pc) + (1.0 - yv) * std::log(1.0 - pc);
    }
    const double dice = 1.0 - (2.0 * inter[i] + smoothing) / (total[i] + smoothing);
    loss += dice + bce_weight * bce / per;
  }
  loss /= n;

  auto label_copy = std::make_shared<Tensor<T>>(label);
  return g.record(
      "dice_bce_loss", {pred}, Tensor<T>({1}, static_cast<T>(loss)),
      [label_copy, inter, total, n, per, smoothing, bce_weight, clip](
          const Tensor<T>& gout, std::span<const Tensor<T>* const> in,
          std::span<Tensor<T>* const> gin) {
        const Tensor<T>& p = *in[0];
        const Tensor<T>& y = *label_copy;
        const double upstream = gout[0] / n;
        for (int i = 0; i < n; ++i) {
          const double den = total[i] + smoothing;
          const double num = 2.0 * inter[i] + smoothing;
          for (std::size_t j = 0; j < per; ++j) {
            const std::size_t k = i * per + j;
            const double pv = p[k];
            const double yv = y[k];
            double d = -(2.0 * yv * den - num) / (den * den);
            if (pv > clip && pv < 1.0 - clip) {
              d += bce_weight * (-yv / pv + (1.0 - yv) / (1.0 - pv)) / per;
            }
            (*gin[0])[k] += static_cast<T>(upstream * d);
          }
        }
      });
}

template Var dice_bce_loss<float>(Graph<float>&, Var, const Tensor<float>&, double, double);
template Var dice_bce_loss<double>(Graph<double>&, Var, const Tensor<double>&, double, double);

namespace {

template <typename T>
Tensor<T> stack_maps(const std::vector<ProbMap>& maps) {
  require(!maps.empty(), ErrorCode::kInvalidInput, "empty map batch");
  const int w = maps.front().width();
  const int h = maps.front().height();
  Tensor<T> out({static_cast<int>(maps.size()), 1, h, w});
  for (std::size_t i = 0; i < maps.size(); ++i) {
    require(maps[i].width() == w && maps[i].height() == h, ErrorCode::kShape,
            "maps in a batch must share dimensions");
    auto px = maps[i].pixels();
    std::copy(px.begin(), px.end(), out.data() + i * px.size());
  }
  return out;
}

bool label_is_degenerate(const SoftLabel& label) {
  if (label.degenerate) return true;
  auto px = label.map.pixels();
  return std::none_of(px.begin(), px.end(), [](double v) { return v >= 0.5; });
}

ProbMap network_input(const GrayImage& roi) { return resize(to_prob(roi), kUNetInputW, kUNetInputH); }

}  // namespace

double dice_bce_loss(const std::vector<ProbMap>& pred, const std::vector<ProbMap>& label,
                     double smoothing, double bce_weight) {
  require(pred.size() == label.size(), ErrorCode::kShape, "prediction/label batch size mismatch");
  Graph<double> g(Mode::kEval);
  const Tensor<double> p = stack_maps<double>(pred);
  const Tensor<double> y = stack_maps<double>(label);
  require(p.shape() == y.shape(), ErrorCode::kShape, "prediction/label shape mismatch");
  return g.value(dice_bce_loss(g, g.input(p), y, smoothing, bce_weight))[0];
}

TrainLog train_unet(UNetModel& model, const std::vector<TrainSample>& data, const TrainConfig& cfg,
                    const EpochCallback& on_epoch) {
  require(!data.empty(), ErrorCode::kInvalidInput, "training dataset is empty");
  require(cfg.batch_size >= 1 && cfg.epochs >= 1, ErrorCode::kInvalidParameter,
          "batch size and epochs must be positive");
  require(cfg.smoothing > 0.0 && cfg.bce_weight >= 0.0 && cfg.learning_rate > 0.0,
          ErrorCode::kInvalidParameter, "invalid loss/optimizer hyperparameters");

  TrainLog log;
  std::vector<ProbMap> inputs;
  std::vector<ProbMap> labels;
  for (const TrainSample& s : data) {
    if (label_is_degenerate(s.label)) {
      ++log.skipped_degenerate;
      continue;
    }
    require(s.label.map.width() == s.roi.width() && s.label.map.height() == s.roi.height(),
            ErrorCode::kShape, "soft label does not align with its ROI");
    inputs.push_back(network_input(s.roi));
    labels.push_back(resize(s.label.map, kUNetInputW, kUNetInputH));
  }
  if (log.skipped_degenerate > 0) {
    std::cerr << "warning: skipped " << log.skipped_degenerate << " degenerate soft label(s)\n";
  }
  require(!inputs.empty(), ErrorCode::kDegenerateLabel,
          "every soft label is degenerate; refusing to train");

  std::vector<Parameter<float>*> params = model.parameters();
  AdamState<float> adam(params, cfg.learning_rate);
  Rng rng(mix_seed(cfg.seed, 0x554e4554));
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<ProbMap> bx, by;
      for (std::size_t k = start; k < end; ++k) {
        bx.push_back(inputs[order[k]]);
        by.push_back(labels[order[k]]);
      }
      try {
        Graph<float> g(Mode::kTrain);
        const Var pred = model.forward(g, g.input(stack_maps<float>(bx)));
        const Var loss = dice_bce_loss(g, pred, stack_maps<float>(by), cfg.smoothing, cfg.bce_weight);
        const double value = g.value(loss)[0];
        require(std::isfinite(value), ErrorCode::kNonFinite, "loss is not finite");
        zero_grads<float>(params);
        g.backward(loss);
        adam_step<float>(adam, params, cfg.learning_rate);
        epoch_total += value * static_cast<double>(end - start);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kNonFinite) {
          throw Error(ErrorCode::kTrainingDiverged,
                      "training diverged in epoch " + std::to_string(epoch + 1) + ": " + e.what());
        }
        throw;
      }
    }
    const double mean = epoch_total / static_cast<double>(order.size());
    log.epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch + 1, mean);
  }
  return log;
}

ProbMap infer(UNetModel& model, const GrayImage& roi) {
  Graph<float> g(Mode::kEval);
  const Var out = model.forward(g, g.input(stack_maps<float>({network_input(roi)})));
  const Tensor<float>& y = g.value(out);
  ProbMap net(kUNetInputW, kUNetInputH);
  auto px = net.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = std::clamp<double>(y[i], 0.0, 1.0);
  return resize(net, roi.width(), roi.height());
}

double precision_score(const std::vector<ProbMap>& pred, const std::vector<ProbMap>& label) {
  require(pred.size() == label.size(), ErrorCode::kShape, "prediction/label count mismatch");
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    require(pred[i].width() == label[i].width() && pred[i].height() == label[i].height(),
            ErrorCode::kShape, "prediction/label dimensions differ");
    const BinaryImage p = binarize(pred[i], 0.5);
    const BinaryImage y = binarize(label[i], 0.5);
    auto pp = p.pixels();
    auto yy = y.pixels();
    for (std::size_t k = 0; k < pp.size(); ++k) {
      if (!pp[k]) continue;
      if (yy[k]) {
        ++tp;
      } else {
        ++fp;
      }
    }
  }
  require(tp + fp > 0, ErrorCode::kUndefinedPrecision, "no predicted positives; precision undefined");
  return static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double precision_eval(UNetModel& model, const std::vector<TrainSample>& data) {
  std::vector<ProbMap> preds;
  std::vector<ProbMap> labels;
  for (const TrainSample& s : data) {
    preds.push_back(infer(model, s.roi));
    labels.push_back(s.label.map);
  }
  return precision_score(preds, labels);
}

void save_unet(const std::filesystem::path& path, UNetModel& model, const UNetMetadata& meta) {
  write_vpw(path, export_state(model.state()));
  nlohmann::json j;
  j["architecture"] = {{"kind", "compressed-unet"},
                       {"base_width", meta.arch.base_width},
                       {"channel_widths", model.channel_widths()},
                       {"batch_norm", meta.arch.batch_norm},
                       {"seed", meta.arch.seed},
                       {"conv_parameters", model.conv_parameter_count()},
                       {"bn_parameters", model.bn_parameter_count()}};
  j["training"] = {{"batch_size", meta.train.batch_size},  {"learning_rate", meta.train.learning_rate},
                   {"epochs", meta.train.epochs},          {"smoothing", meta.train.smoothing},
                   {"bce_weight", meta.train.bce_weight}, {"seed", meta.train.seed}};
  j["epoch_loss"] = meta.epoch_loss;
  std::ofstream out(path.string() + ".json");
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string() + ".json");
  out << j.dump(2) << "\n";
}

UNetModel load_unet(const std::filesystem::path& path) {
  UNetConfig cfg;
  const std::filesystem::path sidecar = path.string() + ".json";
  if (std::filesystem::exists(sidecar)) {
    std::ifstream in(sidecar);
    const nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    require(!j.is_discarded(), ErrorCode::kFormat, "malformed model sidecar " + sidecar.string());
    const auto& arch = j.at("architecture");
    cfg.base_width = arch.value("base_width", cfg.base_width);
    cfg.batch_norm = arch.value("batch_norm", cfg.batch_norm);
    cfg.seed = arch.value("seed", cfg.seed);
  }
  UNetModel model(cfg);
  import_state(model.state(), read_vpw(path));
  return model;
}

}  // namespace veinpatch
