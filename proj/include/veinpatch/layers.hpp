#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "veinpatch/graph.hpp"
#include "veinpatch/random.hpp"
#include "veinpatch/weights.hpp"

namespace veinpatch {

/// Convolution with Kaiming-uniform (fan-in) weights and zero bias.
template <typename T>
struct ConvLayer {
  Parameter<T> weight;
  Parameter<T> bias;
  int stride = 1;
  int padding = 0;

  ConvLayer() = default;
  ConvLayer(const std::string& name, int in, int out, int kernel, int stride_, int padding_, Rng& rng)
      : weight(name + ".weight", Tensor<T>({out, in, kernel, kernel})),
        bias(name + ".bias", Tensor<T>({out})),
        stride(stride_),
        padding(padding_) {
    const double bound = std::sqrt(6.0 / (in * kernel * kernel));
    for (T& v : weight.value.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  }

  Var forward(Graph<T>& g, Var x) {
    return nn::conv2d(g, x, g.parameter(weight), g.parameter(bias), stride, padding);
  }

  std::size_t parameter_count() const { return weight.value.size() + bias.value.size(); }
};

/// Conv, optional batch norm, optional ReLU.
template <typename T>
struct ConvUnit {
  ConvLayer<T> conv;
  BatchNormState<T> bn;
  bool use_bn = true;
  bool use_relu = true;

  ConvUnit() = default;
  ConvUnit(const std::string& name, int in, int out, int kernel, int stride, int padding, bool bn_on,
           bool relu_on, Rng& rng)
      : conv(name + ".conv", in, out, kernel, stride, padding, rng),
        bn(name + ".bn", out),
        use_bn(bn_on),
        use_relu(relu_on) {}

  Var forward(Graph<T>& g, Var x) {
    Var y = conv.forward(g, x);
    if (use_bn) y = nn::batch_norm(g, y, g.parameter(bn.gamma), g.parameter(bn.beta), bn);
    if (use_relu) y = nn::relu(g, y);
    return y;
  }

  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&conv.weight);
    out.push_back(&conv.bias);
    if (use_bn) {
      out.push_back(&bn.gamma);
      out.push_back(&bn.beta);
    }
  }

  /// Trainable tensors plus running statistics, in a fixed order.
  void state(std::vector<std::pair<std::string, Tensor<T>*>>& out) {
    out.emplace_back(conv.weight.name, &conv.weight.value);
    out.emplace_back(conv.bias.name, &conv.bias.value);
    if (use_bn) {
      out.emplace_back(bn.gamma.name, &bn.gamma.value);
      out.emplace_back(bn.beta.name, &bn.beta.value);
      out.emplace_back(bn.gamma.name.substr(0, bn.gamma.name.size() - 6) + ".running_mean",
                       &bn.running_mean);
      out.emplace_back(bn.gamma.name.substr(0, bn.gamma.name.size() - 6) + ".running_var",
                       &bn.running_var);
    }
  }
};

template <typename T>
std::vector<NamedTensor> export_state(const std::vector<std::pair<std::string, Tensor<T>*>>& state) {
  std::vector<NamedTensor> out;
  out.reserve(state.size());
  for (const auto& [name, t] : state) out.push_back({name, t->template cast<float>()});
  return out;
}

template <typename T>
void import_state(const std::vector<std::pair<std::string, Tensor<T>*>>& state,
                  const std::vector<NamedTensor>& tensors) {
  require(state.size() == tensors.size(), ErrorCode::kFormat,
          "weight file holds " + std::to_string(tensors.size()) + " tensors, model expects " +
              std::to_string(state.size()));
  for (std::size_t i = 0; i < state.size(); ++i) {
    require(state[i].first == tensors[i].name && state[i].second->shape() == tensors[i].tensor.shape(),
            ErrorCode::kFormat, "weight tensor " + tensors[i].name + " does not match " + state[i].first);
    *state[i].second = tensors[i].tensor.template cast<T>();
  }
}

}  // namespace veinpatch
