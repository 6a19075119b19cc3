#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "veinpatch/tensor.hpp"

namespace veinpatch {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad = Tensor<T>(value.shape()); }
};

/// Per-channel batch normalization state.
template <typename T>
struct BatchNormState {
  Parameter<T> gamma;
  Parameter<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum = 0.9;
  double eps = 1e-5;

  BatchNormState() = default;
  BatchNormState(const std::string& name, int channels)
      : gamma(name + ".gamma", Tensor<T>({channels}, T(1))),
        beta(name + ".beta", Tensor<T>({channels}, T(0))),
        running_mean({channels}, T(0)),
        running_var({channels}, T(1)) {}
};

enum class Mode { kTrain, kEval };

/// Handle to a node of one Graph.
struct Var {
  std::size_t index = 0;
};

/// Eager reverse-mode tape. Nodes are appended in execution order, so the
/// node list is already topologically sorted.
template <typename T>
class Graph {
 public:
  /// Accumulates d(loss)/d(input) into `input_grads`; entries are null for
  /// inputs that do not require a gradient.
  using BackwardFn = std::function<void(const Tensor<T>& out_grad,
                                        std::span<const Tensor<T>* const> inputs,
                                        std::span<Tensor<T>* const> input_grads)>;

  explicit Graph(Mode mode = Mode::kTrain) : mode_(mode) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Mode mode() const noexcept { return mode_; }
  bool training() const noexcept { return mode_ == Mode::kTrain; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var input(Tensor<T> value);
  /// Gradients reaching this node are added to `param.grad` by backward().
  Var parameter(Parameter<T>& param);

  Var record(const char* op, std::vector<Var> inputs, Tensor<T> out, BackwardFn fn);

  const Tensor<T>& value(Var v) const;
  const Tensor<T>& grad(Var v) const;
  const char* op(Var v) const;

  /// Propagates from a scalar node. A graph can be differentiated once.
  void backward(Var loss);

 private:
  struct Node {
    const char* op;
    std::vector<std::size_t> inputs;
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
  };

  const Node& node(Var v) const;

  Mode mode_;
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

extern template class Graph<float>;
extern template class Graph<double>;

namespace nn {

/// NCHW input, OIHW weights, zero padding, cross-correlation.
template <typename T>
Var conv2d(Graph<T>& g, Var x, Var w, Var b, int stride, int padding);

/// 2x2 window, stride 2; spatial dims must be even.
template <typename T>
Var maxpool2(Graph<T>& g, Var x);

/// Nearest-neighbour 2x replication.
template <typename T>
Var upsample2(Graph<T>& g, Var x);

template <typename T>
Var relu(Graph<T>& g, Var x);

template <typename T>
Var sigmoid(Graph<T>& g, Var x);

/// Uses batch statistics (and updates running ones) in training mode,
/// running statistics in eval mode.
template <typename T>
Var batch_norm(Graph<T>& g, Var x, Var gamma, Var beta, BatchNormState<T>& state);

template <typename T>
Var concat_channels(Graph<T>& g, Var a, Var b);

/// y = factor * x + shift.
template <typename T>
Var scale(Graph<T>& g, Var x, double factor, double shift = 0.0);

template <typename T>
Var add(Graph<T>& g, Var a, Var b);

template <typename T>
Var mul(Graph<T>& g, Var a, Var b);

/// Scalar sum of every element.
template <typename T>
Var sum(Graph<T>& g, Var x);

/// [N, ...] -> [N, prod(...)].
template <typename T>
Var flatten(Graph<T>& g, Var x);

/// Rows [begin, end) of a [N, D] tensor.
template <typename T>
Var slice_rows(Graph<T>& g, Var x, int begin, int end);

/// Row-wise Euclidean normalization of a [N, D] tensor.
template <typename T>
Var l2_normalize(Graph<T>& g, Var x);

}  // namespace nn

}  // namespace veinpatch
