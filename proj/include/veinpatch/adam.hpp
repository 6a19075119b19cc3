#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "veinpatch/graph.hpp"

namespace veinpatch {

template <typename T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double learning_rate = 1e-4;
  std::int64_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;

  AdamState() = default;
  explicit AdamState(std::span<Parameter<T>* const> params, double lr = 1e-4);
};

/// Bias-corrected Adam update using each parameter's accumulated grad.
/// Gradients are left untouched; callers zero them between steps.
template <typename T>
void adam_step(AdamState<T>& state, std::span<Parameter<T>* const> params, double lr);

template <typename T>
void zero_grads(std::span<Parameter<T>* const> params) {
  for (Parameter<T>* p : params) p->zero_grad();
}

extern template struct AdamState<float>;
extern template struct AdamState<double>;

}  // namespace veinpatch
