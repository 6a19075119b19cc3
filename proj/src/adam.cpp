#include "veinpatch/adam.hpp"

#include <cmath>

namespace veinpatch {

template <typename T>
AdamState<T>::AdamState(std::span<Parameter<T>* const> params, double lr) : learning_rate(lr) {
  for (const Parameter<T>* p : params) {
    m.emplace_back(p->value.shape());
    v.emplace_back(p->value.shape());
  }
}

template <typename T>
void adam_step(AdamState<T>& state, std::span<Parameter<T>* const> params, double lr) {
  require(params.size() == state.m.size(), ErrorCode::kShape,
          "optimizer state holds " + std::to_string(state.m.size()) + " tensors, got " +
              std::to_string(params.size()) + " parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter<T>& p = *params[i];
    require(p.value.shape() == state.m[i].shape() && p.grad.shape() == p.value.shape(),
            ErrorCode::kShape, "optimizer/parameter shape mismatch for " + p.name);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = *params[i];
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    auto w = p.value.values();
    auto g = p.grad.values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k];
      const double mk = state.beta1 * m[k] + (1.0 - state.beta1) * gk;
      const double vk = state.beta2 * v[k] + (1.0 - state.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double mhat = mk / c1;
      const double vhat = vk / c2;
      w[k] = static_cast<T>(w[k] - lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(AdamState<float>&, std::span<Parameter<float>* const>, double);
template void adam_step<double>(AdamState<double>&, std::span<Parameter<double>* const>, double);

}  // namespace veinpatch
