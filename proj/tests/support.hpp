#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "veinpatch/graph.hpp"
#include "veinpatch/imaging.hpp"
#include "veinpatch/random.hpp"

namespace vptest {

using namespace veinpatch;

struct GradCheck {
  double max_rel = 0.0;
  std::size_t coords = 0;
};

inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

/// Central differences on every (or `sample` randomly chosen) coordinate of
/// every parameter, against one backward pass.
inline GradCheck grad_check(const std::vector<Parameter<double>*>& params,
                            const std::function<Var(Graph<double>&)>& build, double eps = 1e-5,
                            std::size_t sample = 0, std::uint64_t seed = 1,
                            Mode mode = Mode::kTrain) {
  for (auto* p : params) p->zero_grad();
  {
    Graph<double> g(mode);
    g.backward(build(g));
  }
  auto eval = [&] {
    Graph<double> g(mode);
    return g.value(build(g))[0];
  };
  GradCheck out;
  Rng rng(seed);
  for (auto* p : params) {
    std::vector<std::size_t> idx;
    if (sample == 0 || sample >= p->value.size()) {
      for (std::size_t i = 0; i < p->value.size(); ++i) idx.push_back(i);
    } else {
      for (std::size_t k = 0; k < sample; ++k) idx.push_back(rng.below(p->value.size()));
    }
    for (std::size_t i : idx) {
      const double orig = p->value[i];
      p->value[i] = orig + eps;
      const double up = eval();
      p->value[i] = orig - eps;
      const double down = eval();
      p->value[i] = orig;
      const double numeric = (up - down) / (2 * eps);
      out.max_rel = std::max(out.max_rel, rel_error(p->grad[i], numeric));
      ++out.coords;
    }
  }
  return out;
}

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

/// Weighted sum with fixed random weights, so every output coordinate
/// contributes a distinct gradient.
inline Var probe_loss(Graph<double>& g, Var y, std::uint64_t seed = 99) {
  Rng rng(seed);
  Var w = g.input(random_tensor(g.value(y).shape(), rng));
  return nn::sum(g, nn::mul(g, y, w));
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("veinpatch_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline ProbMap prob_from(int w, int h, std::vector<double> v) { return ProbMap(w, h, std::move(v)); }

}  // namespace vptest
