#include "veinpatch/graph.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "gemm.hpp"

namespace veinpatch {

template <typename T>
Var Graph<T>::input(Tensor<T> value) {
  require(value.all_finite(), ErrorCode::kNonFinite, "graph input contains NaN/Inf");
  nodes_.push_back(Node{"input", {}, std::move(value), {}, {}, nullptr, false});
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::parameter(Parameter<T>& param) {
  require(param.value.all_finite(), ErrorCode::kNonFinite,
          "parameter " + param.name + " contains NaN/Inf");
  nodes_.push_back(Node{"parameter", {}, param.value, {}, {}, &param, true});
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::record(const char* op, std::vector<Var> inputs, Tensor<T> out, BackwardFn fn) {
  require(!consumed_, ErrorCode::kState, "cannot extend a graph after backward()");
  require(out.all_finite(), ErrorCode::kNonFinite, std::string(op) + " produced NaN/Inf");
  Node n{op, {}, std::move(out), {}, {}, nullptr, false};
  for (Var v : inputs) {
    require(v.index < nodes_.size(), ErrorCode::kState, "variable does not belong to this graph");
    n.inputs.push_back(v.index);
    n.requires_grad = n.requires_grad || nodes_[v.index].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(Var v) const {
  require(v.index < nodes_.size(), ErrorCode::kState, "variable does not belong to this graph");
  return nodes_[v.index];
}

template <typename T>
const Tensor<T>& Graph<T>::value(Var v) const {
  return node(v).value;
}

template <typename T>
const Tensor<T>& Graph<T>::grad(Var v) const {
  const Node& n = node(v);
  require(consumed_, ErrorCode::kState, "gradients requested before backward()");
  require(!n.grad.empty(), ErrorCode::kState, "no gradient retained for node " + std::string(n.op));
  return n.grad;
}

template <typename T>
const char* Graph<T>::op(Var v) const {
  return node(v).op;
}

template <typename T>
void Graph<T>::backward(Var loss) {
  require(!consumed_, ErrorCode::kState, "backward() already ran on this graph");
  require(!nodes_.empty() && loss.index < nodes_.size(), ErrorCode::kState,
          "backward() called before any forward computation");
  Node& root = nodes_[loss.index];
  require(root.value.size() == 1, ErrorCode::kShape, "backward() needs a scalar loss");
  consumed_ = true;
  root.grad = Tensor<T>(root.value.shape(), T(1));

  std::vector<const Tensor<T>*> in_values;
  std::vector<Tensor<T>*> in_grads;
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.param != nullptr) {
      if (n.param->grad.shape() != n.param->value.shape()) n.param->zero_grad();
      auto dst = n.param->grad.values();
      auto src = n.grad.values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
    if (!n.backward) continue;
    in_values.clear();
    in_grads.clear();
    for (std::size_t idx : n.inputs) {
      Node& in = nodes_[idx];
      in_values.push_back(&in.value);
      if (in.requires_grad) {
        if (in.grad.empty()) in.grad = Tensor<T>(in.value.shape());
        in_grads.push_back(&in.grad);
      } else {
        in_grads.push_back(nullptr);
      }
    }
    n.backward(n.grad, in_values, in_grads);
    for (Tensor<T>* gptr : in_grads) {
      require(gptr == nullptr || gptr->all_finite(), ErrorCode::kNonFinite,
              std::string("backward of ") + n.op + " produced NaN/Inf");
    }
    // Intermediate gradients are not needed once propagated.
    if (!n.inputs.empty()) n.grad = Tensor<T>();
  }
}

template class Graph<float>;
template class Graph<double>;

namespace nn {

namespace {

void require_rank4(const Shape& s, const char* op) {
  require(s.size() == 4, ErrorCode::kShape, std::string(op) + " expects NCHW input, got " + shape_string(s));
}

// Channel-major patches for output rows [oy0, oy1): col[k][p] with
// k = (c*kh + ky)*kw + kx and p = (oy - oy0)*wo + ox.
template <typename T>
void im2col(const T* x, int c, int h, int w, int kh, int kw, int stride, int pad, int oy0, int oy1,
            int wo, T* col) {
  const std::size_t p = static_cast<std::size_t>(oy1 - oy0) * wo;
  for (int ch = 0; ch < c; ++ch) {
    const T* plane = x + static_cast<std::size_t>(ch) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        T* row = col + ((static_cast<std::size_t>(ch) * kh + ky) * kw + kx) * p;
        // Output columns whose input column ox*stride - pad + kx lies inside [0, w).
        const int lo = std::min(wo, std::max(0, (pad - kx + stride - 1) / stride));
        const int hi = std::max(lo, std::min(wo, (w - 1 + pad - kx) / stride + 1));
        for (int oy = oy0; oy < oy1; ++oy) {
          T* dst = row + static_cast<std::size_t>(oy - oy0) * wo;
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * w - pad + kx;
          std::fill(dst, dst + lo, T(0));
          if (stride == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * stride];
          }
          std::fill(dst + hi, dst + wo, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int c, int h, int w, int kh, int kw, int stride, int pad, int oy0,
                int oy1, int wo, T* x) {
  const std::size_t p = static_cast<std::size_t>(oy1 - oy0) * wo;
  for (int ch = 0; ch < c; ++ch) {
    T* plane = x + static_cast<std::size_t>(ch) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const T* row = col + ((static_cast<std::size_t>(ch) * kh + ky) * kw + kx) * p;
        const int lo = std::min(wo, std::max(0, (pad - kx + stride - 1) / stride));
        const int hi = std::max(lo, std::min(wo, (w - 1 + pad - kx) / stride + 1));
        for (int oy = oy0; oy < oy1; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::size_t>(oy - oy0) * wo;
          T* dst = plane + static_cast<std::size_t>(iy) * w - pad + kx;
          for (int ox = lo; ox < hi; ++ox) dst[ox * stride] += src[ox];
        }
      }
    }
  }
}

template <typename T>
struct ConvGeometry {
  int n, c, h, w, o, kh, kw, stride, pad, ho, wo;
  std::size_t pixels() const { return static_cast<std::size_t>(ho) * wo; }
  int patch() const { return c * kh * kw; }
  // Output rows per tile, sized so one col tile stays around 1 MiB.
  int tile_rows() const {
    const std::size_t budget = (std::size_t{1} << 20) / sizeof(T);
    const std::size_t per_row = static_cast<std::size_t>(patch()) * wo;
    return static_cast<int>(std::clamp<std::size_t>(budget / per_row, 1, ho));
  }
};

}  // namespace

template <typename T>
Var conv2d(Graph<T>& g, Var x, Var w, Var b, int stride, int padding) {
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& wv = g.value(w);
  const Tensor<T>& bv = g.value(b);
  require_rank4(xv.shape(), "conv2d");
  require(wv.rank() == 4 && wv.dim(1) == xv.dim(1), ErrorCode::kShape,
          "conv2d weight shape " + shape_string(wv.shape()) + " incompatible with input " +
              shape_string(xv.shape()));
  require(bv.rank() == 1 && bv.dim(0) == wv.dim(0), ErrorCode::kShape,
          "conv2d bias must have one entry per output channel");
  require(stride >= 1 && padding >= 0, ErrorCode::kInvalidParameter, "conv2d stride/padding invalid");
  ConvGeometry<T> geo{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(0), wv.dim(2), wv.dim(3),
                      stride,    padding,   0,         0};
  require(geo.h + 2 * padding >= geo.kh && geo.w + 2 * padding >= geo.kw, ErrorCode::kShape,
          "conv2d kernel larger than padded input");
  geo.ho = (geo.h + 2 * padding - geo.kh) / stride + 1;
  geo.wo = (geo.w + 2 * padding - geo.kw) / stride + 1;

  const std::size_t p = geo.pixels();
  const int k = geo.patch();
  Tensor<T> out({geo.n, geo.o, geo.ho, geo.wo});
  const int tile = geo.tile_rows();
  std::vector<T> col(static_cast<std::size_t>(tile) * geo.wo * k);
  const std::size_t in_stride = static_cast<std::size_t>(geo.c) * geo.h * geo.w;
  for (int n = 0; n < geo.n; ++n) {
    T* dst = out.data() + static_cast<std::size_t>(n) * geo.o * p;
    for (int o = 0; o < geo.o; ++o) std::fill(dst + o * p, dst + (o + 1) * p, bv[o]);
    for (int oy0 = 0; oy0 < geo.ho; oy0 += tile) {
      const int oy1 = std::min(geo.ho, oy0 + tile);
      const int tp = (oy1 - oy0) * geo.wo;
      im2col(xv.data() + n * in_stride, geo.c, geo.h, geo.w, geo.kh, geo.kw, stride, padding, oy0,
             oy1, geo.wo, col.data());
      detail::gemm<T>(false, false, geo.o, tp, k, T(1), wv.data(), k, col.data(), tp, T(1),
                      dst + static_cast<std::size_t>(oy0) * geo.wo, static_cast<int>(p));
    }
  }

  return g.record(
      "conv2d", {x, w, b}, std::move(out),
      [geo](const Tensor<T>& gout, std::span<const Tensor<T>* const> in,
            std::span<Tensor<T>* const> gin) {
        const std::size_t p = geo.pixels();
        const int k = geo.patch();
        const Tensor<T>& xv = *in[0];
        const Tensor<T>& wv = *in[1];
        const std::size_t in_stride = static_cast<std::size_t>(geo.c) * geo.h * geo.w;
        const int tile = geo.tile_rows();
        std::vector<T> col(static_cast<std::size_t>(tile) * geo.wo * k);
        for (int n = 0; n < geo.n; ++n) {
          const T* go = gout.data() + static_cast<std::size_t>(n) * geo.o * p;
          if (gin[2]) {
            T* db = gin[2]->data();
            for (int o = 0; o < geo.o; ++o) {
              T acc = 0;
              for (std::size_t px = 0; px < p; ++px) acc += go[o * p + px];
              db[o] += acc;
            }
          }
          for (int oy0 = 0; oy0 < geo.ho; oy0 += tile) {
            const int oy1 = std::min(geo.ho, oy0 + tile);
            const int tp = (oy1 - oy0) * geo.wo;
            const T* go_tile = go + static_cast<std::size_t>(oy0) * geo.wo;
            if (gin[1]) {
              im2col(xv.data() + n * in_stride, geo.c, geo.h, geo.w, geo.kh, geo.kw, geo.stride,
                     geo.pad, oy0, oy1, geo.wo, col.data());
              detail::gemm<T>(false, true, geo.o, k, tp, T(1), go_tile, static_cast<int>(p),
                              col.data(), tp, T(1), gin[1]->data(), k);
            }
            if (gin[0]) {
              detail::gemm<T>(true, false, k, tp, geo.o, T(1), wv.data(), k, go_tile,
                              static_cast<int>(p), T(0), col.data(), tp);
              col2im_add(col.data(), geo.c, geo.h, geo.w, geo.kh, geo.kw, geo.stride, geo.pad, oy0,
                         oy1, geo.wo, gin[0]->data() + n * in_stride);
            }
          }
        }
      });
}

template <typename T>
Var maxpool2(Graph<T>& g, Var x) {
  const Tensor<T>& xv = g.value(x);
  require_rank4(xv.shape(), "maxpool2");
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  require(h % 2 == 0 && w % 2 == 0, ErrorCode::kShape,
          "maxpool2 needs even spatial dims, got " + shape_string(xv.shape()));
  const int ho = h / 2, wo = w / 2;
  Tensor<T> out({n, c, ho, wo});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  std::size_t oi = 0;
  for (int plane = 0; plane < n * c; ++plane) {
    const std::size_t base = static_cast<std::size_t>(plane) * h * w;
    for (int y = 0; y < ho; ++y) {
      for (int xx = 0; xx < wo; ++xx, ++oi) {
        std::size_t best = base + static_cast<std::size_t>(2 * y) * w + 2 * xx;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t idx = base + static_cast<std::size_t>(2 * y + dy) * w + 2 * xx + dx;
            if (xv[idx] > xv[best]) best = idx;
          }
        }
        out[oi] = xv[best];
        (*argmax)[oi] = best;
      }
    }
  }
  return g.record("maxpool2", {x}, std::move(out),
                  [argmax](const Tensor<T>& gout, std::span<const Tensor<T>* const>,
                           std::span<Tensor<T>* const> gin) {
                    T* dx = gin[0]->data();
                    for (std::size_t i = 0; i < gout.size(); ++i) dx[(*argmax)[i]] += gout[i];
                  });
}

template <typename T>
Var upsample2(Graph<T>& g, Var x) {
  const Tensor<T>& xv = g.value(x);
  require_rank4(xv.shape(), "upsample2");
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor<T> out({n, c, 2 * h, 2 * w});
  for (int plane = 0; plane < n * c; ++plane) {
    const T* src = xv.data() + static_cast<std::size_t>(plane) * h * w;
    T* dst = out.data() + static_cast<std::size_t>(plane) * 4 * h * w;
    for (int y = 0; y < 2 * h; ++y) {
      for (int xx = 0; xx < 2 * w; ++xx) dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
    }
  }
  return g.record("upsample2", {x}, std::move(out),
                  [n, c, h, w](const Tensor<T>& gout, std::span<const Tensor<T>* const>,
                               std::span<Tensor<T>* const> gin) {
                    for (int plane = 0; plane < n * c; ++plane) {
                      const T* src = gout.data() + static_cast<std::size_t>(plane) * 4 * h * w;
                      T* dst = gin[0]->data() + static_cast<std::size_t>(plane) * h * w;
                      for (int y = 0; y < 2 * h; ++y) {
                        for (int xx = 0; xx < 2 * w; ++xx) dst[(y / 2) * w + xx / 2] += src[y * 2 * w + xx];
                      }
                    }
                  });
}

template <typename T>
Var relu(Graph<T>& g, Var x) {
  const Tensor<T>& xv = g.value(x);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  return g.record("relu", {x}, std::move(out),
                  [](const Tensor<T>& gout, std::span<const Tensor<T>* const> in,
                     std::span<Tensor<T>* const> gin) {
                    const Tensor<T>& xv = *in[0];
                    T* dx = gin[0]->data();
                    for (std::size_t i = 0; i < gout.size(); ++i) {
                      if (xv[i] > T(0)) dx[i] += gout[i];
                    }
                  });
}

template <typename T>
Var sigmoid(Graph<T>& g, Var x) {
  const Tensor<T>& xv = g.value(x);
  auto out = std::make_shared<Tensor<T>>(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T v = xv[i];
    if (v >= T(0)) {
      (*out)[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      (*out)[i] = e / (T(1) + e);
    }
  }
  Tensor<T> copy = *out;
  return g.record("sigmoid", {x}, std::move(copy),
                  [out](const Tensor<T>& gout, std::span<const Tensor<T>* const>,
                        std::span<Tensor<T>* const> gin) {
                    T* dx = gin[0]->data();
                    for (std::size_t i = 0; i < gout.size(); ++i) {
                      const T y = (*out)[i];
                      dx[i] += gout[i] * y * (T(1) - y);
                    }
                  });
}

template <typename T>
Var batch_norm(Graph<T>& g, Var x, Var gamma, Var beta, BatchNormState<T>& state) {
  const Tensor<T>& xv = g.value(x);
  require(xv.rank() == 4 || xv.rank() == 2, ErrorCode::kShape, "batch_norm expects NCHW or NC input");
  const int n = xv.dim(0);
  const int c = xv.dim(1);
  const std::size_t inner = xv.size() / (static_cast<std::size_t>(n) * c);
  const std::size_t count = inner * n;
  require(g.value(gamma).size() == static_cast<std::size_t>(c) &&
              g.value(beta).size() == static_cast<std::size_t>(c) &&
              state.running_mean.size() == static_cast<std::size_t>(c),
          ErrorCode::kShape, "batch_norm channel count mismatch");

  auto xhat = std::make_shared<Tensor<T>>(xv.shape());
  auto invstd = std::make_shared<std::vector<double>>(c);
  const Tensor<T>& gv = g.value(gamma);
  const Tensor<T>& bv = g.value(beta);
  Tensor<T> out(xv.shape());
  const bool train = g.training();
  for (int ch = 0; ch < c; ++ch) {
    double mean;
    double var;
    if (train) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        const T* src = xv.data() + (static_cast<std::size_t>(i) * c + ch) * inner;
        for (std::size_t j = 0; j < inner; ++j) s += src[j];
      }
      mean = s / count;
      double ss = 0.0;
      for (int i = 0; i < n; ++i) {
        const T* src = xv.data() + (static_cast<std::size_t>(i) * c + ch) * inner;
        for (std::size_t j = 0; j < inner; ++j) ss += (src[j] - mean) * (src[j] - mean);
      }
      var = ss / count;
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      state.running_mean[ch] =
          static_cast<T>(state.momentum * state.running_mean[ch] + (1.0 - state.momentum) * mean);
      state.running_var[ch] =
          static_cast<T>(state.momentum * state.running_var[ch] + (1.0 - state.momentum) * unbiased);
    } else {
      mean = state.running_mean[ch];
      var = state.running_var[ch];
    }
    const double is = 1.0 / std::sqrt(std::max(var, 0.0) + state.eps);
    (*invstd)[ch] = is;
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * inner;
      for (std::size_t j = 0; j < inner; ++j) {
        const T xh = static_cast<T>((xv[off + j] - mean) * is);
        (*xhat)[off + j] = xh;
        out[off + j] = gv[ch] * xh + bv[ch];
      }
    }
  }
  return g.record(
      "batch_norm", {x, gamma, beta}, std::move(out),
      [xhat, invstd, n, c, inner, count, train](const Tensor<T>& gout,
                                                 std::span<const Tensor<T>* const> in,
                                                 std::span<Tensor<T>* const> gin) {
        const Tensor<T>& gv = *in[1];
        for (int ch = 0; ch < c; ++ch) {
          double sum_dy = 0.0;
          double sum_dy_xhat = 0.0;
          for (int i = 0; i < n; ++i) {
            const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * inner;
            for (std::size_t j = 0; j < inner; ++j) {
              sum_dy += gout[off + j];
              sum_dy_xhat += static_cast<double>(gout[off + j]) * (*xhat)[off + j];
            }
          }
          if (gin[1]) (*gin[1])[ch] += static_cast<T>(sum_dy_xhat);
          if (gin[2]) (*gin[2])[ch] += static_cast<T>(sum_dy);
          if (!gin[0]) continue;
          const double scale = gv[ch] * (*invstd)[ch];
          for (int i = 0; i < n; ++i) {
            const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * inner;
            for (std::size_t j = 0; j < inner; ++j) {
              double d = gout[off + j];
              if (train) d = d - sum_dy / count - (*xhat)[off + j] * sum_dy_xhat / count;
              (*gin[0])[off + j] += static_cast<T>(scale * d);
            }
          }
        }
      });
}

template <typename T>
Var concat_channels(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  require_rank4(av.shape(), "concat_channels");
  require_rank4(bv.shape(), "concat_channels");
  require(av.dim(0) == bv.dim(0) && av.dim(2) == bv.dim(2) && av.dim(3) == bv.dim(3),
          ErrorCode::kShape,
          "concat_channels shape mismatch " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  const int n = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
  const std::size_t plane = static_cast<std::size_t>(av.dim(2)) * av.dim(3);
  Tensor<T> out({n, ca + cb, av.dim(2), av.dim(3)});
  for (int i = 0; i < n; ++i) {
    std::copy_n(av.data() + i * ca * plane, ca * plane, out.data() + i * (ca + cb) * plane);
    std::copy_n(bv.data() + i * cb * plane, cb * plane, out.data() + (i * (ca + cb) + ca) * plane);
  }
  return g.record("concat_channels", {a, b}, std::move(out),
                  [n, ca, cb, plane](const Tensor<T>& gout, std::span<const Tensor<T>* const>,
                                     std::span<Tensor<T>* const> gin) {
                    for (int i = 0; i < n; ++i) {
                      const T* src = gout.data() + i * (ca + cb) * plane;
                      if (gin[0]) {
                        T* da = gin[0]->data() + i * ca * plane;
                        for (std::size_t k = 0; k < ca * plane; ++k) da[k] += src[k];
                      }
                      if (gin[1]) {
                        T* db = gin[1]->data() + i * cb * plane;
                        for (std::size_t k = 0; k < cb * plane; ++k) db[k] += src[ca * plane + k];
                      }
                    }
                  });
}

template <typename T>
Var scale(Graph<T>& g, Var x, double factor, double shift) {
  const Tensor<T>& xv = g.value(x);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = static_cast<T>(factor * xv[i] + shift);
  return g.record("scale", {x}, std::move(out),
                  [factor](const Tensor<T>& gout, std::span<const Tensor<T>* const>,
                           std::span<Tensor<T>* const> gin) {
                    T* dx = gin[0]->data();
                    for (std::size_t i = 0; i < gout.size(); ++i) dx[i] += static_cast<T>(factor * gout[i]);
                  });
}

template <typename T>
Var add(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  require(av.shape() == bv.shape(), ErrorCode::kShape, "add shape mismatch");
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return g.record("add", {a, b}, std::move(out),
                  [](const Tensor<T>& gout, std::span<const Tensor<T>* const>,
                     std::span<Tensor<T>* const> gin) {
                    for (Tensor<T>* gi : gin) {
                      if (!gi) continue;
                      for (std::size_t i = 0; i < gout.size(); ++i) (*gi)[i] += gout[i];
                    }
                  });
}

template <typename T>
Var mul(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  require(av.shape() == bv.shape(), ErrorCode::kShape, "mul shape mismatch");
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return g.record("mul", {a, b}, std::move(out),
                  [](const Tensor<T>& gout, std::span<const Tensor<T>* const> in,
                     std::span<Tensor<T>* const> gin) {
                    for (std::size_t i = 0; i < gout.size(); ++i) {
                      if (gin[0]) (*gin[0])[i] += gout[i] * (*in[1])[i];
                      if (gin[1]) (*gin[1])[i] += gout[i] * (*in[0])[i];
                    }
                  });
}

template <typename T>
Var sum(Graph<T>& g, Var x) {
  const Tensor<T>& xv = g.value(x);
  double acc = 0.0;
  for (T v : xv.values()) acc += v;
  return g.record("sum", {x}, Tensor<T>({1}, static_cast<T>(acc)),
                  [](const Tensor<T>& gout, std::span<const Tensor<T>* const>,
                     std::span<Tensor<T>* const> gin) {
                    for (T& v : gin[0]->values()) v += gout[0];
                  });
}

template <typename T>
Var flatten(Graph<T>& g, Var x) {
  const Tensor<T>& xv = g.value(x);
  require(xv.rank() >= 2, ErrorCode::kShape, "flatten expects a batch dimension");
  const int n = xv.dim(0);
  Tensor<T> out = xv.reshaped({n, static_cast<int>(xv.size() / n)});
  return g.record("flatten", {x}, std::move(out),
                  [](const Tensor<T>& gout, std::span<const Tensor<T>* const>,
                     std::span<Tensor<T>* const> gin) {
                    for (std::size_t i = 0; i < gout.size(); ++i) (*gin[0])[i] += gout[i];
                  });
}

template <typename T>
Var l2_normalize(Graph<T>& g, Var x) {
  const Tensor<T>& xv = g.value(x);
  require(xv.rank() == 2, ErrorCode::kShape, "l2_normalize expects [N, D]");
  const int n = xv.dim(0);
  const int d = xv.dim(1);
  auto norms = std::make_shared<std::vector<double>>(n);
  Tensor<T> out(xv.shape());
  for (int i = 0; i < n; ++i) {
    double ss = 0.0;
    for (int j = 0; j < d; ++j) ss += double(xv[i * d + j]) * xv[i * d + j];
    const double norm = std::max(std::sqrt(ss), 1e-12);
    (*norms)[i] = norm;
    for (int j = 0; j < d; ++j) out[i * d + j] = static_cast<T>(xv[i * d + j] / norm);
  }
  return g.record("l2_normalize", {x}, std::move(out),
                  [norms, n, d](const Tensor<T>& gout, std::span<const Tensor<T>* const> in,
                                std::span<Tensor<T>* const> gin) {
                    const Tensor<T>& xv = *in[0];
                    for (int i = 0; i < n; ++i) {
                      const double norm = (*norms)[i];
                      double dot = 0.0;
                      for (int j = 0; j < d; ++j) dot += double(gout[i * d + j]) * xv[i * d + j] / norm;
                      for (int j = 0; j < d; ++j) {
                        const double y = xv[i * d + j] / norm;
                        (*gin[0])[i * d + j] += static_cast<T>((gout[i * d + j] - y * dot) / norm);
                      }
                    }
                  });
}

template <typename T>
Var slice_rows(Graph<T>& g, Var x, int begin, int end) {
  const Tensor<T>& xv = g.value(x);
  require(xv.rank() == 2, ErrorCode::kShape, "slice_rows expects [N, D]");
  require(0 <= begin && begin < end && end <= xv.dim(0), ErrorCode::kShape,
          "row range out of bounds for " + shape_string(xv.shape()));
  const std::size_t d = xv.dim(1);
  Tensor<T> out({end - begin, xv.dim(1)});
  std::copy(xv.data() + begin * d, xv.data() + end * d, out.data());
  return g.record("slice_rows", {x}, std::move(out),
                  [begin, d](const Tensor<T>& gout, std::span<const Tensor<T>* const>,
                             std::span<Tensor<T>* const> gin) {
                    T* dst = gin[0]->data() + begin * d;
                    for (std::size_t i = 0; i < gout.size(); ++i) dst[i] += gout[i];
                  });
}

#define VEINPATCH_INSTANTIATE_OPS(T)                                             \
  template Var conv2d<T>(Graph<T>&, Var, Var, Var, int, int);                    \
  template Var maxpool2<T>(Graph<T>&, Var);                                      \
  template Var upsample2<T>(Graph<T>&, Var);                                     \
  template Var relu<T>(Graph<T>&, Var);                                          \
  template Var sigmoid<T>(Graph<T>&, Var);                                       \
  template Var batch_norm<T>(Graph<T>&, Var, Var, Var, BatchNormState<T>&);      \
  template Var concat_channels<T>(Graph<T>&, Var, Var);                          \
  template Var scale<T>(Graph<T>&, Var, double, double);                         \
  template Var add<T>(Graph<T>&, Var, Var);                                      \
  template Var mul<T>(Graph<T>&, Var, Var);                                      \
  template Var sum<T>(Graph<T>&, Var);                                           \
  template Var flatten<T>(Graph<T>&, Var);                                       \
  template Var slice_rows<T>(Graph<T>&, Var, int, int);                          \
  template Var l2_normalize<T>(Graph<T>&, Var);

VEINPATCH_INSTANTIATE_OPS(float)
VEINPATCH_INSTANTIATE_OPS(double)

#undef VEINPATCH_INSTANTIATE_OPS

}  // namespace nn

}  // namespace veinpatch
