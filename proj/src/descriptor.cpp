#include "veinpatch/descriptor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iostream>
#include <memory>
#include <numbers>
#include <numeric>

#include "veinpatch/adam.hpp"
#include "veinpatch/pgm.hpp"
#include "veinpatch/random.hpp"

namespace veinpatch {

double descriptor_distance(const Descriptor& a, const Descriptor& b) {
  double ss = 0.0;
  for (int k = 0; k < kDescriptorDim; ++k) {
    const double d = double(a[k]) - b[k];
    ss += d * d;
  }
  return std::sqrt(ss);
}

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return b[at] | (b[at + 1] << 8) | (b[at + 2] << 16) | (std::uint32_t(b[at + 3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> encode_descriptor_set(const DescriptorSet& set) {
  require(set.keypoints.size() == set.descriptors.size(), ErrorCode::kShape,
          "descriptor set has mismatched keypoint and descriptor counts");
  std::vector<std::uint8_t> out;
  out.reserve(4 + set.size() * (4 + 4 * kDescriptorDim));
  put_u32(out, static_cast<std::uint32_t>(set.size()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Keypoint& kp = set.keypoints[i];
    require(kp.x >= 0 && kp.y >= 0 && kp.x <= 0xffff && kp.y <= 0xffff, ErrorCode::kFormat,
            "keypoint coordinates do not fit in u16");
    put_u16(out, static_cast<std::uint16_t>(kp.x));
    put_u16(out, static_cast<std::uint16_t>(kp.y));
    for (float v : set.descriptors[i]) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

DescriptorSet decode_descriptor_set(std::span<const std::uint8_t> bytes, int scale) {
  require(bytes.size() >= 4, ErrorCode::kFormat, "descriptor file is truncated");
  const std::size_t count = get_u32(bytes, 0);
  const std::size_t record = 4 + 4 * kDescriptorDim;
  require(bytes.size() == 4 + count * record, ErrorCode::kFormat,
          "descriptor file length does not match its keypoint count");
  DescriptorSet set;
  set.keypoints.reserve(count);
  set.descriptors.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = 4 + i * record;
    Keypoint kp;
    kp.x = bytes[at] | (bytes[at + 1] << 8);
    kp.y = bytes[at + 2] | (bytes[at + 3] << 8);
    kp.scale = scale;
    Descriptor d;
    for (int k = 0; k < kDescriptorDim; ++k) d[k] = std::bit_cast<float>(get_u32(bytes, at + 4 + 4 * k));
    set.keypoints.push_back(kp);
    set.descriptors.push_back(d);
  }
  return set;
}

void write_descriptor_set(const std::filesystem::path& path, const DescriptorSet& set) {
  write_file_bytes(path, encode_descriptor_set(set));
}

DescriptorSet read_descriptor_set(const std::filesystem::path& path, int scale) {
  return decode_descriptor_set(read_file_bytes(path), scale);
}

template <typename T>
DescNet<T>::DescNet(std::uint64_t seed) {
  Rng rng(seed);
  struct Spec {
    int in, out, stride;
  };
  constexpr Spec specs[] = {{1, 32, 1}, {32, 32, 1}, {32, 64, 2}, {64, 64, 1}, {64, 128, 2}, {128, 128, 1}};
  for (std::size_t i = 0; i < std::size(specs); ++i) {
    units_.emplace_back("desc" + std::to_string(i), specs[i].in, specs[i].out, 3, specs[i].stride, 1,
                        true, true, rng);
  }
  head_ = ConvLayer<T>("desc.head", 128, kDescriptorDim, 8, 1, 0, rng);
}

template <typename T>
Var DescNet<T>::forward(Graph<T>& g, Var patches) {
  const Tensor<T>& x = g.value(patches);
  require(x.rank() == 4 && x.dim(1) == 1 && x.dim(2) == kPatchSize && x.dim(3) == kPatchSize,
          ErrorCode::kShape, "descriptor expects [N,1,32,32], got " + shape_string(x.shape()));
  Var h = patches;
  for (auto& u : units_) h = u.forward(g, h);
  return nn::l2_normalize(g, nn::flatten(g, head_.forward(g, h)));
}

template <typename T>
std::vector<Parameter<T>*> DescNet<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& u : units_) u.collect(out);
  out.push_back(&head_.weight);
  out.push_back(&head_.bias);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> DescNet<T>::state() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (auto& u : units_) u.state(out);
  out.emplace_back(head_.weight.name, &head_.weight.value);
  out.emplace_back(head_.bias.name, &head_.bias.value);
  return out;
}

template <typename T>
std::size_t DescNet<T>::parameter_count() const {
  std::size_t n = head_.parameter_count();
  for (const auto& u : units_) n += u.conv.parameter_count() + 2 * u.bn.gamma.value.size();
  return n;
}

template class DescNet<float>;
template class DescNet<double>;

template <typename T>
Tensor<T> standardize_patches(std::span<const Patch> patches) {
  require(!patches.empty(), ErrorCode::kInvalidInput, "no patches to standardize");
  const std::size_t area = kPatchSize * kPatchSize;
  Tensor<T> out({static_cast<int>(patches.size()), 1, kPatchSize, kPatchSize});
  for (std::size_t i = 0; i < patches.size(); ++i) {
    require(patches[i].width() == kPatchSize && patches[i].height() == kPatchSize, ErrorCode::kShape,
            "patches must be 32x32");
    auto px = patches[i].pixels();
    const double mean = std::accumulate(px.begin(), px.end(), 0.0) / area;
    double var = 0.0;
    for (double v : px) var += (v - mean) * (v - mean);
    const double sd = std::max(std::sqrt(var / area), 1e-6);
    for (std::size_t k = 0; k < area; ++k) out[i * area + k] = static_cast<T>((px[k] - mean) / sd);
  }
  return out;
}

template Tensor<float> standardize_patches<float>(std::span<const Patch>);
template Tensor<double> standardize_patches<double>(std::span<const Patch>);

std::vector<Descriptor> describe(DescModel& model, std::span<const Patch> patches) {
  constexpr std::size_t kChunk = 64;
  std::vector<Descriptor> out;
  out.reserve(patches.size());
  for (std::size_t start = 0; start < patches.size(); start += kChunk) {
    const auto chunk = patches.subspan(start, std::min(kChunk, patches.size() - start));
    Graph<float> g(Mode::kEval);
    const Tensor<float>& y = g.value(model.forward(g, g.input(standardize_patches<float>(chunk))));
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      Descriptor d;
      std::copy(y.data() + i * kDescriptorDim, y.data() + (i + 1) * kDescriptorDim, d.begin());
      out.push_back(d);
    }
  }
  return out;
}

Descriptor describe(DescModel& model, const Patch& patch) {
  return describe(model, std::span<const Patch>(&patch, 1)).front();
}

namespace {

constexpr std::uint64_t kRawProjectionSeed = 0x5641573130323400ull;  // "VRAW1024"

// Rows are orthonormal; Gram-Schmidt over Gaussian rows, in double.
const std::vector<double>& raw_projection() {
  static const std::vector<double> rows = [] {
    constexpr int n = kPatchSize * kPatchSize;
    std::vector<double> p(static_cast<std::size_t>(kDescriptorDim) * n);
    Rng rng(kRawProjectionSeed);
    for (int r = 0; r < kDescriptorDim; ++r) {
      double* row = p.data() + static_cast<std::size_t>(r) * n;
      for (int k = 0; k < n; ++k) row[k] = rng.normal();
      // Two passes keep the rows orthogonal to machine precision.
      for (int pass = 0; pass < 2; ++pass) {
        for (int q = 0; q < r; ++q) {
          const double* prev = p.data() + static_cast<std::size_t>(q) * n;
          double dot = 0.0;
          for (int k = 0; k < n; ++k) dot += row[k] * prev[k];
          for (int k = 0; k < n; ++k) row[k] -= dot * prev[k];
        }
      }
      double norm = 0.0;
      for (int k = 0; k < n; ++k) norm += row[k] * row[k];
      norm = std::sqrt(norm);
      for (int k = 0; k < n; ++k) row[k] /= norm;
    }
    return p;
  }();
  return rows;
}

}  // namespace

Descriptor raw_descriptor(const Patch& patch) {
  require(patch.width() == kPatchSize && patch.height() == kPatchSize, ErrorCode::kShape,
          "patches must be 32x32");
  constexpr int n = kPatchSize * kPatchSize;
  auto px = patch.pixels();
  const double mean = std::accumulate(px.begin(), px.end(), 0.0) / n;
  std::vector<double> v(n);
  double norm = 0.0;
  for (int k = 0; k < n; ++k) {
    v[k] = px[k] - mean;
    norm += v[k] * v[k];
  }
  norm = std::sqrt(norm);
  require(norm > 1e-9, ErrorCode::kDegeneratePatch, "patch has zero variance");
  const std::vector<double>& proj = raw_projection();
  std::array<double, kDescriptorDim> y{};
  double ynorm = 0.0;
  for (int r = 0; r < kDescriptorDim; ++r) {
    const double* row = proj.data() + static_cast<std::size_t>(r) * n;
    double dot = 0.0;
    for (int k = 0; k < n; ++k) dot += row[k] * v[k];
    y[r] = dot / norm;
    ynorm += y[r] * y[r];
  }
  ynorm = std::sqrt(ynorm);
  require(ynorm > 1e-12, ErrorCode::kDegeneratePatch, "patch projects to the zero vector");
  Descriptor d;
  for (int r = 0; r < kDescriptorDim; ++r) d[r] = static_cast<float>(y[r] / ynorm);
  return d;
}

namespace {

// Row views over the concatenated [anchors; positives] set: index i < n is
// anchor i, index n + i is positive i.
template <typename T>
struct PairRows {
  const Tensor<T>& a;
  const Tensor<T>& p;
  int n;
  int d;

  const T* row(int idx) const { return idx < n ? a.data() + idx * d : p.data() + (idx - n) * d; }

  double dist(int u, int v) const {
    const T* x = row(u);
    const T* y = row(v);
    double ss = 0.0;
    for (int k = 0; k < d; ++k) {
      const double diff = double(x[k]) - y[k];
      ss += diff * diff;
    }
    return std::sqrt(ss);
  }
};

template <typename T>
void check_pair_batch(const Tensor<T>& a, const Tensor<T>& p, const char* what) {
  require(a.rank() == 2 && a.shape() == p.shape(), ErrorCode::kShape,
          std::string(what) + " expects matching [N, D] anchors and positives");
  require(a.dim(0) >= 2, ErrorCode::kInvalidBatch,
          std::string(what) + " needs at least 2 pairs, got " + std::to_string(a.dim(0)));
}

// Adds coef * d(dist(u, v)) / d(rows) into the combined gradient buffer.
template <typename T>
void add_distance_grad(const PairRows<T>& rows, std::vector<double>& grad, int u, int v, double coef) {
  const double dist = rows.dist(u, v);
  if (dist < 1e-12) return;
  const T* x = rows.row(u);
  const T* y = rows.row(v);
  double* gu = grad.data() + static_cast<std::size_t>(u) * rows.d;
  double* gv = grad.data() + static_cast<std::size_t>(v) * rows.d;
  for (int k = 0; k < rows.d; ++k) {
    const double g = coef * (double(x[k]) - y[k]) / dist;
    gu[k] += g;
    gv[k] -= g;
  }
}

template <typename T>
void scatter_pair_grad(const std::vector<double>& grad, int n, int d, double upstream,
                       std::span<Tensor<T>* const> gin) {
  for (int side = 0; side < 2; ++side) {
    if (gin[side] == nullptr) continue;
    const double* src = grad.data() + static_cast<std::size_t>(side) * n * d;
    for (std::size_t k = 0; k < static_cast<std::size_t>(n) * d; ++k) {
      (*gin[side])[k] += static_cast<T>(upstream * src[k]);
    }
  }
}

struct Hardest {
  int u = 0;
  int v = 0;
  double dist = 0.0;
};

// Closest of the four cross-pair distances over j != i.
template <typename T>
Hardest hardest_negative(const PairRows<T>& rows, int i) {
  Hardest best{0, 0, std::numeric_limits<double>::infinity()};
  const int n = rows.n;
  for (int j = 0; j < n; ++j) {
    if (j == i) continue;
    const int cand[4][2] = {{i, j}, {i, n + j}, {n + i, j}, {n + i, n + j}};
    for (const auto& c : cand) {
      const double dist = rows.dist(c[0], c[1]);
      if (dist < best.dist) best = {c[0], c[1], dist};
    }
  }
  return best;
}

}  // namespace

template <typename T>
Var fos_loss(Graph<T>& g, Var anchors, Var positives, double margin) {
  const Tensor<T>& a = g.value(anchors);
  const Tensor<T>& p = g.value(positives);
  check_pair_batch(a, p, "fos_loss");
  require(margin >= 0.0 && std::isfinite(margin), ErrorCode::kInvalidParameter,
          "margin must be finite and non-negative");
  const int n = a.dim(0);
  const int d = a.dim(1);
  const PairRows<T> rows{a, p, n, d};
  auto hardest = std::make_shared<std::vector<Hardest>>(n);
  auto hinge = std::make_shared<std::vector<double>>(n);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    (*hardest)[i] = hardest_negative(rows, i);
    (*hinge)[i] = std::max(0.0, margin + rows.dist(i, n + i) - (*hardest)[i].dist);
    loss += (*hinge)[i] * (*hinge)[i];
  }
  return g.record("fos_loss", {anchors, positives}, Tensor<T>({1}, static_cast<T>(loss / n)),
                  [hardest, hinge, n, d](const Tensor<T>& gout, std::span<const Tensor<T>* const> in,
                                         std::span<Tensor<T>* const> gin) {
                    const PairRows<T> rows{*in[0], *in[1], n, d};
                    std::vector<double> grad(static_cast<std::size_t>(2) * n * d, 0.0);
                    for (int i = 0; i < n; ++i) {
                      const double h = (*hinge)[i];
                      if (h <= 0.0) continue;
                      add_distance_grad(rows, grad, i, n + i, 2.0 * h / n);
                      add_distance_grad(rows, grad, (*hardest)[i].u, (*hardest)[i].v, -2.0 * h / n);
                    }
                    scatter_pair_grad(grad, n, d, gout[0], gin);
                  });
}

template <typename T>
Var sos_regularizer(Graph<T>& g, Var anchors, Var positives) {
  const Tensor<T>& a = g.value(anchors);
  const Tensor<T>& p = g.value(positives);
  check_pair_batch(a, p, "sos_regularizer");
  const int n = a.dim(0);
  const int d = a.dim(1);
  const PairRows<T> rows{a, p, n, d};
  auto norms = std::make_shared<std::vector<double>>(n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double ss = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double e = rows.dist(i, j) - rows.dist(n + i, n + j);
      ss += e * e;
    }
    (*norms)[i] = std::sqrt(ss);
    total += (*norms)[i];
  }
  return g.record("sos_regularizer", {anchors, positives}, Tensor<T>({1}, static_cast<T>(total / n)),
                  [norms, n, d](const Tensor<T>& gout, std::span<const Tensor<T>* const> in,
                                std::span<Tensor<T>* const> gin) {
                    const PairRows<T> rows{*in[0], *in[1], n, d};
                    std::vector<double> grad(static_cast<std::size_t>(2) * n * d, 0.0);
                    for (int i = 0; i < n; ++i) {
                      const double r = (*norms)[i];
                      if (r < 1e-12) continue;
                      for (int j = 0; j < n; ++j) {
                        if (j == i) continue;
                        const double e = rows.dist(i, j) - rows.dist(n + i, n + j);
                        const double coef = e / (r * n);
                        add_distance_grad(rows, grad, i, j, coef);
                        add_distance_grad(rows, grad, n + i, n + j, -coef);
                      }
                    }
                    scatter_pair_grad(grad, n, d, gout[0], gin);
                  });
}

template Var fos_loss<float>(Graph<float>&, Var, Var, double);
template Var fos_loss<double>(Graph<double>&, Var, Var, double);
template Var sos_regularizer<float>(Graph<float>&, Var, Var);
template Var sos_regularizer<double>(Graph<double>&, Var, Var);

namespace {

Tensor<double> descriptor_matrix(std::span<const Descriptor> ds) {
  require(!ds.empty(), ErrorCode::kInvalidBatch, "empty descriptor batch");
  Tensor<double> out({static_cast<int>(ds.size()), kDescriptorDim});
  for (std::size_t i = 0; i < ds.size(); ++i) std::copy(ds[i].begin(), ds[i].end(), out.data() + i * kDescriptorDim);
  return out;
}

}  // namespace

double fos_loss(std::span<const Descriptor> anchors, std::span<const Descriptor> positives, double margin) {
  require(anchors.size() == positives.size(), ErrorCode::kShape, "anchor/positive count mismatch");
  Graph<double> g(Mode::kEval);
  return g.value(fos_loss(g, g.input(descriptor_matrix(anchors)), g.input(descriptor_matrix(positives)),
                          margin))[0];
}

double sos_regularizer(std::span<const Descriptor> anchors, std::span<const Descriptor> positives) {
  require(anchors.size() == positives.size(), ErrorCode::kShape, "anchor/positive count mismatch");
  Graph<double> g(Mode::kEval);
  return g.value(
      sos_regularizer(g, g.input(descriptor_matrix(anchors)), g.input(descriptor_matrix(positives))))[0];
}

namespace {

struct Stroke {
  std::vector<std::pair<double, double>> points;  // polyline, patch coordinates
  double width;
};

double segment_distance(double px, double py, std::pair<double, double> a, std::pair<double, double> b) {
  const double vx = b.first - a.first, vy = b.second - a.second;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((px - a.first) * vx + (py - a.second) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (a.first + t * vx), dy = py - (a.second + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

// Slightly bent ray of length `len` from (x0, y0) at angle `theta`.
Stroke make_ray(double x0, double y0, double theta, double len, double bend, double width) {
  Stroke s{{}, width};
  constexpr int kSteps = 12;
  for (int k = 0; k <= kSteps; ++k) {
    const double t = len * k / kSteps;
    const double off = bend * t * t / (len * len);
    s.points.emplace_back(x0 + t * std::cos(theta) - off * std::sin(theta),
                          y0 + t * std::sin(theta) + off * std::cos(theta));
  }
  return s;
}

std::vector<Stroke> random_pattern(Rng& rng) {
  const double cx = kPatchSize / 2.0 + rng.uniform(-4.0, 4.0);
  const double cy = kPatchSize / 2.0 + rng.uniform(-4.0, 4.0);
  std::vector<Stroke> strokes;
  const double kind = rng.uniform();
  auto width = [&] { return rng.uniform(1.5, 3.5); };
  auto bend = [&] { return rng.uniform(-4.0, 4.0); };
  if (kind < 0.4) {
    // Line through the centre, optionally with a parallel or crossing neighbour.
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double w = width();
    strokes.push_back(make_ray(cx, cy, theta, 30.0, bend(), w));
    strokes.push_back(make_ray(cx, cy, theta + std::numbers::pi, 30.0, bend(), w));
    if (rng.uniform() < 0.5) {
      const double phi = rng.uniform(0.0, std::numbers::pi);
      const double ox = cx + rng.uniform(-10.0, 10.0), oy = cy + rng.uniform(-10.0, 10.0);
      strokes.push_back(make_ray(ox, oy, phi, 30.0, bend(), width()));
      strokes.push_back(make_ray(ox, oy, phi + std::numbers::pi, 30.0, bend(), width()));
    }
  } else {
    // Junction: 3 or 4 rays from a common point.
    const int rays = kind < 0.75 ? 3 : 4;
    const double base = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (int r = 0; r < rays; ++r) {
      const double theta = base + 2.0 * std::numbers::pi * r / rays + rng.uniform(-0.5, 0.5);
      strokes.push_back(make_ray(cx, cy, theta, 30.0, bend(), width()));
    }
  }
  return strokes;
}

Patch render_pattern(const std::vector<Stroke>& strokes, double dx, double dy, double contrast,
                     double offset, double noise, Rng& rng) {
  Patch out(kPatchSize, kPatchSize);
  for (int y = 0; y < kPatchSize; ++y) {
    for (int x = 0; x < kPatchSize; ++x) {
      double v = 0.0;
      for (const Stroke& s : strokes) {
        double dmin = std::numeric_limits<double>::infinity();
        for (std::size_t k = 1; k < s.points.size(); ++k) {
          dmin = std::min(dmin, segment_distance(x - dx, y - dy, s.points[k - 1], s.points[k]));
        }
        const double sigma = s.width / 2.0;
        v = std::max(v, std::exp(-dmin * dmin / (2.0 * sigma * sigma)));
      }
      out.at(x, y) = std::clamp(offset + contrast * v + noise * rng.normal(), 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace

PatchCorpus synth_patch_corpus(const PatchCorpusSpec& spec) {
  require(spec.classes >= 1 && spec.samples_per_class >= 2, ErrorCode::kInvalidParameter,
          "patch corpus needs at least one class and two samples per class");
  require(spec.max_shift >= 0 && spec.contrast_lo > 0.0 && spec.contrast_hi >= spec.contrast_lo &&
              spec.noise >= 0.0,
          ErrorCode::kInvalidParameter, "invalid patch corpus augmentation ranges");
  PatchCorpus corpus;
  for (int c = 0; c < spec.classes; ++c) {
    Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(c)));
    const std::vector<Stroke> pattern = random_pattern(rng);
    std::vector<Patch> samples;
    for (int s = 0; s < spec.samples_per_class; ++s) {
      const double dx = rng.uniform(-spec.max_shift, spec.max_shift);
      const double dy = rng.uniform(-spec.max_shift, spec.max_shift);
      const double contrast = rng.uniform(spec.contrast_lo, spec.contrast_hi);
      const double offset = rng.uniform(0.0, 1.0 - contrast) * 0.5;
      samples.push_back(render_pattern(pattern, dx, dy, contrast, offset, spec.noise, rng));
    }
    corpus.classes.push_back(std::move(samples));
  }
  return corpus;
}

PatchCorpus load_patch_corpus(const std::filesystem::path& root) {
  require(std::filesystem::is_directory(root), ErrorCode::kIo,
          "patch corpus directory not found: " + root.string());
  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::directory_iterator(root)) {
    if (e.is_directory()) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  PatchCorpus corpus;
  for (const auto& dir : dirs) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<Patch> samples;
    for (const auto& f : files) samples.push_back(resize(to_prob(read_pgm(f)), kPatchSize, kPatchSize));
    if (samples.size() >= 2) corpus.classes.push_back(std::move(samples));
  }
  return corpus;
}

void save_patch_corpus(const std::filesystem::path& root, const PatchCorpus& corpus) {
  for (std::size_t c = 0; c < corpus.classes.size(); ++c) {
    char dir[32];
    std::snprintf(dir, sizeof dir, "class_%04zu", c);
    for (std::size_t s = 0; s < corpus.classes[c].size(); ++s) {
      char file[32];
      std::snprintf(file, sizeof file, "%03zu.pgm", s);
      write_pgm(root / dir / file, to_gray(corpus.classes[c][s]));
    }
  }
}

DescTrainLog train_desc(DescModel& model, const PatchCorpus& corpus, const DescTrainConfig& cfg,
                        const DescEpochCallback& on_epoch) {
  require(cfg.batch_classes >= 2 && cfg.epochs >= 1 && cfg.learning_rate > 0.0, ErrorCode::kInvalidParameter,
          "invalid descriptor training configuration");
  require(static_cast<int>(corpus.classes.size()) >= cfg.batch_classes, ErrorCode::kInvalidCorpus,
          "corpus has " + std::to_string(corpus.classes.size()) + " classes, a batch needs " +
              std::to_string(cfg.batch_classes));
  for (const auto& cls : corpus.classes) {
    require(cls.size() >= 2, ErrorCode::kInvalidCorpus, "every patch class needs at least two samples");
  }

  std::vector<Parameter<float>*> params = model.parameters();
  AdamState<float> adam(params, cfg.learning_rate);
  Rng rng(mix_seed(cfg.seed, 0x44455343));
  std::vector<std::size_t> order(corpus.classes.size());
  std::iota(order.begin(), order.end(), 0);
  const int m = cfg.batch_classes;
  DescTrainLog log;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double total = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start + m <= order.size(); start += m) {
      std::vector<Patch> batch;
      batch.reserve(2 * m);
      std::vector<std::pair<std::size_t, std::size_t>> picks;
      for (int k = 0; k < m; ++k) {
        const auto& cls = corpus.classes[order[start + k]];
        const std::size_t i = rng.below(cls.size());
        std::size_t j = rng.below(cls.size() - 1);
        if (j >= i) ++j;
        picks.emplace_back(i, j);
      }
      for (int k = 0; k < m; ++k) batch.push_back(corpus.classes[order[start + k]][picks[k].first]);
      for (int k = 0; k < m; ++k) batch.push_back(corpus.classes[order[start + k]][picks[k].second]);

      Graph<float> g(Mode::kTrain);
      const Var out = model.forward(g, g.input(standardize_patches<float>(batch)));
      const Var a = nn::slice_rows(g, out, 0, m);
      const Var p = nn::slice_rows(g, out, m, 2 * m);
      const Var loss = nn::add(g, fos_loss(g, a, p, cfg.margin), sos_regularizer(g, a, p));
      const double value = g.value(loss)[0];
      if (!std::isfinite(value)) fail(ErrorCode::kTrainingDiverged, "descriptor loss is not finite");
      zero_grads<float>(params);
      g.backward(loss);
      adam_step<float>(adam, params, cfg.learning_rate);
      total += value;
      ++batches;
    }
    log.epoch_loss.push_back(total / batches);
    if (on_epoch) on_epoch(epoch + 1, log.epoch_loss.back());
  }
  return log;
}

double pair_distance_auc(std::span<const double> matching, std::span<const double> non_matching) {
  require(!matching.empty() && !non_matching.empty(), ErrorCode::kInvalidInput,
          "AUC needs matching and non-matching distances");
  std::vector<double> pos(matching.begin(), matching.end());
  std::vector<double> neg(non_matching.begin(), non_matching.end());
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  // For each matching distance, count non-matching ones that are larger (ties count half).
  double wins = 0.0;
  for (double d : pos) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), d);
    const auto hi = std::upper_bound(neg.begin(), neg.end(), d);
    wins += static_cast<double>(neg.end() - hi) + 0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

void corpus_pair_distances(const std::vector<std::vector<Descriptor>>& described,
                           std::vector<double>& matching, std::vector<double>& non_matching) {
  matching.clear();
  non_matching.clear();
  for (std::size_t c = 0; c < described.size(); ++c) {
    for (std::size_t i = 0; i < described[c].size(); ++i) {
      for (std::size_t j = i + 1; j < described[c].size(); ++j) {
        matching.push_back(descriptor_distance(described[c][i], described[c][j]));
      }
      for (std::size_t c2 = c + 1; c2 < described.size(); ++c2) {
        for (const Descriptor& other : described[c2]) {
          non_matching.push_back(descriptor_distance(described[c][i], other));
        }
      }
    }
  }
}

void save_desc(const std::filesystem::path& path, DescModel& model) {
  write_vpw(path, export_state(model.state()));
}

DescModel load_desc(const std::filesystem::path& path) {
  DescModel model;
  import_state(model.state(), read_vpw(path));
  return model;
}

}  // namespace veinpatch
