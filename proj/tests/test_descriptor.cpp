#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "veinpatch/descriptor.hpp"
#include "veinpatch/error.hpp"

using namespace veinpatch;
using vptest::random_tensor;

namespace {

Patch random_patch(Rng& rng) {
  Patch p(kPatchSize, kPatchSize);
  for (double& v : p.pixels()) v = rng.uniform();
  return p;
}

double norm(const Descriptor& d) {
  double s = 0;
  for (float v : d) s += double(v) * v;
  return std::sqrt(s);
}

Descriptor basis(std::initializer_list<std::pair<int, double>> coords) {
  Descriptor d{};
  for (auto [i, v] : coords) d[i] = static_cast<float>(v);
  return d;
}

// Householder reflection x - 2 (v.x) v with a unit v: orthogonal.
Descriptor reflect(const Descriptor& x, const std::vector<double>& v) {
  double dot = 0;
  for (int k = 0; k < kDescriptorDim; ++k) dot += v[k] * x[k];
  Descriptor out;
  for (int k = 0; k < kDescriptorDim; ++k) out[k] = static_cast<float>(x[k] - 2 * dot * v[k]);
  return out;
}

double l2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

}  // namespace

TEST_SUITE("descriptor") {

TEST_CASE("descriptor net parameter count matches the layer table") {
  // (in*9 + 1) * out per 3x3 conv, 2*out batch-norm, then the 8x8 head
  const std::size_t convs = (1 * 9 + 1) * 32 + (32 * 9 + 1) * 32 + (32 * 9 + 1) * 64 + (64 * 9 + 1) * 64 +
                            (64 * 9 + 1) * 128 + (128 * 9 + 1) * 128;
  const std::size_t bn = 2 * (32 + 32 + 64 + 64 + 128 + 128);
  const std::size_t head = 128 * 128 * 64 + 128;
  CHECK(convs + bn + head == 1336032);
  CHECK(DescModel(0).parameter_count() == 1336032);
}

TEST_CASE("described patches are unit vectors") {
  DescModel model(3);
  Rng rng(1);
  std::vector<Patch> patches;
  for (int i = 0; i < 1000; ++i) patches.push_back(random_patch(rng));
  for (const Descriptor& d : describe(model, patches)) CHECK(std::abs(norm(d) - 1.0) <= 1e-5);
}

TEST_CASE("identical patches give identical descriptors") {
  DescModel model(4);
  Rng rng(2);
  const Patch p = random_patch(rng);
  const Descriptor a = describe(model, p), b = describe(model, p);
  CHECK(a == b);
  CHECK(descriptor_distance(a, b) == 0.0);
  // batch composition does not leak into eval-mode outputs
  std::vector<Patch> batch{random_patch(rng), p, random_patch(rng)};
  CHECK(describe(model, batch)[1] == a);
}

TEST_CASE("describe rejects wrong patch sizes") {
  DescModel model(0);
  try {
    describe(model, Patch(16, 32, 0.5));
    FAIL("expected a shape error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kShape);
  }
}

TEST_CASE("raw descriptor properties") {
  Rng rng(5);
  const Patch p = random_patch(rng);
  const Descriptor a = raw_descriptor(p);
  CHECK(std::abs(norm(a) - 1.0) <= 1e-5);
  CHECK(descriptor_distance(a, raw_descriptor(p)) == 0.0);
  Patch faded = p;
  for (double& v : faded.pixels()) v = 0.5 * v + 0.25;
  CHECK(descriptor_distance(a, raw_descriptor(faded)) <= 1e-5);
  const Patch q = random_patch(rng);
  CHECK(descriptor_distance(a, raw_descriptor(q)) > 0.5);
  try {
    raw_descriptor(Patch(kPatchSize, kPatchSize, 0.3));
    FAIL("expected a degenerate patch error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegeneratePatch);
  }
}

TEST_CASE("first-order loss with a satisfied margin is zero") {
  std::vector<Descriptor> a;
  for (int i = 0; i < 4; ++i) a.push_back(basis({{i, 1.0}}));
  // d_pos = 0, d_neg = sqrt(2) >= 1
  CHECK(fos_loss(a, a, 1.0) == 0.0);
}

TEST_CASE("first-order loss on a hand-built two-pair batch") {
  // rows on the x axis: anchors 0 and 1.1, positives 0.5 and 1.4
  // d_pos = 0.5, 0.3; every cross distance is at least |0.5 - 1.1| = 0.6
  // terms (1 + 0.5 - 0.6)^2 = 0.81 and (1 + 0.3 - 0.6)^2 = 0.49
  Graph<double> g(Mode::kEval);
  const Var a = g.input(Tensor<double>({2, 2}, std::vector<double>{0.0, 0.0, 1.1, 0.0}));
  const Var p = g.input(Tensor<double>({2, 2}, std::vector<double>{0.5, 0.0, 1.4, 0.0}));
  CHECK(g.value(fos_loss(g, a, p, 1.0))[0] == doctest::Approx(0.65).epsilon(1e-12));
  // zero margin with d_neg > d_pos everywhere
  CHECK(g.value(fos_loss(g, a, p, 0.0))[0] == 0.0);
}

TEST_CASE("first-order loss is non-negative and rotation invariant") {
  Rng rng(7);
  std::vector<double> v(kDescriptorDim);
  double n = 0;
  for (double& x : v) {
    x = rng.normal();
    n += x * x;
  }
  for (double& x : v) x /= std::sqrt(n);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Descriptor> a, p;
    for (int i = 0; i < 6; ++i) {
      a.push_back(raw_descriptor(random_patch(rng)));
      p.push_back(raw_descriptor(random_patch(rng)));
    }
    const double loss = fos_loss(a, p, 1.0);
    CHECK(loss >= 0.0);
    std::vector<Descriptor> ra, rp;
    for (int i = 0; i < 6; ++i) {
      ra.push_back(reflect(a[i], v));
      rp.push_back(reflect(p[i], v));
    }
    CHECK(fos_loss(ra, rp, 1.0) == doctest::Approx(loss).epsilon(1e-5));
    CHECK(sos_regularizer(ra, rp) == doctest::Approx(sos_regularizer(a, p)).epsilon(1e-5));
  }
}

TEST_CASE("pair losses need two pairs") {
  const std::vector<Descriptor> one{basis({{0, 1.0}})};
  for (auto f : {+[](std::span<const Descriptor> a) { return fos_loss(a, a, 1.0); },
                 +[](std::span<const Descriptor> a) { return sos_regularizer(a, a); }}) {
    try {
      f(one);
      FAIL("expected an invalid batch error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kInvalidBatch);
    }
  }
}

TEST_CASE("second-order regularizer") {
  Rng rng(8);
  std::vector<Descriptor> a;
  for (int i = 0; i < 5; ++i) a.push_back(raw_descriptor(random_patch(rng)));
  CHECK(sos_regularizer(a, a) == 0.0);

  // an isometric copy keeps the distance structure
  std::vector<double> v(kDescriptorDim, 0.0);
  v[3] = 0.6;
  v[70] = 0.8;
  std::vector<Descriptor> copy;
  for (const auto& d : a) copy.push_back(reflect(d, v));
  CHECK(sos_regularizer(a, copy) <= 1e-6);

  // three pairs, one positive perturbed, against the double loop
  Graph<double> g(Mode::kEval);
  const std::vector<std::vector<double>> xa{{0, 0, 1}, {1, 0, 0}, {0, 1, 0}};
  std::vector<std::vector<double>> xp = xa;
  xp[1] = {0.8, 0.3, 0.1};
  double expect = 0;
  for (int i = 0; i < 3; ++i) {
    double ss = 0;
    for (int j = 0; j < 3; ++j)
      if (j != i) ss += std::pow(l2(xa[i], xa[j]) - l2(xp[i], xp[j]), 2);
    expect += std::sqrt(ss) / 3;
  }
  Tensor<double> ta({3, 3}), tp({3, 3});
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) {
      ta[i * 3 + k] = xa[i][k];
      tp[i * 3 + k] = xp[i][k];
    }
  CHECK(g.value(sos_regularizer(g, g.input(ta), g.input(tp)))[0] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(expect > 0.1);
}

TEST_CASE("loss gradients pass finite differences") {
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    Parameter<double> a("a", random_tensor({3, 5}, rng)), p("p", random_tensor({3, 5}, rng));
    const auto fos = vptest::grad_check({&a, &p}, [&](Graph<double>& g) {
      return fos_loss(g, g.parameter(a), g.parameter(p), 1.5);
    });
    CHECK(fos.max_rel <= 1e-4);
    const auto sos = vptest::grad_check({&a, &p}, [&](Graph<double>& g) {
      return sos_regularizer(g, g.parameter(a), g.parameter(p));
    });
    CHECK(sos.max_rel <= 1e-4);
    // the combined objective through normalization
    const auto both = vptest::grad_check({&a, &p}, [&](Graph<double>& g) {
      const Var na = nn::l2_normalize(g, g.parameter(a)), np = nn::l2_normalize(g, g.parameter(p));
      return nn::add(g, fos_loss(g, na, np, 1.0), sos_regularizer(g, na, np));
    });
    CHECK(both.max_rel <= 1e-4);
  }
}

TEST_CASE("descriptor set binary layout") {
  DescriptorSet s;
  s.keypoints = {{3, 4, -1.0, 11}, {500, 60, -1.0, 11}};
  Descriptor d{};
  d[0] = 1.0f;
  s.descriptors = {d, basis({{127, -1.0}})};
  const auto bytes = encode_descriptor_set(s);
  REQUIRE(bytes.size() == 4 + 2 * (4 + 512));
  CHECK(bytes[0] == 2);
  CHECK(bytes[4] == 3);
  CHECK(bytes[6] == 4);
  // 1.0f little-endian
  CHECK(bytes[8 + 3] == 0x3f);
  CHECK(bytes[8 + 2] == 0x80);
  CHECK(bytes[4 + 516] == (500 & 0xff));
  CHECK(bytes[4 + 517] == (500 >> 8));
  CHECK(decode_descriptor_set(bytes) == s);
  std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 1);
  CHECK_THROWS_AS(decode_descriptor_set(cut), Error);
  const auto dir = vptest::temp_dir("descset");
  write_descriptor_set(dir / "d.bin", s);
  CHECK(read_descriptor_set(dir / "d.bin") == s);
}

TEST_CASE("pair distance AUC") {
  CHECK(pair_distance_auc(std::vector<double>{0.1, 0.2}, std::vector<double>{0.5, 0.9}) == 1.0);
  CHECK(pair_distance_auc(std::vector<double>{0.5, 0.9}, std::vector<double>{0.1, 0.2}) == 0.0);
  CHECK(pair_distance_auc(std::vector<double>{0.3}, std::vector<double>{0.3}) == 0.5);
  // brute force over all pairs
  Rng rng(11);
  std::vector<double> pos(40), neg(70);
  for (double& x : pos) x = rng.uniform_int(0, 20) / 10.0;
  for (double& x : neg) x = rng.uniform_int(5, 25) / 10.0;
  double wins = 0;
  for (double p : pos)
    for (double q : neg) wins += q > p ? 1.0 : q == p ? 0.5 : 0.0;
  CHECK(pair_distance_auc(pos, neg) == doctest::Approx(wins / (40.0 * 70.0)).epsilon(1e-12));
}

TEST_CASE("synthetic patch corpus shape and determinism") {
  PatchCorpusSpec spec;
  spec.classes = 5;
  spec.samples_per_class = 3;
  spec.seed = 4;
  const PatchCorpus a = synth_patch_corpus(spec), b = synth_patch_corpus(spec);
  REQUIRE(a.classes.size() == 5);
  for (std::size_t c = 0; c < 5; ++c) {
    REQUIRE(a.classes[c].size() == 3);
    for (std::size_t s = 0; s < 3; ++s) {
      CHECK(a.classes[c][s].width() == kPatchSize);
      CHECK(a.classes[c][s].pixels().size() == b.classes[c][s].pixels().size());
      CHECK(std::equal(a.classes[c][s].pixels().begin(), a.classes[c][s].pixels().end(),
                       b.classes[c][s].pixels().begin()));
      for (double v : a.classes[c][s].pixels()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
  const auto dir = vptest::temp_dir("corpus");
  save_patch_corpus(dir, a);
  const PatchCorpus back = load_patch_corpus(dir);
  REQUIRE(back.classes.size() == 5);
  // 8-bit storage
  CHECK(std::abs(back.classes[2][1].at(7, 9) - a.classes[2][1].at(7, 9)) <= 0.5 / 255 + 1e-12);
}

TEST_CASE("descriptor training is deterministic and rejects small corpora") {
  PatchCorpusSpec spec;
  spec.classes = 8;
  spec.samples_per_class = 3;
  const PatchCorpus corpus = synth_patch_corpus(spec);
  DescTrainConfig cfg;
  cfg.batch_classes = 4;
  cfg.epochs = 2;
  cfg.seed = 3;
  DescModel m1(1), m2(1);
  const auto l1 = train_desc(m1, corpus, cfg), l2 = train_desc(m2, corpus, cfg);
  REQUIRE(l1.epoch_loss.size() == 2);
  CHECK(l1.epoch_loss == l2.epoch_loss);
  for (double v : l1.epoch_loss) CHECK(v >= 0.0);

  cfg.margin = 0.0;
  DescModel m3(1);
  for (double v : train_desc(m3, corpus, cfg).epoch_loss) CHECK(v >= 0.0);

  cfg.batch_classes = 32;
  try {
    train_desc(m3, corpus, cfg);
    FAIL("expected an invalid corpus error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInvalidCorpus);
  }
}

TEST_CASE("descriptor model save and load") {
  PatchCorpusSpec spec;
  spec.classes = 4;
  spec.samples_per_class = 2;
  const PatchCorpus corpus = synth_patch_corpus(spec);
  DescTrainConfig cfg;
  cfg.batch_classes = 4;
  cfg.epochs = 1;
  DescModel model(2);
  train_desc(model, corpus, cfg);
  const auto dir = vptest::temp_dir("descmodel");
  save_desc(dir / "d.vpw", model);
  DescModel back = load_desc(dir / "d.vpw");
  const Patch& p = corpus.classes[1][0];
  CHECK(describe(model, p) == describe(back, p));
}

}  // TEST_SUITE
