#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "support.hpp"
#include "veinpatch/config.hpp"
#include "veinpatch/error.hpp"
#include "veinpatch/evaluate.hpp"
#include "veinpatch/ingest.hpp"
#include "veinpatch/pgm.hpp"
#include "veinpatch/pipeline.hpp"
#include "veinpatch/synth.hpp"

using namespace veinpatch;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

struct Run {
  int status;
  std::string out;
  std::string err;
};

Run cli(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + VEINPATCH_CLI_PATH + "\" " + args + " >\"" + out.string() +
                         "\" 2>\"" + err.string() + "\"";
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
}

GrayImage tiny_image(std::uint8_t v) { return GrayImage(8, 6, v); }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("documented defaults") {
  const PipelineConfig cfg = ConfigStore().pipeline();
  CHECK(cfg.matcher.td == 1.2);
  CHECK(cfg.keypoint.c == 4);
  CHECK(cfg.keypoint.ks == 11);
  CHECK(cfg.unet_train.smoothing == 1.0);
  CHECK(cfg.unet_train.learning_rate == 1e-4);
  CHECK(cfg.unet_train.batch_size == 16);
  CHECK(cfg.desc_train.batch_classes == 32);
  CHECK(cfg.extractor == "traditional");
  CHECK(cfg.descriptor == "raw");
  CHECK(cfg.matcher.ransac_iters == 500);
  CHECK(cfg.matcher.tol == 3.0);
}

TEST_CASE("flag beats file beats default") {
  const auto dir = vptest::temp_dir("config");
  spit(dir / "a.cfg", "# comment\nkeypoint.c = 6\nmatcher.td = 0.9\n\n");
  const ConfigStore s = resolve_config(dir / "a.cfg", {{"matcher.td", "1.05"}});
  CHECK(s.get("keypoint.ks") == "11");
  CHECK(s.layer("keypoint.ks") == ConfigStore::Layer::kDefault);
  CHECK(s.get_int("keypoint.c") == 6);
  CHECK(s.layer("keypoint.c") == ConfigStore::Layer::kFile);
  CHECK(s.get_double("matcher.td") == 1.05);
  CHECK(s.layer("matcher.td") == ConfigStore::Layer::kFlag);
  const PipelineConfig cfg = s.pipeline();
  CHECK(cfg.keypoint.c == 6);
  CHECK(cfg.keypoint.ks == 11);
  CHECK(cfg.matcher.td == 1.05);
}

TEST_CASE("config file from the environment") {
  const auto dir = vptest::temp_dir("config_env");
  spit(dir / "env.cfg", "keypoint.ks = 15\n");
  ::setenv("VEINPATCH_CONFIG", (dir / "env.cfg").c_str(), 1);
  const ConfigStore from_env = resolve_config(std::nullopt, {});
  spit(dir / "explicit.cfg", "keypoint.ks = 9\n");
  const ConfigStore explicit_file = resolve_config(dir / "explicit.cfg", {});
  ::unsetenv("VEINPATCH_CONFIG");
  CHECK(from_env.get_int("keypoint.ks") == 15);
  CHECK(explicit_file.get_int("keypoint.ks") == 9);
}

TEST_CASE("config errors") {
  ConfigStore s;
  auto code_of = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kState;
  };
  CHECK(code_of([&] { s.load_text("no.such.key = 1\n", "t"); }) == ErrorCode::kInvalidParameter);
  CHECK(code_of([&] { s.load_text("keypoint.c 4\n", "t"); }) == ErrorCode::kInvalidParameter);
  s.set("keypoint.c", "four");
  CHECK(code_of([&] { s.pipeline(); }) == ErrorCode::kInvalidParameter);
  s.set("keypoint.c", "4");
  s.set("threads", "0");
  CHECK(code_of([&] { s.pipeline(); }) == ErrorCode::kInvalidParameter);
  CHECK(code_of([&] { resolve_config(fs::path("/nonexistent/veinpatch.cfg"), {}); }) == ErrorCode::kIo);
}

TEST_CASE("seed reaches every stochastic stage") {
  ConfigStore s;
  s.set("seed", "42");
  const PipelineConfig cfg = s.pipeline();
  CHECK(cfg.seed == 42);
  CHECK(cfg.matcher.seed == 42);
  CHECK(cfg.unet_train.seed == 42);
  CHECK(cfg.desc_train.seed == 42);
}

TEST_CASE("ingest counts a two by two by two tree") {
  const auto dir = vptest::temp_dir("ingest");
  for (int c : {1, 2})
    for (int s : {1, 2})
      for (int k : {0, 1}) {
        char rel[64];
        std::snprintf(rel, sizeof rel, "cls_%03d/s%d/img_%d.pgm", c, s, k);
        fs::create_directories((dir / "data" / rel).parent_path());
        write_pgm(dir / "data" / rel, tiny_image(static_cast<std::uint8_t>(10 * c + k)));
      }
  const IngestResult r = ingest(dir / "data", "cls_{class}/s{session}/img_{sample}.pgm", dir);
  REQUIRE(r.manifest.entries.size() == 8);
  CHECK(r.excluded.empty());
  CHECK(r.manifest.entries[0] == ManifestEntry{"data/cls_001/s1/img_0.pgm", 1, 1, 0});
  CHECK(r.manifest.entries[7] == ManifestEntry{"data/cls_002/s2/img_1.pgm", 2, 2, 1});
  CHECK(cross_session_pairs(r.manifest).genuine.size() == 8);

  // a corrupt file is excluded and reported
  spit(dir / "data/cls_002/s1/img_7.pgm", "P5\n8 6\n255\nshort");
  const IngestResult with_bad = ingest(dir / "data", "cls_{class}/s{session}/img_{sample}.pgm", dir);
  CHECK(with_bad.manifest.entries.size() == 8);
  REQUIRE(with_bad.excluded.size() == 1);
  CHECK(with_bad.excluded[0].rfind("cls_002/s1/img_7.pgm", 0) == 0);

  // unchanged tree gives the same bytes
  const IngestResult again = ingest(dir / "data", "cls_{class}/s{session}/img_{sample}.pgm", dir);
  CHECK(format_manifest(again.manifest) == format_manifest(with_bad.manifest));

  // session defaults to 1 without a placeholder; non-matching files are ignored
  const IngestResult flat = ingest(dir / "data", "cls_{class}/s1/img_{sample}.pgm", dir);
  CHECK(flat.manifest.entries.size() == 4);
  for (const auto& e : flat.manifest.entries) CHECK(e.session == 1);
}

TEST_CASE("ingest errors") {
  const auto dir = vptest::temp_dir("ingest_err");
  auto code_of = [&](const fs::path& root) {
    try {
      ingest(root, "cls_{class}/img_{sample}.pgm", dir);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kState;
  };
  CHECK(code_of(dir / "missing") == ErrorCode::kIo);
  fs::create_directories(dir / "empty");
  CHECK(code_of(dir / "empty") == ErrorCode::kInvalidInput);
}

TEST_CASE("synthetic generation is deterministic") {
  SynthSpec spec;
  spec.classes = 3;
  spec.samples_per_class = 2;
  spec.seed = 7;
  const auto a = vptest::temp_dir("synth_a"), b = vptest::temp_dir("synth_b");
  const DatasetManifest ma = synth_generate(spec, a);
  synth_generate(spec, b);
  CHECK(ma.entries.size() == 6);
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    CHECK(slurp(entry.path()) == slurp(b / rel));
    ++files;
  }
  CHECK(files == 13);  // 6 images, 6 labels, manifest
}

TEST_CASE("synthetic labels hold one component per ridge") {
  SynthSpec spec;
  spec.seed = 7;
  for (int c = 0; c < spec.classes; ++c) {
    const int ridges = synth_ridge_count(spec, c);
    CHECK(ridges >= spec.ridge_min);
    CHECK(ridges <= spec.ridge_max);
    CHECK(count_components(binarize(synth_sample(spec, c, 1, 0).label, 0.5)) == ridges);
  }
}

TEST_CASE("pipeline output bytes are reproducible") {
  SynthSpec spec;
  spec.seed = 2;
  const GrayImage img = synth_sample(spec, 1, 1, 0).image;
  const PipelineConfig cfg;
  const PipelineModels models;
  const auto a = run_pipeline(img, cfg, models), b = run_pipeline(img, cfg, models);
  CHECK(encode_descriptor_set(a.descriptors) == encode_descriptor_set(b.descriptors));
  CHECK(a.descriptors.size() > 20);
  CHECK(a.roi.roi.width() == 225);
  CHECK(a.roi.roi.height() == 90);
}

TEST_CASE("blank image fails in the roi stage") {
  try {
    run_pipeline(GrayImage(320, 160, 0), PipelineConfig{}, PipelineModels{}, "blank.pgm");
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "roi");
    CHECK(e.path() == "blank.pgm");
    CHECK(e.code() == ErrorCode::kInsufficientEdgeEvidence);
  }
}

TEST_CASE("evaluation reports do not depend on the thread count") {
  SynthSpec spec;
  spec.classes = 3;
  spec.samples_per_class = 2;
  spec.seed = 5;
  const auto dir = vptest::temp_dir("eval_threads");
  const DatasetManifest m = synth_generate(spec, dir);
  const DatasetManifest loaded = read_manifest(dir / "manifest.csv");
  PipelineConfig cfg;
  cfg.threads = 1;
  const std::string one = report_json(evaluate(loaded, cfg, Protocol::kFvc2004));
  cfg.threads = 3;
  const std::string three = report_json(evaluate(loaded, cfg, Protocol::kFvc2004));
  CHECK(one == three);
  CHECK(m.entries.size() == 6);
}

TEST_CASE("command exit codes and error lines") {
  const auto dir = vptest::temp_dir("cli_exit");
  const Run synth = cli("synth --out \"" + (dir / "ds").string() + "\" --classes 2 --samples 2", dir);
  CHECK(synth.status == 0);
  CHECK(fs::exists(dir / "ds/manifest.csv"));

  const Run roi = cli("roi --in \"" + (dir / "missing.pgm").string() + "\" --out \"" + (dir / "r.pgm").string() + "\"", dir);
  CHECK(roi.status != 0);
  CHECK(roi.err.rfind("error: io: ", 0) == 0);

  write_pgm(dir / "blank.pgm", GrayImage(320, 160, 0));
  const Run blank = cli("roi --in \"" + (dir / "blank.pgm").string() + "\" --out \"" + (dir / "r.pgm").string() + "\"", dir);
  CHECK(blank.status != 0);
  CHECK(blank.err.rfind("error: insufficient-edge-evidence: stage roi", 0) == 0);

  const Run bad_flag = cli("match --nope", dir);
  CHECK(bad_flag.status != 0);
  CHECK(bad_flag.err.rfind("error: invalid-parameter: ", 0) == 0);

  const Run eval = cli("evaluate --manifest \"" + (dir / "ds/manifest.csv").string() + "\" --out \"" +
                           (dir / "report.json").string() + "\"",
                       dir);
  CHECK(eval.status == 0);
  CHECK(slurp(dir / "report.json").find("\"eer\"") != std::string::npos);
}

}  // TEST_SUITE
