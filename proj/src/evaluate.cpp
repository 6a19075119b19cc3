#include "veinpatch/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <thread>

#include "json.hpp"
#include "veinpatch/pgm.hpp"
#include "veinpatch/random.hpp"

namespace veinpatch {

Protocol parse_protocol(const std::string& name) {
  if (name == "fvc2004") return Protocol::kFvc2004;
  if (name == "cross" || name == "cross-session") return Protocol::kCrossSession;
  fail(ErrorCode::kInvalidParameter, "protocol must be 'fvc2004' or 'cross', got '" + name + "'");
}

std::string protocol_name(Protocol p) { return p == Protocol::kFvc2004 ? "fvc2004" : "cross-session"; }

PairList make_pairs(const DatasetManifest& manifest, Protocol protocol) {
  return protocol == Protocol::kFvc2004 ? fvc2004_pairs(manifest) : cross_session_pairs(manifest);
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<ImageResult> describe_manifest(const DatasetManifest& manifest, const PipelineConfig& cfg,
                                           const PipelineModels& models, const PipelineOptions& opts) {
  std::vector<ImageResult> out(manifest.entries.size());
  parallel_for(out.size(), cfg.threads, [&](std::size_t i) {
    try {
      out[i].set = run_pipeline(manifest.resolve(manifest.entries[i]), cfg, models, opts);
      out[i].keypoints = out[i].set.size();
    } catch (const Error& e) {
      out[i].error = std::string(error_code_name(e.code())) + ": " + e.what();
    }
  });
  return out;
}

EvalReport score_pairs(const DatasetManifest& manifest, const std::vector<ImageResult>& images,
                       const PairList& pairs, const MatcherConfig& matcher, int threads) {
  require(images.size() == manifest.entries.size(), ErrorCode::kShape,
          "image results do not line up with the manifest");
  EvalReport report;
  report.images = images.size();
  report.warnings = pairs.warnings;
  double kp_total = 0.0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    kp_total += static_cast<double>(images[i].keypoints);
    if (!images[i].error.empty()) {
      ++report.failed_images;
      report.failures.push_back(manifest.entries[i].path + ": " + images[i].error);
    }
  }
  report.mean_keypoints = images.empty() ? 0.0 : kp_total / static_cast<double>(images.size());

  auto score_all = [&](const std::vector<IndexPair>& list, std::uint64_t salt) {
    std::vector<int> scores(list.size(), 0);
    parallel_for(list.size(), threads, [&](std::size_t k) {
      const auto [a, b] = list[k];
      if (!images[a].error.empty() || !images[b].error.empty()) return;
      MatcherConfig mc = matcher;
      mc.seed = mix_seed(matcher.seed, salt ^ (static_cast<std::uint64_t>(a) << 32) ^ b);
      scores[k] = match_images(images[a].set, images[b].set, mc).score;
    });
    return scores;
  };
  report.genuine_scores = score_all(pairs.genuine, 0x47454e);
  report.imposter_scores = score_all(pairs.imposter, 0x494d50);
  report.roc = roc_eer(std::vector<double>(report.genuine_scores.begin(), report.genuine_scores.end()),
                       std::vector<double>(report.imposter_scores.begin(), report.imposter_scores.end()));
  return report;
}

EvalReport evaluate(const DatasetManifest& manifest, const PipelineConfig& cfg, Protocol protocol,
                    const PipelineOptions& opts) {
  const PairList pairs = make_pairs(manifest, protocol);
  const PipelineModels models = load_models(cfg);
  EvalReport report =
      score_pairs(manifest, describe_manifest(manifest, cfg, models, opts), pairs, cfg.matcher, cfg.threads);
  report.protocol = protocol_name(protocol);
  return report;
}

namespace {

nlohmann::json histogram(const std::vector<int>& scores) {
  std::map<int, int> h;
  for (int s : scores) ++h[s];
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [score, count] : h) out.push_back({score, count});
  return out;
}

}  // namespace

std::string report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["protocol"] = report.protocol;
  j["images"] = report.images;
  j["failed_images"] = report.failed_images;
  j["failures"] = report.failures;
  j["warnings"] = report.warnings;
  j["genuine_pairs"] = report.genuine_scores.size();
  j["imposter_pairs"] = report.imposter_scores.size();
  j["mean_keypoints"] = report.mean_keypoints;
  j["eer"] = report.roc.eer;
  j["eer_threshold"] = report.roc.eer_threshold;
  nlohmann::ordered_json roc = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < report.roc.thresholds.size(); ++k) {
    roc.push_back({{"threshold", report.roc.thresholds[k]}, {"far", report.roc.far[k]}, {"frr", report.roc.frr[k]}});
  }
  j["roc"] = roc;
  j["genuine_histogram"] = histogram(report.genuine_scores);
  j["imposter_histogram"] = histogram(report.imposter_scores);
  return j.dump(2) + "\n";
}

std::string roc_csv(const RocCurve& roc) {
  std::string out = "threshold,far,frr\n";
  char buf[96];
  for (std::size_t k = 0; k < roc.thresholds.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", roc.thresholds[k], roc.far[k], roc.frr[k]);
    out += buf;
  }
  return out;
}

std::vector<SweepRow> sweep(const DatasetManifest& manifest, const PipelineConfig& cfg, Protocol protocol,
                            SweepAxis axis, int lo, int hi, const std::function<void(const SweepRow&)>& on_row) {
  require(lo >= 0 && hi >= lo, ErrorCode::kInvalidParameter, "sweep range must satisfy 0 <= lo <= hi");
  require(axis == SweepAxis::kC || lo >= 1, ErrorCode::kInvalidParameter, "ks must be positive");
  const PairList pairs = make_pairs(manifest, protocol);
  const PipelineModels models = load_models(cfg);

  struct Cached {
    ProbMap vein;
    std::string error;
  };
  std::vector<Cached> veins(manifest.entries.size());
  parallel_for(veins.size(), cfg.threads, [&](std::size_t i) {
    try {
      const GrayImage img = read_pgm(manifest.resolve(manifest.entries[i]));
      veins[i].vein = vein_map(extract_roi(img, cfg.roi).roi, cfg, models);
    } catch (const Error& e) {
      veins[i].error = std::string(error_code_name(e.code())) + ": " + e.what();
    }
  });

  std::vector<SweepRow> rows;
  for (int value = lo; value <= hi; ++value) {
    PipelineConfig vc = cfg;
    (axis == SweepAxis::kC ? vc.keypoint.c : vc.keypoint.ks) = value;
    std::vector<ImageResult> images(veins.size());
    std::vector<double> ms(veins.size(), 0.0);
    parallel_for(veins.size(), cfg.threads, [&](std::size_t i) {
      if (!veins[i].error.empty()) {
        images[i].error = veins[i].error;
        return;
      }
      const auto t0 = std::chrono::steady_clock::now();
      try {
        images[i].set = describe_vein_map(veins[i].vein, vc, models);
        images[i].keypoints = images[i].set.size();
      } catch (const Error& e) {
        images[i].error = std::string(error_code_name(e.code())) + ": " + e.what();
      }
      ms[i] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    });
    const EvalReport report = score_pairs(manifest, images, pairs, vc.matcher, cfg.threads);
    SweepRow row{value, report.roc.eer, report.mean_keypoints, 0.0};
    for (double m : ms) row.mean_runtime_ms += m / static_cast<double>(ms.size());
    rows.push_back(row);
    if (on_row) on_row(row);
  }
  return rows;
}

std::string sweep_csv(SweepAxis axis, const std::vector<SweepRow>& rows) {
  std::string out = axis == SweepAxis::kC ? "c" : "ks";
  out += ",eer,mean_keypoints,mean_runtime_ms\n";
  char buf[128];
  for (const SweepRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.3f,%.3f\n", r.value, r.eer, r.mean_keypoints, r.mean_runtime_ms);
    out += buf;
  }
  return out;
}

}  // namespace veinpatch
