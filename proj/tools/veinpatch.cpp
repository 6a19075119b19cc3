#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "veinpatch/config.hpp"
#include "veinpatch/descriptor.hpp"
#include "veinpatch/error.hpp"
#include "veinpatch/evaluate.hpp"
#include "veinpatch/ingest.hpp"
#include "veinpatch/keypatch.hpp"
#include "veinpatch/matcher.hpp"
#include "veinpatch/pgm.hpp"
#include "veinpatch/pipeline.hpp"
#include "veinpatch/protocol.hpp"
#include "veinpatch/roi.hpp"
#include "veinpatch/synth.hpp"
#include "veinpatch/unet.hpp"
#include "veinpatch/veinlabel.hpp"

namespace fs = std::filesystem;
using namespace veinpatch;

namespace {

// Flags that feed the layered config. Each subcommand binds the subset it uses.
struct ConfigFlags {
  std::optional<fs::path> config_file;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> bound;  // (key, value) filled by callbacks

  void common(CLI::App* sub) {
    sub->add_option("--config", config_file, "config file (default: $VEINPATCH_CONFIG)");
    sub->add_option("--set", sets, "override any config key, key=value (repeatable)");
    bind(sub, "--seed", "seed", "seed for every stochastic choice");
    bind(sub, "--threads", "threads", "worker threads");
  }

  void bind(CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { bound.emplace_back(key, v); }, help + " [" + key + "]");
  }

  void pipeline(CLI::App* sub) {
    bind(sub, "--extractor", "extractor", "traditional | unet");
    bind(sub, "--unet-model", "unet.model", "U-Net weights");
    bind(sub, "--descriptor", "descriptor", "raw | descriptor weights");
    bind(sub, "--c", "keypoint.c", "keypoint reduction half-width");
    bind(sub, "--ks", "keypoint.ks", "keypoint patch scale");
    bind(sub, "--sigma", "keypoint.sigma", "blur before thinning");
    bind(sub, "--td", "matcher.td", "descriptor distance threshold");
    bind(sub, "--ransac-iters", "matcher.iters", "RANSAC iterations");
    bind(sub, "--tol", "matcher.tol", "RANSAC tolerance in px");
  }

  ConfigStore resolve() const {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      require(eq != std::string::npos, ErrorCode::kInvalidParameter, "--set expects key=value, got '" + s + "'");
      overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    // Named flags win over --set.
    overrides.insert(overrides.end(), bound.begin(), bound.end());
    return resolve_config(config_file, overrides);
  }
};

GrayImage load_gray(const fs::path& p) { return read_pgm(p); }

ProbMap load_prob(const fs::path& p) { return to_prob(read_pgm(p)); }

// Tags failures of one pipeline stage with its name and input path.
template <typename F>
auto staged(const char* stage, const fs::path& input, F&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, input.string(), e);
  }
}

// ROI + soft label for every readable manifest entry.
std::vector<TrainSample> roi_samples(const DatasetManifest& m, const PipelineConfig& cfg, int limit) {
  std::vector<TrainSample> out;
  for (const ManifestEntry& e : m.entries) {
    if (limit > 0 && static_cast<int>(out.size()) >= limit) break;
    try {
      RoiResult r = extract_roi(read_pgm(m.resolve(e)), cfg.roi);
      SoftLabel label = make_soft_label(r.roi, cfg.vein.sigma_curv, cfg.vein.sigma_smooth);
      out.push_back({std::move(r.roi), std::move(label)});
    } catch (const Error& err) {
      std::cerr << "warning: skipping " << e.path << ": " << error_code_name(err.code()) << ": " << err.what()
                << "\n";
    }
  }
  return out;
}

// ROIs under `data` paired with same-named label maps under `labels`.
std::vector<TrainSample> dir_samples(const fs::path& data, const fs::path& labels, int limit) {
  require(fs::is_directory(data), ErrorCode::kIo, "ROI directory not found: " + data.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(data)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<TrainSample> out;
  for (const fs::path& f : files) {
    if (limit > 0 && static_cast<int>(out.size()) >= limit) break;
    const fs::path rel = fs::relative(f, data);
    TrainSample s{read_pgm(f), SoftLabel{to_prob(read_pgm(labels / rel)), false}};
    require(s.label.map.width() == s.roi.width() && s.label.map.height() == s.roi.height(), ErrorCode::kShape,
            "label " + (labels / rel).string() + " does not match its ROI size");
    out.push_back(std::move(s));
  }
  require(!out.empty(), ErrorCode::kInvalidInput, "no PGM files under " + data.string());
  return out;
}

// --manifest computes labels on the fly; --data/--labels reads them from disk.
std::vector<TrainSample> training_data(const fs::path& manifest, const fs::path& data, const fs::path& labels,
                                       const PipelineConfig& cfg, int limit) {
  if (!manifest.empty()) return roi_samples(read_manifest(manifest), cfg, limit);
  require(!data.empty() && !labels.empty(), ErrorCode::kInvalidParameter,
          "give --manifest, or --data and --labels");
  return dir_samples(data, labels, limit);
}

void print_counts(const DatasetManifest& m) {
  std::set<int> classes, sessions;
  for (const ManifestEntry& e : m.entries) {
    classes.insert(e.class_id);
    sessions.insert(e.session);
  }
  std::cout << "classes " << classes.size() << "\nsessions " << sessions.size() << "\nimages "
            << m.entries.size() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finger-vein verification: ROI, vein maps, keypoint patches, descriptors, matching"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "veinpatch 0.1.0");

  ConfigFlags flags;
  std::function<void()> action;

  // ingest
  fs::path ingest_root, ingest_out, ingest_excl;
  std::string layout = "cls_{class}/s{session}/img_{sample}.pgm";
  {
    auto* s = app.add_subcommand("ingest", "build a manifest from a PGM directory tree");
    s->add_option("--root", ingest_root, "dataset root")->required();
    s->add_option("--layout", layout, "relative path pattern with {class} {session} {sample}")
        ->capture_default_str();
    s->add_option("--out", ingest_out, "manifest CSV")->required();
    s->add_option("--exclusions", ingest_excl, "write the exclusion report here");
    flags.common(s);
    s->callback([&] {
      action = [&] {
        const fs::path dir = ingest_out.parent_path().empty() ? fs::path(".") : ingest_out.parent_path();
        IngestResult r = ingest(ingest_root, layout, dir);
        write_manifest(ingest_out, r.manifest, "ingested with layout " + layout);
        print_counts(r.manifest);
        std::cout << "excluded " << r.excluded.size() << "\n";
        std::string report;
        for (const std::string& x : r.excluded) report += x + "\n";
        std::cerr << report;
        if (!ingest_excl.empty()) write_file_bytes(ingest_excl, std::vector<std::uint8_t>(report.begin(), report.end()));
      };
    });
  }

  // synth
  fs::path synth_out;
  SynthSpec spec;
  {
    auto* s = app.add_subcommand("synth", "generate a synthetic phantom dataset with labels");
    s->add_option("--out", synth_out, "output directory")->required();
    s->add_option("--classes", spec.classes)->capture_default_str();
    s->add_option("--samples", spec.samples_per_class, "samples per class and session")->capture_default_str();
    s->add_option("--sessions", spec.sessions)->capture_default_str();
    s->add_option("--ridge-min", spec.ridge_min)->capture_default_str();
    s->add_option("--ridge-max", spec.ridge_max)->capture_default_str();
    s->add_option("--jitter", spec.jitter, "translation jitter in px")->capture_default_str();
    s->add_option("--noise", spec.noise, "gray-level noise sd")->capture_default_str();
    flags.common(s);
    s->callback([&] {
      action = [&] {
        spec.seed = flags.resolve().get_u64("seed");
        DatasetManifest m = synth_generate(spec, synth_out);
        print_counts(m);
        std::cout << "manifest " << (synth_out / "manifest.csv").string() << "\n";
      };
    });
  }

  // roi
  fs::path io_in, io_out;
  {
    auto* s = app.add_subcommand("roi", "extract and align the finger ROI");
    s->add_option("--in", io_in, "raw PGM")->required();
    s->add_option("--out", io_out, "ROI PGM")->required();
    flags.common(s);
    s->callback([&] {
      action = [&] {
        const PipelineConfig cfg = flags.resolve().pipeline();
        const GrayImage img = load_gray(io_in);
        RoiResult r = staged("roi", io_in, [&] { return extract_roi(img, cfg.roi); });
        write_pgm(io_out, r.roi);
        std::printf("rotation_deg %.6f\naligned_slope %.6g\n", r.rotation_deg, r.aligned_slope);
      };
    });
  }

  // labels
  fs::path labels_manifest, labels_dir;
  {
    auto* s = app.add_subcommand("labels", "soft vein labels from the curvature extractor");
    s->add_option("--in", io_in, "ROI PGM");
    s->add_option("--out", io_out, "label PGM");
    s->add_option("--manifest", labels_manifest, "raw-image manifest; writes roi/ and label/ trees");
    s->add_option("--out-dir", labels_dir, "output directory for --manifest");
    flags.common(s);
    s->callback([&] {
      action = [&] {
        const PipelineConfig cfg = flags.resolve().pipeline();
        if (!labels_manifest.empty()) {
          require(!labels_dir.empty(), ErrorCode::kInvalidParameter, "--manifest needs --out-dir");
          const DatasetManifest m = read_manifest(labels_manifest);
          DatasetManifest rois;
          int written = 0;
          for (const ManifestEntry& e : m.entries) {
            try {
              RoiResult r = extract_roi(read_pgm(m.resolve(e)), cfg.roi);
              SoftLabel l = make_soft_label(r.roi, cfg.vein.sigma_curv, cfg.vein.sigma_smooth);
              write_pgm(labels_dir / "roi" / e.path, r.roi);
              write_pgm(labels_dir / "label" / e.path, to_gray(l.map));
              ManifestEntry re = e;
              re.path = (fs::path("roi") / e.path).generic_string();
              rois.entries.push_back(re);
              ++written;
            } catch (const Error& err) {
              std::cerr << "warning: " << e.path << ": " << error_code_name(err.code()) << ": " << err.what()
                        << "\n";
            }
          }
          write_manifest(labels_dir / "rois.csv", rois, "ROI crops");
          std::cout << "labels " << written << "\n";
          return;
        }
        require(!io_in.empty() && !io_out.empty(), ErrorCode::kInvalidParameter,
                "labels needs --in and --out, or --manifest and --out-dir");
        const GrayImage roi = load_gray(io_in);
        SoftLabel l = staged("vein", io_in, [&] { return make_soft_label(roi, cfg.vein.sigma_curv, cfg.vein.sigma_smooth); });
        if (l.degenerate) std::cerr << "warning: degenerate label (flat curvature response)\n";
        write_pgm(io_out, to_gray(l.map));
      };
    });
  }

  // train-unet
  fs::path train_manifest, model_out, roi_dir, label_dir;
  int train_limit = 0;
  int base_width = 16;
  {
    auto* s = app.add_subcommand("train-unet", "train the vein-map U-Net on curvature soft labels");
    s->add_option("--manifest", train_manifest, "raw-image manifest (labels computed on the fly)");
    s->add_option("--data", roi_dir, "ROI directory");
    s->add_option("--labels", label_dir, "label directory mirroring --data");
    s->add_option("--out", model_out, "weights (VPW1, plus .json sidecar)")->required();
    s->add_option("--limit", train_limit, "use at most N images (0 = all)");
    s->add_option("--base-width", base_width, "first-level channels")->capture_default_str();
    flags.bind(s, "--epochs", "unet.epochs", "epochs");
    flags.bind(s, "--batch", "unet.batch", "batch size");
    flags.bind(s, "--lr", "unet.lr", "Adam learning rate");
    flags.bind(s, "--bce-weight", "unet.bce_weight", "BCE weight");
    flags.common(s);
    s->callback([&] {
      action = [&] {
        const PipelineConfig cfg = flags.resolve().pipeline();
        const std::vector<TrainSample> data = training_data(train_manifest, roi_dir, label_dir, cfg, train_limit);
        UNetModel model(UNetConfig{base_width, true, cfg.seed});
        TrainLog log = train_unet(model, data, cfg.unet_train, [](int epoch, double loss) {
          std::printf("epoch %d loss %.6f\n", epoch, loss);
          std::fflush(stdout);
        });
        save_unet(model_out, model, UNetMetadata{model.config(), cfg.unet_train, log.epoch_loss});
        std::printf("train_precision %.6f\n", precision_eval(model, data));
      };
    });
  }

  // infer-unet
  fs::path model_in;
  {
    auto* s = app.add_subcommand("infer-unet", "vein probability map from an ROI");
    s->add_option("--model", model_in, "U-Net weights")->required();
    s->add_option("--in", io_in, "ROI PGM")->required();
    s->add_option("--out", io_out, "probability PGM")->required();
    flags.common(s);
    s->callback([&] {
      action = [&] {
        UNetModel model = load_unet(model_in);
        const GrayImage roi = load_gray(io_in);
        write_pgm(io_out, to_gray(staged("vein", io_in, [&] { return infer(model, roi); })));
      };
    });
  }

  // detect
  {
    auto* s = app.add_subcommand("detect", "keypoints from a vein map");
    s->add_option("--in", io_in, "vein map PGM")->required();
    s->add_option("--out", io_out, "keypoint CSV")->required();
    flags.pipeline(s);
    flags.bind(s, "--threshold", "keypoint.threshold", "8-bit candidate level");
    flags.common(s);
    s->callback([&] {
      action = [&] {
        const PipelineConfig cfg = flags.resolve().pipeline();
        const ProbMap map = load_prob(io_in);
        const auto kps = staged("keypoints", io_in, [&] { return detect_keypoints(map, cfg.keypoint); });
        write_keypoints(io_out, kps);
        std::cout << "keypoints " << kps.size() << "\n";
      };
    });
  }

  // describe
  fs::path kps_in, image_in, dump_dir;
  bool use_raw = false;
  {
    auto* s = app.add_subcommand("describe", "descriptors for keypoints, or the full pipeline on a raw image");
    s->add_option("--in", io_in, "vein map PGM");
    s->add_option("--kps", kps_in, "keypoint CSV for --in");
    s->add_option("--image", image_in, "raw image; runs every stage");
    s->add_option("--dump-dir", dump_dir, "write intermediates (with --image)");
    s->add_option("--out", io_out, "descriptor bin")->required();
    s->add_flag("--raw", use_raw, "training-free descriptor");
    s->add_option_function<std::string>(
        "--model", [&](const std::string& v) { flags.bound.emplace_back("descriptor", v); }, "descriptor weights");
    flags.pipeline(s);
    flags.common(s);
    s->callback([&] {
      action = [&] {
        if (use_raw) flags.bound.emplace_back("descriptor", "raw");
        const PipelineConfig cfg = flags.resolve().pipeline();
        const PipelineModels models = load_models(cfg);
        DescriptorSet set;
        if (!image_in.empty()) {
          PipelineOptions opts;
          if (!dump_dir.empty()) opts.dump_dir = dump_dir;
          set = run_pipeline(image_in, cfg, models, opts);
        } else {
          require(!io_in.empty() && !kps_in.empty(), ErrorCode::kInvalidParameter,
                  "describe needs --in and --kps, or --image");
          const ProbMap map = load_prob(io_in);
          const auto kps = read_keypoints(kps_in);
          const auto patches = extract_patches(map, kps);
          set.keypoints = kps;
          if (models.desc) {
            set.descriptors = describe(*models.desc, patches);
          } else {
            set.keypoints.clear();
            for (std::size_t i = 0; i < patches.size(); ++i) {
              try {
                set.descriptors.push_back(raw_descriptor(patches[i]));
                set.keypoints.push_back(kps[i]);
              } catch (const Error&) {
                std::cerr << "warning: flat patch at (" << kps[i].x << "," << kps[i].y << ") skipped\n";
              }
            }
          }
        }
        write_descriptor_set(io_out, set);
        std::cout << "descriptors " << set.size() << "\n";
      };
    });
  }

  // train-desc
  fs::path corpus_dir;
  PatchCorpusSpec corpus_spec;
  int held_out_classes = 32;
  {
    auto* s = app.add_subcommand("train-desc", "train the patch descriptor");
    s->add_option("--corpus", corpus_dir, "patch corpus directory (default: synthetic)");
    s->add_option("--classes", corpus_spec.classes, "synthetic classes")->capture_default_str();
    s->add_option("--samples", corpus_spec.samples_per_class, "synthetic samples per class")
        ->capture_default_str();
    s->add_option("--held-out-classes", held_out_classes, "fresh synthetic classes for the AUC report")
        ->capture_default_str();
    s->add_option("--out", model_out, "descriptor weights")->required();
    flags.bind(s, "--epochs", "desc.epochs", "epochs");
    flags.bind(s, "--batch-classes", "desc.batch", "classes per batch (M)");
    flags.bind(s, "--margin", "desc.margin", "triplet margin");
    flags.bind(s, "--lr", "desc.lr", "Adam learning rate");
    flags.common(s);
    s->callback([&] {
      action = [&] {
        const PipelineConfig cfg = flags.resolve().pipeline();
        corpus_spec.seed = mix_seed(cfg.seed, 1);
        const PatchCorpus corpus = corpus_dir.empty() ? synth_patch_corpus(corpus_spec) : load_patch_corpus(corpus_dir);
        DescModel model(cfg.seed);
        train_desc(model, corpus, cfg.desc_train, [](int epoch, double loss) {
          std::printf("epoch %d loss %.6f\n", epoch, loss);
          std::fflush(stdout);
        });
        save_desc(model_out, model);
        if (held_out_classes > 0) {
          PatchCorpusSpec held = corpus_spec;
          held.classes = held_out_classes;
          held.seed = mix_seed(cfg.seed, 2);
          const PatchCorpus test = synth_patch_corpus(held);
          std::vector<std::vector<Descriptor>> described;
          for (const auto& cls : test.classes) described.push_back(describe(model, cls));
          std::vector<double> pos, neg;
          corpus_pair_distances(described, pos, neg);
          std::printf("held_out_auc %.6f\n", pair_distance_auc(pos, neg));
        }
      };
    });
  }

  // match
  fs::path probe_in, gallery_in;
  std::optional<int> accept_threshold;
  bool match_json = false;
  {
    auto* s = app.add_subcommand("match", "score two descriptor sets");
    s->add_option("--probe", probe_in)->required();
    s->add_option("--gallery", gallery_in)->required();
    s->add_option("--threshold", accept_threshold, "accept when score >= threshold");
    s->add_flag("--json", match_json, "print match detail as JSON");
    flags.pipeline(s);
    flags.common(s);
    s->callback([&] {
      action = [&] {
        const PipelineConfig cfg = flags.resolve().pipeline();
        const MatchResult r = match_images(read_descriptor_set(probe_in), read_descriptor_set(gallery_in), cfg.matcher);
        std::cout << "score=" << r.score << "\n";
        std::optional<Decision> decision;
        if (accept_threshold) decision = decide(r.score, *accept_threshold);
        if (decision) std::cout << "decision=" << (*decision == Decision::kAccept ? "accept" : "reject") << "\n";
        if (match_json) {
          nlohmann::ordered_json j;
          j["score"] = r.score;
          j["raw_matches"] = r.raw_matches.size();
          j["unique_matches"] = r.unique_matches.size();
          nlohmann::ordered_json inl = nlohmann::ordered_json::array();
          for (const Match& m : r.inliers) inl.push_back({m.probe, m.gallery, m.distance});
          j["inliers"] = inl;
          if (r.homography) j["homography"] = *r.homography;
          else j["homography"] = nullptr;
          if (decision) j["decision"] = *decision == Decision::kAccept ? "accept" : "reject";
          std::cout << j.dump(2) << "\n";
        }
      };
    });
  }

  // evaluate
  fs::path eval_manifest, roc_out, cache_dir;
  std::string protocol = "fvc2004";
  {
    auto* s = app.add_subcommand("evaluate", "verification protocol run with ROC and EER");
    s->add_option("--manifest", eval_manifest)->required();
    s->add_option("--protocol", protocol, "fvc2004 | cross")->capture_default_str();
    s->add_option("--out", io_out, "report JSON")->required();
    s->add_option("--roc", roc_out, "ROC CSV");
    s->add_option("--cache-dir", cache_dir, "descriptor cache");
    flags.pipeline(s);
    flags.common(s);
    s->callback([&] {
      action = [&] {
        const PipelineConfig cfg = flags.resolve().pipeline();
        PipelineOptions opts;
        if (!cache_dir.empty()) opts.cache_dir = cache_dir;
        const EvalReport rep = evaluate(read_manifest(eval_manifest), cfg, parse_protocol(protocol), opts);
        for (const std::string& w : rep.warnings) std::cerr << "warning: " << w << "\n";
        for (const std::string& f : rep.failures) std::cerr << "warning: " << f << "\n";
        const std::string json = report_json(rep);
        write_file_bytes(io_out, std::vector<std::uint8_t>(json.begin(), json.end()));
        if (!roc_out.empty()) {
          const std::string csv = roc_csv(rep.roc);
          write_file_bytes(roc_out, std::vector<std::uint8_t>(csv.begin(), csv.end()));
        }
        std::printf("genuine %zu\nimposter %zu\nfailed_images %zu\neer %.6f\nthreshold %.6g\n",
                    rep.genuine_scores.size(), rep.imposter_scores.size(), rep.failed_images, rep.roc.eer,
                    rep.roc.eer_threshold);
      };
    });
  }

  // sweep
  std::string axis = "c";
  std::optional<int> sweep_lo, sweep_hi;
  {
    auto* s = app.add_subcommand("sweep", "EER and keypoint counts over c or ks");
    s->add_option("--manifest", eval_manifest)->required();
    s->add_option("--axis", axis, "c | ks")->capture_default_str();
    s->add_option("--lo", sweep_lo, "first value (c: 1, ks: 5)");
    s->add_option("--hi", sweep_hi, "last value (c: 12, ks: 32)");
    s->add_option("--protocol", protocol)->capture_default_str();
    s->add_option("--out", io_out, "table CSV")->required();
    flags.pipeline(s);
    flags.common(s);
    s->callback([&] {
      action = [&] {
        const PipelineConfig cfg = flags.resolve().pipeline();
        require(axis == "c" || axis == "ks", ErrorCode::kInvalidParameter, "--axis must be c or ks");
        const SweepAxis ax = axis == "c" ? SweepAxis::kC : SweepAxis::kKs;
        const int lo = sweep_lo.value_or(ax == SweepAxis::kC ? 1 : 5);
        const int hi = sweep_hi.value_or(ax == SweepAxis::kC ? 12 : 32);
        const auto rows = sweep(read_manifest(eval_manifest), cfg, parse_protocol(protocol), ax, lo, hi,
                                [&](const SweepRow& r) {
                                  std::printf("%s %d eer %.6f keypoints %.2f ms %.1f\n", axis.c_str(), r.value,
                                              r.eer, r.mean_keypoints, r.mean_runtime_ms);
                                  std::fflush(stdout);
                                });
        const std::string csv = sweep_csv(ax, rows);
        write_file_bytes(io_out, std::vector<std::uint8_t>(csv.begin(), csv.end()));
      };
    });
  }

  // eval-seg
  {
    auto* s = app.add_subcommand("eval-seg", "U-Net precision against curvature soft labels");
    s->add_option("--model", model_in, "U-Net weights")->required();
    s->add_option("--manifest", train_manifest, "raw-image manifest (labels computed on the fly)");
    s->add_option("--data", roi_dir, "ROI directory");
    s->add_option("--labels", label_dir, "label directory mirroring --data");
    s->add_option("--limit", train_limit, "use at most N images (0 = all)");
    flags.common(s);
    s->callback([&] {
      action = [&] {
        const PipelineConfig cfg = flags.resolve().pipeline();
        UNetModel model = load_unet(model_in);
        const auto data = training_data(train_manifest, roi_dir, label_dir, cfg, train_limit);
        std::printf("images %zu\nprecision %.6f\n", data.size(), precision_eval(model, data));
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << error_code_name(ErrorCode::kInvalidParameter) << ": " << e.what() << "\n";
    return 2;
  }

  try {
    action();
  } catch (const Error& e) {
    std::cerr << "error: " << error_code_name(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
