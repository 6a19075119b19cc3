#include "veinpatch/config.hpp"

#include <charconv>
#include <cstdlib>
#include <sstream>

#include "veinpatch/pgm.hpp"

namespace veinpatch {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"roi.threshold", "0.35", "edge-map binarization level"},
      {"roi.window", "5", "orientation moment window (odd)"},
      {"roi.gabor_wavelength", "8", "Gabor wavelength in px"},
      {"roi.gabor_sigma", "4", "Gabor envelope sigma in px"},
      {"roi.out_w", "225", "ROI width"},
      {"roi.out_h", "90", "ROI height"},
      {"roi.min_edge_points", "10", "minimum edge pixels per finger edge"},
      {"roi.inset", "0.06", "vertical inset as a fraction of band height"},
      {"vein.sigma", "3", "curvature scale of the traditional extractor"},
      {"vein.smooth", "1", "soft-label smoothing sigma"},
      {"extractor", "traditional", "traditional | unet"},
      {"unet.model", "", "trained U-Net weights (VPW1)"},
      {"unet.batch", "16", "U-Net batch size"},
      {"unet.lr", "1e-4", "U-Net Adam learning rate"},
      {"unet.epochs", "20", "U-Net training epochs"},
      {"unet.smoothing", "1", "Dice smoothing s"},
      {"unet.bce_weight", "1", "BCE weight lambda"},
      {"keypoint.c", "4", "reduction half-width c"},
      {"keypoint.ks", "11", "patch window side ks"},
      {"keypoint.sigma", "1", "blur sigma before thinning"},
      {"keypoint.threshold", "20", "8-bit candidate level"},
      {"keypoint.min_candidates", "20", "minimum skeleton candidates"},
      {"descriptor", "raw", "raw | path to descriptor weights"},
      {"desc.batch", "32", "classes per descriptor batch (M)"},
      {"desc.margin", "1", "triplet margin t"},
      {"desc.lr", "1e-3", "descriptor Adam learning rate"},
      {"desc.epochs", "60", "descriptor training epochs"},
      {"matcher.td", "1.2", "descriptor distance threshold t_d"},
      {"matcher.iters", "500", "RANSAC iterations"},
      {"matcher.tol", "3", "RANSAC inlier tolerance in px"},
      {"seed", "0", "seed for every stochastic choice"},
      {"threads", "1", "worker threads"},
  };
  return keys;
}

ConfigStore::ConfigStore() {
  for (const ConfigKey& k : config_keys()) entries_[k.name] = {k.default_value, Layer::kDefault};
}

void ConfigStore::load_file(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  load_text(std::string(bytes.begin(), bytes.end()), path.string());
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void ConfigStore::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    require(eq != std::string::npos, ErrorCode::kInvalidParameter,
            origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)), Layer::kFile);
  }
}

void ConfigStore::set(const std::string& key, const std::string& value, Layer layer) {
  auto it = entries_.find(key);
  require(it != entries_.end(), ErrorCode::kInvalidParameter, "unknown config key '" + key + "'");
  it->second = {value, layer};
}

const std::string& ConfigStore::get(const std::string& key) const {
  auto it = entries_.find(key);
  require(it != entries_.end(), ErrorCode::kInvalidParameter, "unknown config key '" + key + "'");
  return it->second.value;
}

ConfigStore::Layer ConfigStore::layer(const std::string& key) const {
  auto it = entries_.find(key);
  require(it != entries_.end(), ErrorCode::kInvalidParameter, "unknown config key '" + key + "'");
  return it->second.layer;
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& s) {
  T v{};
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc{} && end == s.data() + s.size(), ErrorCode::kInvalidParameter,
          "config key '" + key + "' expects a number, got '" + s + "'");
  return v;
}

}  // namespace

double ConfigStore::get_double(const std::string& key) const { return parse_number<double>(key, get(key)); }
int ConfigStore::get_int(const std::string& key) const { return parse_number<int>(key, get(key)); }
std::uint64_t ConfigStore::get_u64(const std::string& key) const {
  return parse_number<std::uint64_t>(key, get(key));
}

PipelineConfig ConfigStore::pipeline() const {
  PipelineConfig c;
  c.roi.threshold = get_double("roi.threshold");
  c.roi.window = get_int("roi.window");
  c.roi.gabor_wavelength = get_double("roi.gabor_wavelength");
  c.roi.gabor_sigma = get_double("roi.gabor_sigma");
  c.roi.out_w = get_int("roi.out_w");
  c.roi.out_h = get_int("roi.out_h");
  c.roi.min_edge_points = get_int("roi.min_edge_points");
  c.roi.inset = get_double("roi.inset");
  c.vein.sigma_curv = get_double("vein.sigma");
  c.vein.sigma_smooth = get_double("vein.smooth");
  c.extractor = get("extractor");
  c.unet_model = get("unet.model");
  c.unet_train.batch_size = get_int("unet.batch");
  c.unet_train.learning_rate = get_double("unet.lr");
  c.unet_train.epochs = get_int("unet.epochs");
  c.unet_train.smoothing = get_double("unet.smoothing");
  c.unet_train.bce_weight = get_double("unet.bce_weight");
  c.keypoint.c = get_int("keypoint.c");
  c.keypoint.ks = get_int("keypoint.ks");
  c.keypoint.sigma = get_double("keypoint.sigma");
  c.keypoint.candidate_threshold = get_int("keypoint.threshold");
  c.keypoint.min_candidates = get_int("keypoint.min_candidates");
  c.descriptor = get("descriptor");
  c.desc_train.batch_classes = get_int("desc.batch");
  c.desc_train.margin = get_double("desc.margin");
  c.desc_train.learning_rate = get_double("desc.lr");
  c.desc_train.epochs = get_int("desc.epochs");
  c.matcher.td = get_double("matcher.td");
  c.matcher.ransac_iters = get_int("matcher.iters");
  c.matcher.tol = get_double("matcher.tol");
  c.seed = get_u64("seed");
  c.matcher.seed = c.seed;
  c.unet_train.seed = c.seed;
  c.desc_train.seed = c.seed;
  c.threads = get_int("threads");
  require(c.threads >= 1, ErrorCode::kInvalidParameter, "threads must be at least 1");
  return c;
}

std::string ConfigStore::dump() const {
  std::string out;
  for (const auto& [key, e] : entries_) out += key + " = " + e.value + "\n";
  return out;
}

ConfigStore resolve_config(const std::optional<std::filesystem::path>& file,
                           const std::vector<std::pair<std::string, std::string>>& overrides) {
  ConfigStore store;
  if (file) {
    store.load_file(*file);
  } else if (const char* env = std::getenv("VEINPATCH_CONFIG"); env != nullptr && *env != '\0') {
    store.load_file(env);
  }
  for (const auto& [k, v] : overrides) store.set(k, v, ConfigStore::Layer::kFlag);
  return store;
}

}  // namespace veinpatch
