#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "veinpatch/pipeline.hpp"

namespace veinpatch {

struct ConfigKey {
  const char* name;
  const char* default_value;
  const char* help;
};

/// Every recognised key with its built-in default.
const std::vector<ConfigKey>& config_keys();

/// Flat `key = value` settings with three layers: built-in defaults, a
/// config file, and command-line overrides (highest precedence).
class ConfigStore {
 public:
  enum class Layer { kDefault, kFile, kFlag };

  ConfigStore();

  void load_file(const std::filesystem::path& path);
  void load_text(const std::string& text, const std::string& origin);
  void set(const std::string& key, const std::string& value, Layer layer = Layer::kFlag);

  const std::string& get(const std::string& key) const;
  Layer layer(const std::string& key) const;

  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;

  PipelineConfig pipeline() const;

  /// All keys in `key = value` form, sorted.
  std::string dump() const;

 private:
  struct Entry {
    std::string value;
    Layer layer;
  };
  std::map<std::string, Entry> entries_;
};

/// Applies `file`, or VEINPATCH_CONFIG when no file is given, then the
/// overrides in order.
ConfigStore resolve_config(const std::optional<std::filesystem::path>& file,
                           const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace veinpatch
