#include "veinpatch/ingest.hpp"

#include <algorithm>
#include <regex>

#include "veinpatch/pgm.hpp"

namespace veinpatch {

namespace {

struct LayoutPattern {
  std::regex re;
  int class_group = -1;
  int session_group = -1;
  int sample_group = -1;
};

LayoutPattern compile_layout(const std::string& layout) {
  LayoutPattern p;
  std::string re;
  int group = 0;
  for (std::size_t i = 0; i < layout.size();) {
    if (layout[i] == '{') {
      const auto close = layout.find('}', i);
      require(close != std::string::npos, ErrorCode::kInvalidParameter, "unterminated '{' in layout");
      const std::string name = layout.substr(i + 1, close - i - 1);
      int* slot = name == "class" ? &p.class_group : name == "session" ? &p.session_group
                                  : name == "sample" ? &p.sample_group : nullptr;
      require(slot != nullptr, ErrorCode::kInvalidParameter, "unknown layout placeholder {" + name + "}");
      require(*slot < 0, ErrorCode::kInvalidParameter, "layout repeats {" + name + "}");
      *slot = ++group;
      re += "([0-9]+)";
      i = close + 1;
      continue;
    }
    if (std::string_view("\\^$.|?*+()[]{}").find(layout[i]) != std::string_view::npos) re += '\\';
    re += layout[i++];
  }
  require(p.class_group > 0 && p.sample_group > 0, ErrorCode::kInvalidParameter,
          "layout needs {class} and {sample} placeholders");
  p.re = std::regex(re);
  return p;
}

}  // namespace

IngestResult ingest(const std::filesystem::path& root, const std::string& layout,
                    const std::filesystem::path& manifest_dir) {
  require(std::filesystem::is_directory(root), ErrorCode::kIo, "dataset root not found: " + root.string());
  const LayoutPattern pattern = compile_layout(layout);
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  IngestResult result;
  const std::filesystem::path base = std::filesystem::absolute(manifest_dir);
  for (const auto& f : files) {
    const std::string rel = std::filesystem::relative(f, root).generic_string();
    std::smatch m;
    if (!std::regex_match(rel, m, pattern.re)) continue;
    try {
      (void)decode_pgm(read_file_bytes(f));
    } catch (const Error& e) {
      result.excluded.push_back(rel + ": " + e.what());
      continue;
    }
    ManifestEntry entry;
    entry.path = std::filesystem::relative(std::filesystem::absolute(f), base).generic_string();
    entry.class_id = std::stoi(m[pattern.class_group].str());
    entry.session = pattern.session_group > 0 ? std::stoi(m[pattern.session_group].str()) : 1;
    entry.sample_index = std::stoi(m[pattern.sample_group].str());
    result.manifest.entries.push_back(std::move(entry));
  }
  require(!result.manifest.entries.empty() || !result.excluded.empty(), ErrorCode::kInvalidInput,
          "no files under " + root.string() + " match layout '" + layout + "'");
  std::stable_sort(result.manifest.entries.begin(), result.manifest.entries.end(),
                   [](const ManifestEntry& a, const ManifestEntry& b) {
                     if (a.class_id != b.class_id) return a.class_id < b.class_id;
                     if (a.session != b.session) return a.session < b.session;
                     return a.sample_index < b.sample_index;
                   });
  result.manifest.base = base;
  return result;
}

}  // namespace veinpatch
