#include "veinpatch/protocol.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>

#include "veinpatch/error.hpp"
#include "veinpatch/pgm.hpp"

namespace veinpatch {

std::filesystem::path DatasetManifest::resolve(const ManifestEntry& e) const {
  const std::filesystem::path p(e.path);
  return p.is_absolute() || base.empty() ? p : base / p;
}

namespace {

int parse_int_field(std::string_view s, int line_no, const char* what) {
  int v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc{} && end == s.data() + s.size(), ErrorCode::kManifest,
          "manifest line " + std::to_string(line_no) + ": bad " + what + " '" + std::string(s) + "'");
  return v;
}

}  // namespace

DatasetManifest parse_manifest(const std::string& text) {
  DatasetManifest m;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("path,", 0) == 0) continue;
    // The path may itself contain commas; the last three fields are numeric.
    std::size_t c3 = line.rfind(',');
    std::size_t c2 = c3 == std::string::npos || c3 == 0 ? std::string::npos : line.rfind(',', c3 - 1);
    std::size_t c1 = c2 == std::string::npos || c2 == 0 ? std::string::npos : line.rfind(',', c2 - 1);
    require(c1 != std::string::npos && c1 > 0, ErrorCode::kManifest,
            "manifest line " + std::to_string(line_no) + " needs 4 fields: '" + line + "'");
    const std::string_view view(line);
    ManifestEntry e;
    e.path = line.substr(0, c1);
    e.class_id = parse_int_field(view.substr(c1 + 1, c2 - c1 - 1), line_no, "class_id");
    e.session = parse_int_field(view.substr(c2 + 1, c3 - c2 - 1), line_no, "session");
    e.sample_index = parse_int_field(view.substr(c3 + 1), line_no, "sample_index");
    m.entries.push_back(std::move(e));
  }
  return m;
}

std::string format_manifest(const DatasetManifest& manifest, const std::string& comment) {
  std::string out;
  std::istringstream lines(comment);
  std::string line;
  while (std::getline(lines, line)) out += "# " + line + "\n";
  out += "path,class_id,session,sample_index\n";
  for (const ManifestEntry& e : manifest.entries) {
    out += e.path + "," + std::to_string(e.class_id) + "," + std::to_string(e.session) + "," +
           std::to_string(e.sample_index) + "\n";
  }
  return out;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  DatasetManifest m = parse_manifest(std::string(bytes.begin(), bytes.end()));
  m.base = path.parent_path();
  return m;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest,
                    const std::string& comment) {
  const std::string text = format_manifest(manifest, comment);
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

namespace {

// Entry indices per class, each list ordered by (session, sample_index, row).
std::map<int, std::vector<std::size_t>> group_by_class(const DatasetManifest& m) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < m.entries.size(); ++i) groups[m.entries[i].class_id].push_back(i);
  for (auto& [cls, idx] : groups) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      const ManifestEntry& x = m.entries[a];
      const ManifestEntry& y = m.entries[b];
      if (x.session != y.session) return x.session < y.session;
      return x.sample_index < y.sample_index;
    });
  }
  return groups;
}

}  // namespace

PairList fvc2004_pairs(const DatasetManifest& manifest) {
  const auto groups = group_by_class(manifest);
  require(groups.size() >= 2, ErrorCode::kManifest,
          "protocol needs at least 2 classes, manifest has " + std::to_string(groups.size()));
  PairList pairs;
  std::vector<std::size_t> firsts;
  for (const auto& [cls, idx] : groups) {
    require(idx.size() >= 2, ErrorCode::kManifest,
            "class " + std::to_string(cls) + " has fewer than 2 samples");
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (std::size_t b = a + 1; b < idx.size(); ++b) pairs.genuine.emplace_back(idx[a], idx[b]);
    }
    firsts.push_back(idx.front());
  }
  for (std::size_t i = 0; i < firsts.size(); ++i) {
    for (std::size_t j = i + 1; j < firsts.size(); ++j) pairs.imposter.emplace_back(firsts[i], firsts[j]);
  }
  return pairs;
}

PairList cross_session_pairs(const DatasetManifest& manifest) {
  PairList pairs;
  std::vector<std::size_t> first_s1;
  std::vector<std::size_t> first_s2;
  for (const auto& [cls, idx] : group_by_class(manifest)) {
    std::vector<std::size_t> s1, s2;
    for (std::size_t i : idx) {
      if (manifest.entries[i].session == 1) s1.push_back(i);
      if (manifest.entries[i].session == 2) s2.push_back(i);
    }
    if (s1.empty() || s2.empty()) {
      pairs.warnings.push_back("class " + std::to_string(cls) + " lacks session " +
                               (s1.empty() ? "1" : "2") + "; excluded from cross-session pairs");
      continue;
    }
    for (std::size_t a : s1) {
      for (std::size_t b : s2) pairs.genuine.emplace_back(a, b);
    }
    first_s1.push_back(s1.front());
    first_s2.push_back(s2.front());
  }
  require(first_s1.size() >= 2, ErrorCode::kManifest,
          "cross-session protocol needs at least 2 dual-session classes, found " +
              std::to_string(first_s1.size()));
  for (std::size_t i = 0; i < first_s1.size(); ++i) {
    for (std::size_t j = i + 1; j < first_s1.size(); ++j) pairs.imposter.emplace_back(first_s1[i], first_s2[j]);
  }
  return pairs;
}

RocCurve roc_eer(const std::vector<double>& genuine, const std::vector<double>& imposter) {
  require(!genuine.empty() && !imposter.empty(), ErrorCode::kInvalidInput,
          "ROC needs both genuine and imposter scores");
  std::vector<double> gen(genuine), imp(imposter);
  std::sort(gen.begin(), gen.end());
  std::sort(imp.begin(), imp.end());
  RocCurve roc;
  roc.thresholds = gen;
  roc.thresholds.insert(roc.thresholds.end(), imp.begin(), imp.end());
  std::sort(roc.thresholds.begin(), roc.thresholds.end());
  roc.thresholds.erase(std::unique(roc.thresholds.begin(), roc.thresholds.end()), roc.thresholds.end());
  roc.thresholds.push_back(roc.thresholds.back() + 1.0);

  const double ng = static_cast<double>(gen.size());
  const double ni = static_cast<double>(imp.size());
  for (double t : roc.thresholds) {
    const auto imp_accept = imp.end() - std::lower_bound(imp.begin(), imp.end(), t);
    const auto gen_reject = std::lower_bound(gen.begin(), gen.end(), t) - gen.begin();
    roc.far.push_back(static_cast<double>(imp_accept) / ni);
    roc.frr.push_back(static_cast<double>(gen_reject) / ng);
  }

  // FAR - FRR starts at 1 and ends at -1, so a crossing always exists.
  for (std::size_t k = 0; k < roc.thresholds.size(); ++k) {
    const double diff = roc.far[k] - roc.frr[k];
    if (diff > 0.0) continue;
    if (diff == 0.0 || k == 0) {
      roc.eer = roc.far[k];
      roc.eer_threshold = roc.thresholds[k];
    } else {
      const double prev = roc.far[k - 1] - roc.frr[k - 1];
      const double a = prev / (prev - diff);
      roc.eer = roc.far[k - 1] + a * (roc.far[k] - roc.far[k - 1]);
      roc.eer_threshold = roc.thresholds[k - 1] + a * (roc.thresholds[k] - roc.thresholds[k - 1]);
    }
    break;
  }
  return roc;
}

}  // namespace veinpatch
