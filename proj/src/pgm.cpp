#include "veinpatch/pgm.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

namespace veinpatch {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  // Skips whitespace and '#' comments, then reads one ASCII token.
  std::string token() {
    for (;;) {
      while (pos_ < bytes_.size() && std::isspace(bytes_[pos_])) ++pos_;
      if (pos_ < bytes_.size() && bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
        continue;
      }
      break;
    }
    std::string out;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_]) && bytes_[pos_] != '#') {
      out.push_back(static_cast<char>(bytes_[pos_++]));
    }
    require(!out.empty(), ErrorCode::kFormat, "truncated PGM header");
    return out;
  }

  int integer() {
    const std::string t = token();
    for (char c : t) require(std::isdigit(static_cast<unsigned char>(c)), ErrorCode::kFormat,
                             "non-numeric PGM header field '" + t + "'");
    require(t.size() <= 9, ErrorCode::kFormat, "PGM header field too large");
    return std::stoi(t);
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_offset() {
    require(pos_ < bytes_.size() && std::isspace(bytes_[pos_]), ErrorCode::kFormat,
            "missing whitespace before PGM raster");
    return pos_ + 1;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  HeaderReader reader(bytes);
  require(reader.token() == "P5", ErrorCode::kFormat, "not a binary PGM (P5)");
  const int w = reader.integer();
  const int h = reader.integer();
  const int maxval = reader.integer();
  require(w > 0 && h > 0, ErrorCode::kFormat, "PGM dimensions must be positive");
  require(maxval == 255, ErrorCode::kFormat, "PGM maxval must be 255");
  const std::size_t offset = reader.raster_offset();
  const std::size_t n = static_cast<std::size_t>(w) * h;
  require(bytes.size() >= offset + n, ErrorCode::kFormat, "truncated PGM raster");
  std::vector<std::uint8_t> data(bytes.begin() + offset, bytes.begin() + offset + n);
  return GrayImage(w, h, std::move(data));
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
  const std::string header =
      "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  auto px = img.pixels();
  out.insert(out.end(), px.begin(), px.end());
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::kIo, "short write to " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_pgm(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  write_file_bytes(path, encode_pgm(img));
}

}  // namespace veinpatch
