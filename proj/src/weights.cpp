#include "veinpatch/weights.hpp"

#include <bit>
#include <cstring>
#include <limits>

#include "veinpatch/pgm.hpp"

namespace veinpatch {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const std::string& s) { out_.insert(out_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = bytes_[pos_] | (bytes_[pos_ + 1] << 8);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    require(pos_ + n <= bytes_.size(), ErrorCode::kFormat, "truncated VPW1 file");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_vpw(const std::vector<NamedTensor>& tensors) {
  Writer w;
  w.bytes("VPW1");
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    require(name.size() <= std::numeric_limits<std::uint16_t>::max(), ErrorCode::kFormat,
            "tensor name too long");
    require(t.rank() <= 255, ErrorCode::kFormat, "tensor rank too large");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (int d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.values()) w.f32(v);
  }
  return w.take();
}

std::vector<NamedTensor> decode_vpw(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  require(r.str(4) == "VPW1", ErrorCode::kFormat, "bad VPW1 magic");
  const std::uint32_t count = r.u32();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name = r.str(r.u16());
    const int rank = r.u8();
    Shape shape;
    for (int k = 0; k < rank; ++k) {
      const std::uint32_t d = r.u32();
      require(d > 0 && d < (1u << 30), ErrorCode::kFormat, "bad VPW1 dimension");
      shape.push_back(static_cast<int>(d));
    }
    std::vector<float> values(shape_size(shape));
    for (float& v : values) v = r.f32();
    nt.tensor = Tensor<float>(std::move(shape), std::move(values));
    out.push_back(std::move(nt));
  }
  require(r.done(), ErrorCode::kFormat, "trailing bytes after VPW1 payload");
  return out;
}

void write_vpw(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  write_file_bytes(path, encode_vpw(tensors));
}

std::vector<NamedTensor> read_vpw(const std::filesystem::path& path) {
  return decode_vpw(read_file_bytes(path));
}

}  // namespace veinpatch
