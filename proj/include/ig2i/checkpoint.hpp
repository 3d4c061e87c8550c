#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "ig2i/config.hpp"
#include "ig2i/diffusion.hpp"
#include "ig2i/error.hpp"

namespace ig2i {

// Layout (all integers little-endian):
//   "IG2I" | u32 version | u32 config length | config text (key = value lines)
//   then per tensor: u16 name length | name | u8 rank | u32 dims[rank] |
//   f32 values, row-major.

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    u32(bits);
  }
  void raw(const std::string& s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}
  bool at_end() const { return pos_ == bytes_.size(); }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint16_t u16() {
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(u8()) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint is truncated");
  }
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

struct Checkpoint {
  Model model;
  KeyValues config;  // model.* keys plus whatever metadata the writer added
};

/// Writes all parameters of `m` with its config merged over `metadata`.
inline void save_checkpoint(const std::filesystem::path& path, const Model& m,
                            const KeyValues& metadata = {}) {
  KeyValues kv = metadata;
  m.config.write(kv);
  const std::string text = kv.to_text();
  detail::ByteWriter w;
  w.raw("IG2I");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.raw(text);
  for (ParamId p = 0; p < m.params.size(); ++p) {
    const auto& name = m.params.name(p);
    const auto& v = m.params.value(p);
    if (name.size() > std::numeric_limits<std::uint16_t>::max())
      throw CheckpointError("tensor name too long: " + name);
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name);
    w.u8(2);
    w.u32(static_cast<std::uint32_t>(v.rows()));
    w.u32(static_cast<std::uint32_t>(v.cols()));
    for (double x : v.values()) w.f32(static_cast<float>(x));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  detail::ByteReader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));
  if (r.raw(4) != "IG2I") throw CheckpointError("bad checkpoint magic");
  if (const auto v = r.u32(); v != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(v));
  const std::uint32_t len = r.u32();
  Checkpoint ck;
  ck.config = KeyValues::parse(r.raw(len));
  ck.model = init_model(ModelConfig::read(ck.config));

  std::vector<bool> seen(ck.model.params.size(), false);
  while (!r.at_end()) {
    const std::string name = r.raw(r.u16());
    const std::uint8_t rank = r.u8();
    std::vector<std::uint32_t> dims(rank);
    for (auto& dim : dims) dim = r.u32();
    const auto id = ck.model.params.find(name);
    if (!id) throw CheckpointError("unexpected tensor " + name);
    Matrix& v = ck.model.params.mutable_value(*id);
    const bool shape_ok = (rank == 2 && dims[0] == v.rows() && dims[1] == v.cols()) ||
                          (rank == 1 && v.cols() == 1 && dims[0] == v.rows());
    if (!shape_ok) throw CheckpointError("shape mismatch for tensor " + name);
    for (auto& x : v.values()) x = r.f32();
    seen[*id] = true;
  }
  for (ParamId p = 0; p < seen.size(); ++p)
    if (!seen[p]) throw CheckpointError("checkpoint is missing tensor " + ck.model.params.name(p));
  return ck;
}

}  // namespace ig2i
