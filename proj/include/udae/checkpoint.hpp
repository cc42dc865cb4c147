#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "udae/unet.hpp"

namespace udae {

// CRC-32 (IEEE, reflected, poly 0xEDB88320).
inline std::uint32_t crc32(const unsigned char *data, std::size_t len,
                           std::uint32_t crc = 0) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc ^= 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i)
    crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

namespace detail {

struct ByteWriter {
  std::vector<unsigned char> bytes;

  void u16(std::uint16_t v) {
    bytes.push_back(static_cast<unsigned char>(v & 0xFF));
    bytes.push_back(static_cast<unsigned char>((v >> 8) & 0xFF));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
      bytes.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
      bytes.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const char *s, std::size_t n) {
    bytes.insert(bytes.end(), s, s + n);
  }
};

struct ByteReader {
  const unsigned char *p;
  std::size_t left;
  const char *what;

  void need(std::size_t n) const {
    if (left < n)
      throw std::runtime_error(std::string(what) + ": truncated file");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    p += 2;
    left -= 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    left -= 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    p += 8;
    left -= 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
};

inline std::vector<unsigned char> read_file(const std::filesystem::path &path,
                                            const char *what) {
  std::ifstream f(path, std::ios::binary);
  if (!f)
    throw std::runtime_error(std::string(what) + ": cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file(const std::filesystem::path &path,
                       const std::vector<unsigned char> &bytes, const char *what) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f)
    throw std::runtime_error(std::string(what) + ": cannot write " + path.string());
  f.write(reinterpret_cast<const char *>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f)
    throw std::runtime_error(std::string(what) + ": short write to " + path.string());
}

} // namespace detail

// Checkpoint layout: "UDAE" magic, u16 format version, config as four LE u32
// (depth, base_channels, in_channels, out_channels), every parameter array in
// build order (weights then bias per layer) as LE f32, CRC32 of all bytes so
// far as the trailer.
inline std::vector<unsigned char> serialize_weights(const ModelWeights &m) {
  detail::ByteWriter w;
  w.raw("UDAE", 4);
  w.u16(m.version);
  w.u32(static_cast<std::uint32_t>(m.config.depth));
  w.u32(static_cast<std::uint32_t>(m.config.base_channels));
  w.u32(static_cast<std::uint32_t>(m.config.in_channels));
  w.u32(static_cast<std::uint32_t>(m.config.out_channels));
  for (const auto &l : m.layers) {
    for (std::int64_t i = 0; i < l.weights.size(); ++i)
      w.f32(l.weights.data()[i]);
    for (float b : l.bias)
      w.f32(b);
  }
  w.u32(crc32(w.bytes.data(), w.bytes.size()));
  return w.bytes;
}

inline ModelWeights deserialize_weights(const std::vector<unsigned char> &bytes) {
  const char *what = "load_weights";
  if (bytes.size() < 4 + 2 + 16 + 4)
    throw std::runtime_error(std::string(what) + ": truncated file");
  if (std::memcmp(bytes.data(), "UDAE", 4) != 0)
    throw std::runtime_error(std::string(what) + ": bad magic, not a UDAE checkpoint");
  const std::uint32_t stored_crc = [&] {
    detail::ByteReader r{bytes.data() + bytes.size() - 4, 4, what};
    return r.u32();
  }();
  const std::uint32_t actual_crc = crc32(bytes.data(), bytes.size() - 4);
  if (stored_crc != actual_crc)
    throw std::runtime_error(std::string(what) + ": checksum mismatch");

  detail::ByteReader r{bytes.data() + 4, bytes.size() - 8, what};
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion)
    throw std::runtime_error(std::string(what) + ": unsupported format version " +
                             std::to_string(version));
  UNetConfig cfg;
  cfg.depth = static_cast<int>(r.u32());
  cfg.base_channels = static_cast<int>(r.u32());
  cfg.in_channels = static_cast<int>(r.u32());
  cfg.out_channels = static_cast<int>(r.u32());
  validate(cfg);

  ModelWeights m = build_model(cfg, 0); // shapes only; data overwritten below
  m.version = version;
  for (auto &l : m.layers) {
    for (std::int64_t i = 0; i < l.weights.size(); ++i)
      l.weights.data()[i] = r.f32();
    for (float &b : l.bias)
      b = r.f32();
  }
  if (r.left != 0)
    throw std::runtime_error(std::string(what) + ": trailing bytes after parameters");
  return m;
}

inline void save_weights(const ModelWeights &m, const std::filesystem::path &path) {
  detail::write_file(path, serialize_weights(m), "save_weights");
}

inline ModelWeights load_weights(const std::filesystem::path &path) {
  return deserialize_weights(detail::read_file(path, "load_weights"));
}

inline std::size_t checkpoint_file_size(const UNetConfig &cfg) {
  return 4 + 2 + 16 + 4 * static_cast<std::size_t>(parameter_count(cfg)) + 4;
}

} // namespace udae
