#pragma once

// Container used by every artifact file (ensembles, datasets, checkpoints):
//
//   bytes 0..7    magic tag, e.g. "SQCTRAJ1"
//   bytes 8..15   header length N, uint64 little-endian
//   next N bytes  UTF-8 JSON header
//   remainder     payload of IEEE-754 float64 values, little-endian
//
// The header always carries "payload_count", the number of float64 values
// that follow.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sqcml/rng.hpp"

namespace sqcml::io {

using json = nlohmann::json;

enum class Errc {
  open_failed,
  bad_magic,
  corrupt_header,
  version_mismatch,
  dimension_mismatch,
  truncated,
};

inline const char* errc_name(Errc e) {
  switch (e) {
    case Errc::open_failed: return "open_failed";
    case Errc::bad_magic: return "bad_magic";
    case Errc::corrupt_header: return "corrupt_header";
    case Errc::version_mismatch: return "version_mismatch";
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::truncated: return "truncated";
  }
  return "unknown";
}

class IoError : public std::runtime_error {
 public:
  IoError(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

using Magic = std::array<char, 8>;

inline constexpr Magic make_magic(const char (&s)[9]) {
  return {s[0], s[1], s[2], s[3], s[4], s[5], s[6], s[7]};
}

namespace detail {

inline std::uint64_t byteswap64(std::uint64_t v) {
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
  return r;
}

inline void put_u64(std::string& out, std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) v = byteswap64(v);
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

inline std::uint64_t get_u64(const char* p) {
  std::uint64_t v;
  std::memcpy(&v, p, 8);
  if constexpr (std::endian::native == std::endian::big) v = byteswap64(v);
  return v;
}

}  // namespace detail

/// Writes `bytes` to `path` through a temporary sibling and a rename, so a
/// reader never observes a partially written file.
inline void write_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError(Errc::open_failed, "cannot open " + tmp.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    os.flush();
    if (!os) throw IoError(Errc::open_failed, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_all(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(Errc::open_failed, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

/// Serializes header + payload into a single byte string.
inline std::string encode(const Magic& magic, json header, std::span<const double> payload) {
  header["payload_count"] = payload.size();
  const std::string text = header.dump();
  std::string out;
  out.reserve(16 + text.size() + payload.size() * 8);
  out.append(magic.data(), magic.size());
  detail::put_u64(out, text.size());
  out.append(text);
  const auto base = out.size();
  out.resize(base + payload.size() * 8);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out.data() + base, payload.data(), payload.size() * 8);
  } else {
    for (std::size_t i = 0; i < payload.size(); ++i) {
      std::uint64_t v;
      std::memcpy(&v, &payload[i], 8);
      v = detail::byteswap64(v);
      std::memcpy(out.data() + base + 8 * i, &v, 8);
    }
  }
  return out;
}

struct Decoded {
  json header;
  std::vector<double> payload;
};

inline Decoded decode(const Magic& magic, std::string_view bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), magic.data(), magic.size()) != 0)
    throw IoError(Errc::bad_magic, "expected tag " + std::string(magic.data(), magic.size()));
  const std::uint64_t header_len = detail::get_u64(bytes.data() + 8);
  if (header_len > bytes.size() - 16) throw IoError(Errc::corrupt_header, "header length exceeds file size");

  Decoded d;
  try {
    d.header = json::parse(bytes.substr(16, header_len));
  } catch (const json::exception& e) {
    throw IoError(Errc::corrupt_header, e.what());
  }
  if (!d.header.is_object() || !d.header.contains("payload_count") ||
      !d.header["payload_count"].is_number_unsigned())
    throw IoError(Errc::corrupt_header, "missing payload_count");

  const auto count = d.header["payload_count"].get<std::uint64_t>();
  const auto rest = bytes.size() - 16 - header_len;
  if (rest != count * 8)
    throw IoError(Errc::truncated, "payload holds " + std::to_string(rest) + " bytes, header declares " +
                                       std::to_string(count) + " float64 values");
  d.payload.resize(count);
  const char* p = bytes.data() + 16 + header_len;
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t v = detail::get_u64(p + 8 * i);
    std::memcpy(&d.payload[i], &v, 8);
  }
  return d;
}

/// Reads a required header field, mapping type errors to corrupt_header.
template <typename T>
T field(const json& header, const char* key) {
  if (!header.contains(key)) throw IoError(Errc::corrupt_header, std::string("missing field '") + key + "'");
  try {
    return header.at(key).get<T>();
  } catch (const json::exception& e) {
    throw IoError(Errc::corrupt_header, std::string("field '") + key + "': " + e.what());
  }
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xf];
  return s;
}

/// FNV-1a digest of a byte string, as 16 hex characters.
inline std::string content_hash(std::string_view bytes) { return hex64(fnv1a64(bytes)); }

}  // namespace sqcml::io
