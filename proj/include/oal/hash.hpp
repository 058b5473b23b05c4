#pragma once

// Content hashing and canonical number formatting.
//
// Hashes are FNV-1a 64 run twice with distinct offset bases and rendered as
// a 32-hex-digit digest. This is not cryptographic; it only has to make
// accidental collisions vanishingly unlikely for cache entry names and run
// manifests. Cache lookups additionally compare the full stored key, so a
// collision degrades to a miss, never to a wrong value.

#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace oal {

class Fnv1a64 {
 public:
  explicit Fnv1a64(uint64_t basis = 0xcbf29ce484222325ULL) : hash_(basis) {}

  void update(const void* data, size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < size; ++i) {
      hash_ ^= bytes[i];
      hash_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view text) { update(text.data(), text.size()); }

  template <typename T>
  void update_pod(const T& value) {
    static_assert(std::is_trivially_copyable_v<T>);
    update(&value, sizeof(T));
  }

  uint64_t digest() const { return hash_; }

 private:
  uint64_t hash_;
};

inline std::string hex64(uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[value & 0xF];
    value >>= 4;
  }
  return out;
}

// 128-bit hex digest of a byte string.
inline std::string content_hash(std::string_view bytes) {
  Fnv1a64 a(0xcbf29ce484222325ULL);
  Fnv1a64 b(0x6c62272e07bb0142ULL);
  a.update(bytes);
  b.update(bytes);
  return hex64(a.digest()) + hex64(b.digest());
}

inline std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for hashing: " + path.string());
  Fnv1a64 a(0xcbf29ce484222325ULL);
  Fnv1a64 b(0x6c62272e07bb0142ULL);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const auto got = static_cast<size_t>(in.gcount());
    a.update(buf, got);
    b.update(buf, got);
  }
  return hex64(a.digest()) + hex64(b.digest());
}

// Shortest round-trip decimal rendering; the one float format used in every
// emitted artifact so reruns stay byte-identical.
inline std::string fmt_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

}  // namespace oal
