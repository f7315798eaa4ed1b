#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace opinet {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename U>
U to_little_endian(U value) {
  if constexpr (std::endian::native == std::endian::big) {
    if constexpr (sizeof(U) == 4) return __builtin_bswap32(value);
    else return __builtin_bswap64(value);
  }
  return value;
}

inline void append_u32(std::string& out, std::uint32_t v) {
  v = to_little_endian(v);
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void append_u64(std::string& out, std::uint64_t v) {
  v = to_little_endian(v);
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void append_f64(std::string& out, double x) { append_u64(out, std::bit_cast<std::uint64_t>(x)); }
inline void append_f32(std::string& out, float x) { append_u32(out, std::bit_cast<std::uint32_t>(x)); }

/// Bounds-checked little-endian reader over an in-memory file; every read
/// failure reports the byte offset.
class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  std::string_view take(std::size_t n);
  std::uint32_t u32();
  std::uint64_t u64();
  double f64() { return std::bit_cast<double>(u64()); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::uint32_t u32_big_endian();
  std::uint8_t u8();

  std::size_t offset() const noexcept { return offset_; }
  std::size_t remaining() const noexcept { return bytes_.size() - offset_; }
  [[noreturn]] void fail(const std::string& what) const;

 private:
  std::string_view bytes_;
  std::string source_;
  std::size_t offset_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

/// 64-bit FNV-1a; used for config hashes and artifact checksums.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

}  // namespace opinet
