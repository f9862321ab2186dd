#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cno {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::uint32_t crc32(std::span<const std::uint8_t> bytes);
/// Checksum of a sealed file: CRC32 of everything before the trailing CRC. A CRC over the
/// whole sealed file would be the same constant for every intact file.
std::uint32_t sealed_crc(std::span<const std::uint8_t> bytes);

/// Writes bytes via a temporary file and rename, creating parent directories.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
/// Throws DataError when the file cannot be opened.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Appends little-endian primitives to an in-memory buffer.
class BinaryWriter {
 public:
  void magic(std::string_view m) { raw(m.data(), m.size()); }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void f64(double v) { raw(&v, 8); }
  void f64s(std::span<const double> v) { raw(v.data(), v.size() * 8); }
  void string(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }

  const std::vector<std::uint8_t>& bytes() const { return buf_; }
  /// Appends the CRC32 of everything written so far.
  void seal() { u32(crc32(buf_)); }
  void write_file(const std::filesystem::path& path) const { write_file_atomic(path, buf_); }

 private:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader over a sealed buffer. Throws TruncatedFileError on overrun.
class BinaryReader {
 public:
  explicit BinaryReader(std::vector<std::uint8_t> bytes, std::string what);
  static BinaryReader from_file(const std::filesystem::path& path, std::string what);

  /// Throws FormatVersionError when the magic bytes differ.
  void expect_magic(std::string_view m);
  /// Throws ChecksumError when the trailing CRC32 does not match. Call after parsing, so
  /// that short files surface as TruncatedFileError first.
  void verify_crc() const;
  /// Throws TruncatedFileError unless at least n payload bytes remain.
  void require(std::size_t n) const;

  std::uint8_t u8();
  std::uint32_t u32();
  double f64();
  void f64s(std::span<double> out);
  std::string string();

  std::size_t remaining() const { return pos_ >= end_ ? 0 : end_ - pos_; }
  /// Throws DataError when unread payload bytes remain before the CRC trailer.
  void expect_end() const;

 private:
  void take(void* dst, std::size_t n);
  std::vector<std::uint8_t> buf_;
  std::string what_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;
};

}  // namespace cno
