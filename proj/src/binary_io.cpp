#include "cno/binary_io.hpp"

#include <zlib.h>

#include <fstream>
#include <iterator>

#include "cno/error.hpp"

namespace cno {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - offset, 1u << 30));
    crc = ::crc32(crc, bytes.data() + offset, chunk);
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::uint32_t sealed_crc(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw TruncatedFileError("file too short for checksum");
  return crc32(bytes.first(bytes.size() - 4));
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

BinaryReader::BinaryReader(std::vector<std::uint8_t> bytes, std::string what)
    : buf_(std::move(bytes)), what_(std::move(what)), end_(buf_.size() >= 4 ? buf_.size() - 4 : 0) {}

BinaryReader BinaryReader::from_file(const std::filesystem::path& path, std::string what) {
  return BinaryReader(read_file(path), std::move(what));
}

void BinaryReader::expect_magic(std::string_view m) {
  if (buf_.size() < m.size() || std::memcmp(buf_.data(), m.data(), m.size()) != 0) {
    throw FormatVersionError(what_ + ": bad magic, expected \"" + std::string(m) + "\"");
  }
  pos_ = m.size();
}

void BinaryReader::verify_crc() const {
  if (buf_.size() < 4) throw TruncatedFileError(what_ + ": file too short for checksum");
  std::uint32_t stored;
  std::memcpy(&stored, buf_.data() + buf_.size() - 4, 4);
  if (stored != crc32(std::span(buf_.data(), buf_.size() - 4))) throw ChecksumError(what_ + ": CRC32 mismatch");
}

void BinaryReader::require(std::size_t n) const {
  if (n > remaining()) throw TruncatedFileError(what_ + ": truncated payload");
}

void BinaryReader::take(void* dst, std::size_t n) {
  require(n);
  std::memcpy(dst, buf_.data() + pos_, n);
  pos_ += n;
}

std::uint8_t BinaryReader::u8() {
  std::uint8_t v;
  take(&v, 1);
  return v;
}

std::uint32_t BinaryReader::u32() {
  std::uint32_t v;
  take(&v, 4);
  return v;
}

double BinaryReader::f64() {
  double v;
  take(&v, 8);
  return v;
}

void BinaryReader::f64s(std::span<double> out) { take(out.data(), out.size() * 8); }

std::string BinaryReader::string() {
  const auto n = u32();
  require(n);
  std::string s(n, '\0');
  take(s.data(), n);
  return s;
}

void BinaryReader::expect_end() const {
  if (pos_ != end_) throw DataError(what_ + ": trailing bytes after payload");
}

}  // namespace cno
