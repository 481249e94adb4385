#include "nfb/binary_io.h"

#include <bit>
#include <boost/crc.hpp>
#include <cstring>
#include <fstream>
#include <iterator>

#include "nfb/error.h"

namespace nfb {

namespace {

template <typename U>
U ToLittle(U value) {
  if constexpr (std::endian::native == std::endian::big) {
    if constexpr (sizeof(U) == 4) return __builtin_bswap32(value);
    if constexpr (sizeof(U) == 8) return __builtin_bswap64(value);
  }
  return value;
}

}  // namespace

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIoError, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) Fail(ErrorKind::kIoError, "read failed for " + path.string());
  return bytes;
}

void WriteFile(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) Fail(ErrorKind::kIoError, "cannot create " + path.parent_path().string());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorKind::kIoError, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) Fail(ErrorKind::kIoError, "write failed for " + path.string());
}

std::uint64_t Crc64(std::string_view bytes) {
  boost::crc_optimal<64, 0x42F0E1EBA9EA3693ULL, ~0ULL, ~0ULL, true, true> crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

void AppendU32(std::string& out, std::uint32_t value) {
  value = ToLittle(value);
  out.append(reinterpret_cast<const char*>(&value), sizeof value);
}

void AppendU64(std::string& out, std::uint64_t value) {
  value = ToLittle(value);
  out.append(reinterpret_cast<const char*>(&value), sizeof value);
}

void AppendF32(std::string& out, std::span<const float> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * 4);
  char* dst = out.data() + start;
  for (float f : values) {
    const auto bits = ToLittle(std::bit_cast<std::uint32_t>(f));
    std::memcpy(dst, &bits, 4);
    dst += 4;
  }
}

void ByteReader::Require(std::size_t n) const {
  if (n > remaining()) {
    Fail(ErrorKind::kValidationError, "unexpected end of data at byte " + std::to_string(pos_) +
                                          " (need " + std::to_string(n) + ")");
  }
}

void ByteReader::Seek(std::size_t pos) {
  if (pos > bytes_.size()) Fail(ErrorKind::kValidationError, "seek past end of data");
  pos_ = pos;
}

std::uint32_t ByteReader::ReadU32() {
  Require(4);
  std::uint32_t v;
  std::memcpy(&v, bytes_.data() + pos_, 4);
  pos_ += 4;
  return ToLittle(v);
}

std::uint64_t ByteReader::ReadU64() {
  Require(8);
  std::uint64_t v;
  std::memcpy(&v, bytes_.data() + pos_, 8);
  pos_ += 8;
  return ToLittle(v);
}

std::string_view ByteReader::ReadBytes(std::size_t n) {
  Require(n);
  auto out = bytes_.substr(pos_, n);
  pos_ += n;
  return out;
}

void ByteReader::ReadF32(std::span<float> out) {
  Require(out.size() * 4);
  const char* src = bytes_.data() + pos_;
  for (float& f : out) {
    std::uint32_t bits;
    std::memcpy(&bits, src, 4);
    f = std::bit_cast<float>(ToLittle(bits));
    src += 4;
  }
  pos_ += out.size() * 4;
}

std::string BlobHeader() {
  std::string out(kBlobMagic);
  AppendU32(out, kBlobVersion);
  return out;
}

void CheckBlobHeader(std::string_view bytes, const std::string& what) {
  if (bytes.size() < kBlobHeaderBytes || bytes.substr(0, kBlobMagic.size()) != kBlobMagic) {
    Fail(ErrorKind::kValidationError, what + ": missing NFBRIDGE blob header");
  }
  ByteReader reader(bytes);
  reader.Seek(kBlobMagic.size());
  const std::uint32_t version = reader.ReadU32();
  if (version != kBlobVersion) {
    Fail(ErrorKind::kVersionError,
         what + ": unsupported blob version " + std::to_string(version));
  }
}

void WriteEmbeddingFile(const std::filesystem::path& path, const Matrix& rows) {
  std::string bytes = BlobHeader();
  AppendF32(bytes, rows.values());
  WriteFile(path, bytes);
}

Matrix ReadEmbeddingFile(const std::filesystem::path& path, std::size_t dim) {
  const std::string bytes = ReadFile(path);
  CheckBlobHeader(bytes, path.string());
  const std::size_t payload = bytes.size() - kBlobHeaderBytes;
  if (dim == 0 || payload == 0 || payload % (dim * 4) != 0) {
    Fail(ErrorKind::kValidationError, path.string() + ": payload of " + std::to_string(payload) +
                                          " bytes is not a whole number of " +
                                          std::to_string(dim) + "-d float rows");
  }
  Matrix out(payload / (dim * 4), dim);
  ByteReader reader(bytes);
  reader.Seek(kBlobHeaderBytes);
  reader.ReadF32(out.values());
  if (!AllFinite<float>(out.values())) {
    Fail(ErrorKind::kValidationError, path.string() + ": non-finite value in embedding file");
  }
  return out;
}

}  // namespace nfb
