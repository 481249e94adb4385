#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "nfb/tensor.h"

namespace nfb {

// Embedding blob header: 8-byte magic followed by a little-endian u32 version.
inline constexpr std::string_view kBlobMagic = "NFBRIDGE";
inline constexpr std::uint32_t kBlobVersion = 1;
inline constexpr std::size_t kBlobHeaderBytes = 12;

std::string ReadFile(const std::filesystem::path& path);
// Writes the whole buffer, replacing any existing file. Throws kIoError.
void WriteFile(const std::filesystem::path& path, std::string_view bytes);

// CRC-64/XZ (ECMA-182 polynomial, reflected, inverted).
std::uint64_t Crc64(std::string_view bytes);

// Little-endian append helpers.
void AppendU32(std::string& out, std::uint32_t value);
void AppendU64(std::string& out, std::uint64_t value);
void AppendF32(std::string& out, std::span<const float> values);

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  void Seek(std::size_t pos);

  // All readers throw kValidationError when the buffer runs out.
  std::uint32_t ReadU32();
  std::uint64_t ReadU64();
  std::string_view ReadBytes(std::size_t n);
  void ReadF32(std::span<float> out);

 private:
  void Require(std::size_t n) const;

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

// Header bytes for a fresh blob.
std::string BlobHeader();
// Checks magic and version of a blob; throws kValidationError / kVersionError.
void CheckBlobHeader(std::string_view bytes, const std::string& what);

// Standalone embedding file: blob header followed by rows * dim floats. Used
// for ad-hoc query inputs and exported predictions.
void WriteEmbeddingFile(const std::filesystem::path& path, const Matrix& rows);
// Payload length must be a positive multiple of dim * 4.
Matrix ReadEmbeddingFile(const std::filesystem::path& path, std::size_t dim);

}  // namespace nfb
