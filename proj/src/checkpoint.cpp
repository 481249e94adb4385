#include <string>

#include "nfb/binary_io.h"
#include "nfb/error.h"
#include "nfb/mapper.h"

namespace nfb {

using nlohmann::ordered_json;

namespace {

void AppendParams(std::string& out, const MlpParams& p) {
  for (std::size_t k = 0; k < p.num_layers(); ++k) {
    AppendF32(out, p.weights[k].values());
    AppendF32(out, p.biases[k].values());
  }
}

MlpParams ReadParams(ByteReader& reader, const std::vector<std::size_t>& dims) {
  auto p = MlpParams::Zeros(dims);
  for (std::size_t k = 0; k < p.num_layers(); ++k) {
    reader.ReadF32(p.weights[k].values());
    reader.ReadF32(p.biases[k].values());
    if (!AllFinite<float>(p.weights[k].values()) || !AllFinite<float>(p.biases[k].values())) {
      Fail(ErrorKind::kCorruptCheckpoint, "non-finite parameters in layer " + std::to_string(k));
    }
  }
  return p;
}

constexpr std::size_t kPrefixBytes = 8 + 4 + 8;

}  // namespace

std::string EncodeCheckpoint(const Checkpoint& cp) {
  cp.params.Validate();
  cp.final_params.Validate();
  if (cp.params.layer_dims != cp.config.LayerDims() ||
      cp.final_params.layer_dims != cp.config.LayerDims()) {
    Fail(ErrorKind::kDimensionMismatch, "checkpoint parameters do not match the config direction");
  }
  const ordered_json header = {{"format", "nfbridge-checkpoint"},
                               {"config", cp.config.ToJson()},
                               {"metadata", cp.metadata.ToJson()},
                               {"layer_dims", cp.params.layer_dims},
                               {"param_blocks", {"best", "final"}}};
  const std::string json = header.dump();

  std::string out(kCheckpointMagic);
  AppendU32(out, kCheckpointVersion);
  AppendU64(out, json.size());
  out += json;
  AppendParams(out, cp.params);
  AppendParams(out, cp.final_params);
  AppendU64(out, Crc64(out));
  return out;
}

namespace {

ordered_json DecodeHeader(std::string_view bytes, ByteReader& reader) {
  if (bytes.size() < kPrefixBytes + 8 || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    Fail(ErrorKind::kCorruptCheckpoint, "not an NFBCKPT checkpoint");
  }
  reader.Seek(kCheckpointMagic.size());
  const std::uint32_t version = reader.ReadU32();
  if (version != kCheckpointVersion) {
    Fail(ErrorKind::kVersionError, "unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t json_len = reader.ReadU64();
  if (json_len > reader.remaining()) Fail(ErrorKind::kCorruptCheckpoint, "header length out of range");
  try {
    return ordered_json::parse(reader.ReadBytes(json_len));
  } catch (const nlohmann::json::parse_error& e) {
    Fail(ErrorKind::kCorruptCheckpoint, std::string("header is not valid JSON: ") + e.what());
  }
}

}  // namespace

Checkpoint DecodeCheckpoint(std::string_view bytes) {
  ByteReader reader(bytes);
  ordered_json header;
  try {
    // Version check happens before the checksum so a newer file reports the
    // version rather than a checksum mismatch.
    header = DecodeHeader(bytes, reader);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kVersionError) throw;
    if (e.kind() == ErrorKind::kCorruptCheckpoint) throw;
    Fail(ErrorKind::kCorruptCheckpoint, e.what());
  }
  ByteReader tail(bytes);
  tail.Seek(bytes.size() - 8);
  const std::uint64_t stored = tail.ReadU64();
  if (stored != Crc64(bytes.substr(0, bytes.size() - 8))) {
    Fail(ErrorKind::kCorruptCheckpoint, "checksum mismatch");
  }

  Checkpoint cp;
  try {
    cp.config = MapperConfig::FromJson(header.at("config"));
    cp.metadata = TrainingMetadata::FromJson(header.at("metadata"));
    const auto dims = header.at("layer_dims").get<std::vector<std::size_t>>();
    if (dims != cp.config.LayerDims()) {
      Fail(ErrorKind::kCorruptCheckpoint, "layer dims do not match the config direction");
    }
    cp.params = ReadParams(reader, dims);
    cp.final_params = ReadParams(reader, dims);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kCorruptCheckpoint, std::string("malformed header: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kCorruptCheckpoint) throw;
    Fail(ErrorKind::kCorruptCheckpoint, e.what());
  }
  if (reader.remaining() != 8) Fail(ErrorKind::kCorruptCheckpoint, "trailing bytes after parameters");
  return cp;
}

void SaveCheckpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  WriteFile(path, EncodeCheckpoint(checkpoint));
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  return DecodeCheckpoint(ReadFile(path));
}

ordered_json ReadCheckpointHeader(const std::filesystem::path& path) {
  const std::string bytes = ReadFile(path);
  ByteReader reader(bytes);
  return DecodeHeader(bytes, reader);
}

}  // namespace nfb
