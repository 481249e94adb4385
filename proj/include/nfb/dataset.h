#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nfb/tensor.h"

namespace nfb {

enum class ViewSource : std::uint8_t { kGroundTruth = 0, kRendered = 1, kGenerated = 2 };
enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };

// Manifest spellings: "gt", "rendered", "generated" and "train", "val", "test".
std::string_view ToString(ViewSource source);
std::string_view ToString(Split split);
ViewSource ParseViewSource(std::string_view text);
Split ParseSplit(std::string_view text);

class ViewSourceSet {
 public:
  constexpr ViewSourceSet() = default;
  constexpr ViewSourceSet(std::initializer_list<ViewSource> sources) {
    for (auto s : sources) Insert(s);
  }

  static constexpr ViewSourceSet All() {
    return {ViewSource::kGroundTruth, ViewSource::kRendered, ViewSource::kGenerated};
  }
  // GroundTruth and Rendered: everything that came from the synthetic renders.
  static constexpr ViewSourceSet Synthetic() {
    return {ViewSource::kGroundTruth, ViewSource::kRendered};
  }

  constexpr void Insert(ViewSource s) { bits_ |= Bit(s); }
  constexpr bool Contains(ViewSource s) const { return (bits_ & Bit(s)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }

  // Comma-separated, e.g. "gt,rendered".
  std::string ToString() const;
  static ViewSourceSet Parse(std::string_view text);

  friend constexpr bool operator==(ViewSourceSet, ViewSourceSet) = default;

 private:
  static constexpr std::uint8_t Bit(ViewSource s) {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(s));
  }
  std::uint8_t bits_ = 0;
};

struct ViewEmbedding {
  Vector embedding;
  ViewSource source = ViewSource::kGroundTruth;

  friend bool operator==(const ViewEmbedding&, const ViewEmbedding&) = default;
};

struct ObjectRecord {
  std::string id;
  std::string class_label;
  // Empty only in query-only datasets (manifest nerf_dim == 0).
  Vector nerf_embedding;
  std::vector<ViewEmbedding> views;
  std::optional<Vector> caption_embedding;
  Split split = Split::kTrain;

  friend bool operator==(const ObjectRecord&, const ObjectRecord&) = default;
};

// Text-side embedding of one class name, e.g. "A 3D model of <class>".
struct ClassAnchor {
  std::string class_label;
  Vector embedding;

  friend bool operator==(const ClassAnchor&, const ClassAnchor&) = default;
};

struct Dataset {
  // nerf_dim == 0 marks a query-only dataset (image/caption embeddings with
  // labels, no NeRF side), e.g. real-photo exports used for adaptation runs.
  std::size_t nerf_dim = 1024;
  std::size_t clip_dim = 512;
  std::vector<std::string> classes;
  std::vector<ObjectRecord> records;
  std::vector<ClassAnchor> anchors;
  // Free-form provenance, e.g. the generator spec. Stored in the manifest.
  nlohmann::ordered_json provenance = nlohmann::ordered_json::object();

  // Throws kValidationError naming the record id and field at fault.
  void Validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline constexpr std::uint32_t kManifestVersion = 1;
inline constexpr std::string_view kManifestFileName = "manifest.json";
inline constexpr std::string_view kBlobFileName = "embeddings.bin";

// Throws kParseError, kValidationError, kVersionError, kIoError.
Dataset LoadDataset(const std::filesystem::path& manifest_path,
                    const std::filesystem::path& blob_path);
// Same bytes for the same dataset. Throws kIoError, kValidationError.
void SaveDataset(const Dataset& dataset, const std::filesystem::path& manifest_path,
                 const std::filesystem::path& blob_path);

// <dir>/manifest.json + <dir>/embeddings.bin.
Dataset LoadDatasetDir(const std::filesystem::path& dir);
void SaveDatasetDir(const Dataset& dataset, const std::filesystem::path& dir);

// In-memory encoding used by SaveDataset; exposed for byte-level tests.
struct EncodedDataset {
  std::string manifest;
  std::string blob;
};
EncodedDataset EncodeDataset(const Dataset& dataset, std::string_view blob_name);
Dataset DecodeDataset(std::string_view manifest, std::string_view blob);

std::vector<ObjectRecord> RecordsInSplit(const Dataset& dataset, Split split);

struct SynthSpec {
  std::size_t num_classes = 10;
  std::size_t objects_per_class = 20;
  // Ground-truth views per object.
  std::size_t views_per_object = 4;
  std::size_t rendered_per_object = 0;
  std::size_t generated_per_object = 0;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;
  std::size_t nerf_dim = 1024;
  std::size_t clip_dim = 512;

  // Throws kValidationError.
  void Validate() const;
  nlohmann::ordered_json ToJson() const;
};

// Seeded stand-in for exported embeddings. Draw order (one xoshiro256**
// stream seeded with spec.seed, normals via Xoshiro256::Normal):
//   per class: clip_dim normals -> unit class anchor, nerf_dim normals -> unit
//   NeRF anchor;
//   per class, per object: nerf_dim noise, then each ground-truth, rendered
//   and generated view (clip_dim noise each), then the caption;
//   finally a Fisher-Yates permutation of record indices assigning the first
//   floor(0.8 N) to train, the next floor(0.1 N) to val, the rest to test.
// Every noise draw is scaled by noise_sigma and added to the relevant anchor.
Dataset GenerateSynthetic(const SynthSpec& spec);

// n distinct views among those whose source is in `filter`, returned in
// stored order. The choice is the first n entries of a permutation seeded by
// (seed, record id), so the selection for n is a subset of the one for n + m.
// Throws kInsufficientViews.
std::vector<std::size_t> SelectViewIndices(const ObjectRecord& record, std::size_t n,
                                           ViewSourceSet filter, std::uint64_t seed);
std::vector<Vector> SelectViews(const ObjectRecord& record, std::size_t n, ViewSourceSet filter,
                                std::uint64_t seed);

// Replaces each record's views by n_synthetic GroundTruth/Rendered views
// followed by n_generated Generated views (source tags kept). Throws
// kInsufficientViews naming the record.
std::vector<ObjectRecord> ComposeSyn2Real(const std::vector<ObjectRecord>& records,
                                          std::size_t n_synthetic, std::size_t n_generated,
                                          std::uint64_t seed);

}  // namespace nfb
