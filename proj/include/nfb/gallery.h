#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nfb/dataset.h"
#include "nfb/mapper.h"
#include "nfb/tensor.h"

namespace nfb {

struct GalleryEntry {
  std::string id;
  std::string label;
  Vector embedding;
};

struct Neighbor {
  std::string id;
  std::string label;
  double score = 0.0;      // cosine similarity
  std::size_t index = 0;   // insertion index in the gallery

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Ranked best-first; ties broken by ascending insertion index.
using QueryResult = std::vector<Neighbor>;

// Immutable search structure: unit-normalized rows in insertion order, with
// the original norms kept alongside.
class Gallery {
 public:
  Gallery() = default;

  // Throws kDegenerateVector (naming the id), kDuplicateId, kDimensionMismatch.
  static Gallery Build(std::span<const GalleryEntry> entries);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return rows_.cols(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const Matrix& rows() const { return rows_; }
  const std::vector<float>& norms() const { return norms_; }
  std::optional<std::size_t> IndexOf(std::string_view id) const;

  // Cosine score of every row against the query, in insertion order.
  std::vector<double> Scores(std::span<const float> query) const;

  void Export(const std::filesystem::path& dir) const;
  static Gallery Import(const std::filesystem::path& dir);

 private:
  std::vector<std::string> ids_;
  std::vector<std::string> labels_;
  Matrix rows_;
  std::vector<float> norms_;
  std::unordered_map<std::string, std::size_t> index_;
};

Gallery BuildGallery(std::span<const GalleryEntry> entries);

// Exact top-k by cosine similarity. Returns min(k, eligible) neighbors; the
// entry with id == exclude_id (if any) is skipped. Throws kOutOfRange for
// k == 0, kDimensionMismatch, kDegenerateVector.
QueryResult TopK(const Gallery& gallery, std::span<const float> query, std::size_t k,
                 std::optional<std::string_view> exclude_id = std::nullopt);
inline QueryResult TopK(const Gallery& gallery, const Vector& query, std::size_t k,
                        std::optional<std::string_view> exclude_id = std::nullopt) {
  return TopK(gallery, query.values(), k, exclude_id);
}

// Maps each view through the clip2nerf checkpoint, averages the predictions
// (no renormalization) and searches with the mean.
QueryResult MultiViewQuery(const Checkpoint& checkpoint, std::span<const Vector> views,
                           const Gallery& gallery, std::size_t k,
                           std::optional<std::string_view> exclude_id = std::nullopt);
// The averaged prediction used by MultiViewQuery.
Vector MeanPrediction(const Checkpoint& checkpoint, std::span<const Vector> views);

// One entry per class; id and label are both the class name. Insertion
// order follows the anchor order, which decides ties between equal anchors.
Gallery LabelGalleryFromAnchors(std::span<const ClassAnchor> anchors);

// NeRF-embedding gallery over the given records (id, class label, nerf).
Gallery NerfGallery(std::span<const ObjectRecord> records);

inline constexpr std::string_view kGalleryManifestName = "gallery.json";
inline constexpr std::string_view kGalleryBlobName = "gallery.bin";

}  // namespace nfb
