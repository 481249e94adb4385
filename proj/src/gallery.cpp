#include "nfb/gallery.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "nfb/binary_io.h"
#include "nfb/error.h"

namespace nfb {

using nlohmann::ordered_json;

Gallery Gallery::Build(std::span<const GalleryEntry> entries) {
  Gallery g;
  if (entries.empty()) return g;
  const std::size_t dim = entries.front().embedding.dim();
  if (dim == 0) Fail(ErrorKind::kDimensionMismatch, "gallery entries must have positive dim");
  g.rows_ = Matrix(entries.size(), dim);
  for (std::size_t r = 0; r < entries.size(); ++r) {
    const auto& e = entries[r];
    if (e.embedding.dim() != dim) {
      Fail(ErrorKind::kDimensionMismatch, "entry '" + e.id + "' is " +
                                              std::to_string(e.embedding.dim()) + "-d, gallery is " +
                                              std::to_string(dim) + "-d");
    }
    if (!g.index_.emplace(e.id, r).second) {
      Fail(ErrorKind::kDuplicateId, "gallery id '" + e.id + "' appears twice");
    }
    const double norm = Norm<float>(e.embedding.values());
    if (!(norm > kNormEpsilon) || !std::isfinite(norm)) {
      Fail(ErrorKind::kDegenerateVector, "gallery entry '" + e.id + "' has no usable direction");
    }
    auto dst = g.rows_.row(r);
    for (std::size_t i = 0; i < dim; ++i) {
      dst[i] = static_cast<float>(static_cast<double>(e.embedding[i]) / norm);
    }
    g.ids_.push_back(e.id);
    g.labels_.push_back(e.label);
    g.norms_.push_back(static_cast<float>(norm));
  }
  return g;
}

Gallery BuildGallery(std::span<const GalleryEntry> entries) { return Gallery::Build(entries); }

std::optional<std::size_t> Gallery::IndexOf(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<double> Gallery::Scores(std::span<const float> query) const {
  if (query.size() != dim()) {
    Fail(ErrorKind::kDimensionMismatch, "query is " + std::to_string(query.size()) +
                                            "-d, gallery is " + std::to_string(dim()) + "-d");
  }
  const double qnorm = Norm<float>(query);
  if (!(qnorm > kNormEpsilon)) Fail(ErrorKind::kDegenerateVector, "query has zero norm");
  std::vector<double> scores(size());
  for (std::size_t r = 0; r < size(); ++r) {
    scores[r] = Dot<float>(rows_.row(r), query) / qnorm;
  }
  return scores;
}

QueryResult TopK(const Gallery& gallery, std::span<const float> query, std::size_t k,
                 std::optional<std::string_view> exclude_id) {
  if (k == 0) Fail(ErrorKind::kOutOfRange, "k must be >= 1");
  const auto scores = gallery.Scores(query);
  std::optional<std::size_t> skip;
  if (exclude_id) skip = gallery.IndexOf(*exclude_id);

  std::vector<std::size_t> order;
  order.reserve(gallery.size());
  for (std::size_t r = 0; r < gallery.size(); ++r) {
    if (r != skip) order.push_back(r);
  }
  const std::size_t take = std::min(k, order.size());
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    better);

  QueryResult out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t r = order[i];
    out.push_back({gallery.ids()[r], gallery.labels()[r], scores[r], r});
  }
  return out;
}

Vector MeanPrediction(const Checkpoint& checkpoint, std::span<const Vector> views) {
  if (views.empty()) Fail(ErrorKind::kEmptyInput, "multi-view query without views");
  if (checkpoint.config.direction != MapperDirection::kClip2Nerf) {
    Fail(ErrorKind::kConfigMismatch, "multi-view queries need a clip2nerf checkpoint");
  }
  const Matrix predictions = InferBatch(checkpoint, StackRows<float>(views));
  return MeanRows(predictions);
}

QueryResult MultiViewQuery(const Checkpoint& checkpoint, std::span<const Vector> views,
                           const Gallery& gallery, std::size_t k,
                           std::optional<std::string_view> exclude_id) {
  return TopK(gallery, MeanPrediction(checkpoint, views), k, exclude_id);
}

Gallery LabelGalleryFromAnchors(std::span<const ClassAnchor> anchors) {
  if (anchors.empty()) Fail(ErrorKind::kEmptyInput, "no class anchors");
  std::vector<GalleryEntry> entries;
  entries.reserve(anchors.size());
  for (const auto& a : anchors) entries.push_back({a.class_label, a.class_label, a.embedding});
  return Gallery::Build(entries);
}

Gallery NerfGallery(std::span<const ObjectRecord> records) {
  std::vector<GalleryEntry> entries;
  entries.reserve(records.size());
  for (const auto& r : records) entries.push_back({r.id, r.class_label, r.nerf_embedding});
  return Gallery::Build(entries);
}

void Gallery::Export(const std::filesystem::path& dir) const {
  std::string blob = BlobHeader();
  ordered_json entries = ordered_json::array();
  for (std::size_t r = 0; r < size(); ++r) {
    entries.push_back({{"id", ids_[r]}, {"label", labels_[r]}, {"offset", blob.size()}});
    AppendF32(blob, rows_.row(r));
  }
  const std::size_t norms_offset = blob.size();
  AppendF32(blob, norms_);
  const ordered_json manifest = {{"format", "nfbridge-gallery"},
                                 {"format_version", kManifestVersion},
                                 {"blob", kGalleryBlobName},
                                 {"blob_bytes", blob.size()},
                                 {"dim", dim()},
                                 {"norms_offset", norms_offset},
                                 {"entries", std::move(entries)}};
  WriteFile(dir / kGalleryBlobName, blob);
  WriteFile(dir / kGalleryManifestName, manifest.dump(1) + "\n");
}

Gallery Gallery::Import(const std::filesystem::path& dir) {
  const std::string manifest_text = ReadFile(dir / kGalleryManifestName);
  const std::string blob = ReadFile(dir / kGalleryBlobName);
  CheckBlobHeader(blob, "gallery blob");
  ordered_json m;
  try {
    m = ordered_json::parse(manifest_text);
  } catch (const nlohmann::json::parse_error& e) {
    Fail(ErrorKind::kParseError, std::string("gallery manifest: ") + e.what());
  }
  Gallery g;
  try {
    if (m.at("format_version").get<std::uint32_t>() != kManifestVersion) {
      Fail(ErrorKind::kVersionError, "unsupported gallery manifest version");
    }
    if (m.at("blob_bytes").get<std::size_t>() != blob.size()) {
      Fail(ErrorKind::kValidationError, "gallery blob size does not match its manifest");
    }
    const auto dim = m.at("dim").get<std::size_t>();
    const auto& entries = m.at("entries");
    g.rows_ = Matrix(entries.size(), dim);
    ByteReader reader(blob);
    for (std::size_t r = 0; r < entries.size(); ++r) {
      const auto id = entries[r].at("id").get<std::string>();
      reader.Seek(entries[r].at("offset").get<std::size_t>());
      reader.ReadF32(g.rows_.row(r));
      if (!g.index_.emplace(id, r).second) {
        Fail(ErrorKind::kDuplicateId, "gallery id '" + id + "' appears twice");
      }
      g.ids_.push_back(id);
      g.labels_.push_back(entries[r].at("label").get<std::string>());
    }
    g.norms_.resize(entries.size());
    reader.Seek(m.at("norms_offset").get<std::size_t>());
    reader.ReadF32(g.norms_);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kValidationError, std::string("gallery manifest: ") + e.what());
  }
  if (!AllFinite<float>(g.rows_.values()) || !AllFinite<float>(g.norms_)) {
    Fail(ErrorKind::kValidationError, "gallery contains non-finite values");
  }
  for (std::size_t r = 0; r < g.size(); ++r) {
    if (std::abs(Norm<float>(g.rows_.row(r)) - 1.0) > 1e-5) {
      Fail(ErrorKind::kValidationError, "gallery row '" + g.ids_[r] + "' is not unit-norm");
    }
  }
  return g;
}

}  // namespace nfb
