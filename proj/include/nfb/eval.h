#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "nfb/dataset.h"
#include "nfb/gallery.h"
#include "nfb/mapper.h"
#include "nfb/report.h"

namespace nfb {

struct EvalOptions {
  // Seeds the per-record view choice; shared by every method compared in one
  // invocation so they see the same query images.
  std::uint64_t seed = 0;
  // Neighbors kept per query record.
  std::size_t top_k = 10;
  // CSV row label; a default is derived from the checkpoint when empty.
  std::string method;
};

// Predicts each record's class as the 1-NN anchor of its mapped NeRF
// embedding. Throws kMissingAnchor, kConfigMismatch (not nerf2clip),
// kEmptyInput.
EvalReport EvalZeroShot(std::span<const ObjectRecord> records, const Checkpoint& nerf2clip,
                        const Gallery& anchors, const EvalOptions& options = {});

// Mean of n selected view embeddings queried against the anchors. Only
// views whose source is in `sources` are eligible. Throws
// kInsufficientViews, kMissingAnchor, kEmptyInput.
EvalReport EvalClipBaselineZeroShot(std::span<const ObjectRecord> records, const Gallery& anchors,
                                    std::size_t n_views, const EvalOptions& options = {},
                                    ViewSourceSet sources = {ViewSource::kRendered});

struct RetrievalOptions : EvalOptions {
  std::size_t n_query_views = 1;
  ViewSourceSet query_sources{ViewSource::kGroundTruth};
  // Drops the queried object's own NeRF from its result list.
  bool exclude_self = true;
};

// Image queries (mean of mapped views) against the NeRF gallery of
// `gallery_records`. When `query_records` is empty the gallery records are
// also the queries. Throws kInsufficientViews, kConfigMismatch, kEmptyInput.
EvalReport EvalRetrievalImages(std::span<const ObjectRecord> gallery_records,
                               const Checkpoint& clip2nerf, const RetrievalOptions& options,
                               std::span<const ObjectRecord> query_records = {});

// Caption queries against the NeRF gallery of the same records. Throws
// kMissingCaption naming the record, kConfigMismatch, kEmptyInput.
EvalReport EvalRetrievalText(std::span<const ObjectRecord> records, const Checkpoint& clip2nerf,
                             const EvalOptions& options = {});

}  // namespace nfb
