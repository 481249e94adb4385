#include "nfb/eval.h"

#include <chrono>

#include "nfb/error.h"

namespace nfb {

using nlohmann::ordered_json;

namespace {

using Clock = std::chrono::steady_clock;

double Ms(Clock::duration d) { return std::chrono::duration<double, std::milli>(d).count(); }

void RequireClip2Nerf(const Checkpoint& cp) {
  if (cp.config.direction != MapperDirection::kClip2Nerf) {
    Fail(ErrorKind::kConfigMismatch, "retrieval needs a clip2nerf checkpoint");
  }
}

void RequireRecords(std::span<const ObjectRecord> records, std::string_view what) {
  if (records.empty()) Fail(ErrorKind::kEmptyInput, std::string(what) + ": no records to evaluate");
}

void RequireAnchors(std::span<const ObjectRecord> records, const Gallery& anchors) {
  for (const auto& r : records) {
    if (!anchors.IndexOf(r.class_label)) {
      Fail(ErrorKind::kMissingAnchor,
           "no anchor for class '" + r.class_label + "' (record '" + r.id + "')");
    }
  }
}

std::vector<RankedEntry> ToRanked(const QueryResult& result) {
  std::vector<RankedEntry> out;
  out.reserve(result.size());
  for (const auto& n : result) out.push_back({n.id, n.label, n.score});
  return out;
}

std::string TrainedOn(const Checkpoint& cp) {
  const auto& c = cp.config;
  std::string s = std::string(ToString(c.direction)) + " " + c.view_sources.ToString();
  if (c.multimodal) s += " multimodal";
  return s;
}

struct Timer {
  Clock::duration inference{};
  Clock::duration search{};
  std::size_t queries = 0;

  StageTiming Mean() const {
    if (queries == 0) return {};
    const double n = static_cast<double>(queries);
    return {Ms(inference) / n, Ms(search) / n};
  }
};

}  // namespace

EvalReport EvalZeroShot(std::span<const ObjectRecord> records, const Checkpoint& nerf2clip,
                        const Gallery& anchors, const EvalOptions& options) {
  RequireRecords(records, "zeroshot");
  if (nerf2clip.config.direction != MapperDirection::kNerf2Clip) {
    Fail(ErrorKind::kConfigMismatch, "zero-shot classification needs a nerf2clip checkpoint");
  }
  RequireAnchors(records, anchors);

  EvalReport report;
  report.protocol = Protocol::kZeroShot;
  report.method = options.method.empty() ? TrainedOn(nerf2clip) : options.method;
  report.views = 0;
  report.config = {{"protocol", ToString(report.protocol)},
                   {"top_k", options.top_k},
                   {"records", records.size()},
                   {"anchors", anchors.size()},
                   {"checkpoint", nerf2clip.config.ToJson()}};
  report.timing_note = "inference: mapper forward; search: anchor 1-NN";

  Timer timer;
  for (const auto& r : records) {
    const auto t0 = Clock::now();
    const Vector predicted = Infer(nerf2clip, r.nerf_embedding);
    const auto t1 = Clock::now();
    const QueryResult result = TopK(anchors, predicted, options.top_k);
    const auto t2 = Clock::now();
    timer.inference += t1 - t0;
    timer.search += t2 - t1;
    ++timer.queries;
    report.queries.push_back({r.id, r.class_label, {}, ToRanked(result)});
  }
  report.timing = timer.Mean();
  report.Finalize();
  return report;
}

EvalReport EvalClipBaselineZeroShot(std::span<const ObjectRecord> records, const Gallery& anchors,
                                    std::size_t n_views, const EvalOptions& options,
                                    ViewSourceSet sources) {
  RequireRecords(records, "zeroshot-baseline");
  if (n_views == 0) Fail(ErrorKind::kInsufficientViews, "the baseline needs at least one view");
  RequireAnchors(records, anchors);

  EvalReport report;
  report.protocol = Protocol::kZeroShotBaseline;
  report.method = options.method.empty() ? "clip " + sources.ToString() : options.method;
  report.views = n_views;
  report.config = {{"protocol", ToString(report.protocol)},
                   {"n_views", n_views},
                   {"view_sources", sources.ToString()},
                   {"seed", options.seed},
                   {"top_k", options.top_k},
                   {"records", records.size()},
                   {"anchors", anchors.size()}};
  report.timing_note = "inference: view-embedding mean (no rendering); search: anchor 1-NN";

  Timer timer;
  for (const auto& r : records) {
    const auto t0 = Clock::now();
    auto indices = SelectViewIndices(r, n_views, sources, options.seed);
    std::vector<Vector> views;
    for (auto i : indices) views.push_back(r.views[i].embedding);
    const Vector query = MeanRows(StackRows<float>(views));
    const auto t1 = Clock::now();
    const QueryResult result = TopK(anchors, query, options.top_k);
    const auto t2 = Clock::now();
    timer.inference += t1 - t0;
    timer.search += t2 - t1;
    ++timer.queries;
    report.queries.push_back({r.id, r.class_label, std::move(indices), ToRanked(result)});
  }
  report.timing = timer.Mean();
  report.Finalize();
  return report;
}

EvalReport EvalRetrievalImages(std::span<const ObjectRecord> gallery_records,
                               const Checkpoint& clip2nerf, const RetrievalOptions& options,
                               std::span<const ObjectRecord> query_records) {
  RequireRecords(gallery_records, "retrieval-images");
  RequireClip2Nerf(clip2nerf);
  const bool cross = !query_records.empty();
  const auto queries = cross ? query_records : gallery_records;
  const Gallery gallery = NerfGallery(gallery_records);

  EvalReport report;
  report.protocol = Protocol::kRetrievalImages;
  report.method = options.method.empty() ? TrainedOn(clip2nerf) : options.method;
  report.views = options.n_query_views;
  report.config = {{"protocol", ToString(report.protocol)},
                   {"n_query_views", options.n_query_views},
                   {"query_sources", options.query_sources.ToString()},
                   {"exclude_self", options.exclude_self},
                   {"cross_dataset", cross},
                   {"seed", options.seed},
                   {"top_k", options.top_k},
                   {"gallery_size", gallery.size()},
                   {"queries", queries.size()},
                   {"checkpoint", clip2nerf.config.ToJson()}};
  report.timing_note = "inference: mapper forward and view mean; search: NeRF gallery top-k";

  Timer timer;
  for (const auto& r : queries) {
    const auto t0 = Clock::now();
    auto indices = SelectViewIndices(r, options.n_query_views, options.query_sources, options.seed);
    std::vector<Vector> views;
    for (auto i : indices) views.push_back(r.views[i].embedding);
    const Vector predicted = MeanPrediction(clip2nerf, views);
    const auto t1 = Clock::now();
    std::optional<std::string_view> exclude;
    if (options.exclude_self) exclude = r.id;
    const QueryResult result = TopK(gallery, predicted, options.top_k, exclude);
    const auto t2 = Clock::now();
    timer.inference += t1 - t0;
    timer.search += t2 - t1;
    ++timer.queries;
    report.queries.push_back({r.id, r.class_label, std::move(indices), ToRanked(result)});
  }
  report.timing = timer.Mean();
  report.Finalize();
  return report;
}

EvalReport EvalRetrievalText(std::span<const ObjectRecord> records, const Checkpoint& clip2nerf,
                             const EvalOptions& options) {
  RequireRecords(records, "retrieval-text");
  RequireClip2Nerf(clip2nerf);
  for (const auto& r : records) {
    if (!r.caption_embedding) Fail(ErrorKind::kMissingCaption, "record '" + r.id + "' has no caption");
  }
  const Gallery gallery = NerfGallery(records);

  EvalReport report;
  report.protocol = Protocol::kRetrievalText;
  report.method = options.method.empty() ? TrainedOn(clip2nerf) : options.method;
  report.views = 0;
  report.config = {{"protocol", ToString(report.protocol)},
                   {"top_k", options.top_k},
                   {"gallery_size", gallery.size()},
                   {"checkpoint", clip2nerf.config.ToJson()}};
  report.timing_note = "inference: mapper forward; search: NeRF gallery top-k";

  Timer timer;
  for (const auto& r : records) {
    const auto t0 = Clock::now();
    const Vector predicted = Infer(clip2nerf, *r.caption_embedding);
    const auto t1 = Clock::now();
    const QueryResult result = TopK(gallery, predicted, options.top_k);
    const auto t2 = Clock::now();
    timer.inference += t1 - t0;
    timer.search += t2 - t1;
    ++timer.queries;
    report.queries.push_back({r.id, r.class_label, {}, ToRanked(result)});
  }
  report.timing = timer.Mean();
  report.Finalize();
  return report;
}

}  // namespace nfb
