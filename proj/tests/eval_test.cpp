#include <random>

#include <gtest/gtest.h>

#include "nfb/eval.h"
#include "nfb/metrics.h"
#include "test_support.h"

namespace nfb {
namespace {

TEST(Recall, HandFixtures) {
  const std::vector<RankedLabels> two{{"A", {"A", "B"}}, {"B", {"A", "B"}}};
  EXPECT_EQ(RecallAtK(two, 1), 0.5);
  EXPECT_EQ(RecallAtK(two, 2), 1.0);
  const std::vector<RankedLabels> three{{"A", {"B", "A"}}, {"A", {"A", "B"}}, {"B", {"A", "A"}}};
  EXPECT_EQ(RecallAtK(three, 1), 1.0 / 3.0);
  EXPECT_EQ(RecallAtK(three, 2), 2.0 / 3.0);
}

TEST(Recall, ShortListsAndErrors) {
  const std::vector<RankedLabels> q{{"A", {"B"}}, {"B", {"B"}}};
  EXPECT_EQ(RecallAtK(q, 10), 0.5);
  EXPECT_NFB_ERROR(RecallAtK({}, 1), ErrorKind::kEmptyInput);
  EXPECT_NFB_ERROR(RecallAtK(q, 0), ErrorKind::kOutOfRange);
}

TEST(Recall, MonotoneInK) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> label(0, 4), len(1, 12), count(1, 20);
  for (int t = 0; t < 200; ++t) {
    std::vector<RankedLabels> q(static_cast<std::size_t>(count(rng)));
    for (auto& r : q) {
      r.true_label = std::to_string(label(rng));
      for (int i = len(rng); i > 0; --i) r.ranked_labels.push_back(std::to_string(label(rng)));
    }
    double prev = 0;
    for (std::size_t k = 1; k <= 13; ++k) {
      const double cur = RecallAtK(q, k);
      ASSERT_GE(cur, prev);
      prev = cur;
    }
  }
}

TEST(Accuracy, Fixtures) {
  EXPECT_EQ(MulticlassAccuracy(std::vector<LabelPrediction>{{"a", "a"}, {"b", "b"}}), 1.0);
  EXPECT_EQ(MulticlassAccuracy(std::vector<LabelPrediction>{{"a", "b"}, {"b", "a"}}), 0.0);
  EXPECT_EQ(MulticlassAccuracy(
                std::vector<LabelPrediction>{{"a", "a"}, {"b", "b"}, {"c", "c"}, {"d", "a"}}),
            0.75);
  EXPECT_NFB_ERROR(MulticlassAccuracy({}), ErrorKind::kEmptyInput);
}

// A 2d-wide hidden layer with W1 = [I; -I], W2 = [I, -I] computes
// gelu(x) - gelu(-x) = x, so the mapper is the identity up to rounding.
Checkpoint IdentityCheckpoint(MapperDirection dir, std::size_t d) {
  Checkpoint cp;
  cp.config = MapperConfig::Defaults(dir);
  cp.config.clip_dim = d;
  cp.config.nerf_dim = d;
  cp.config.hidden_dim = 2 * d;
  cp.params = MlpParams::Zeros(cp.config.LayerDims());
  for (std::size_t i = 0; i < d; ++i) {
    cp.params.weights[0](i, i) = 1;
    cp.params.weights[0](d + i, i) = -1;
    cp.params.weights[1](i, i) = 1;
    cp.params.weights[1](i, d + i) = -1;
  }
  cp.final_params = cp.params;
  return cp;
}

// Noise-free data: every object of class c has nerf, views and caption equal
// to the unit axis e_c.
Dataset AxisDataset(std::size_t classes, std::size_t per_class, std::size_t views) {
  Dataset d;
  d.nerf_dim = d.clip_dim = classes;
  for (std::size_t c = 0; c < classes; ++c) {
    d.classes.push_back("k" + std::to_string(c));
    Vector axis(classes);
    axis[c] = 1;
    d.anchors.push_back({d.classes.back(), axis});
    for (std::size_t o = 0; o < per_class; ++o) {
      ObjectRecord r;
      r.id = d.classes.back() + "_" + std::to_string(o);
      r.class_label = d.classes.back();
      r.nerf_embedding = axis;
      for (std::size_t v = 0; v < views; ++v) r.views.push_back({axis, ViewSource::kGroundTruth});
      r.views.push_back({axis, ViewSource::kRendered});
      r.caption_embedding = axis;
      r.split = Split::kTest;
      d.records.push_back(r);
    }
  }
  return d;
}

TEST(IdentityMapper, IsIdentity) {
  const auto cp = IdentityCheckpoint(MapperDirection::kNerf2Clip, 4);
  const Vector x{0.3f, -1.5f, 2.0f, 0.0f};
  const auto y = Infer(cp, x);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], x[i], 1e-6);
}

TEST(ZeroShot, NoiseFreeIsPerfect) {
  const auto d = AxisDataset(5, 4, 3);
  const auto anchors = LabelGalleryFromAnchors(d.anchors);
  const auto r = EvalZeroShot(d.records, IdentityCheckpoint(MapperDirection::kNerf2Clip, 5), anchors);
  EXPECT_EQ(r.metrics.at("accuracy"), 1.0);
  EXPECT_EQ(r.metrics.at("recall@1"), 1.0);
  EXPECT_EQ(r.queries.size(), 20u);
  EXPECT_NO_THROW(r.Verify());
}

TEST(ZeroShot, Errors) {
  const auto d = AxisDataset(3, 2, 1);
  auto anchors = d.anchors;
  anchors.pop_back();
  const auto g = LabelGalleryFromAnchors(anchors);
  const auto n2c = IdentityCheckpoint(MapperDirection::kNerf2Clip, 3);
  EXPECT_NFB_ERROR(EvalZeroShot(d.records, n2c, g), ErrorKind::kMissingAnchor);
  EXPECT_NFB_ERROR(EvalZeroShot(d.records, IdentityCheckpoint(MapperDirection::kClip2Nerf, 3),
                                LabelGalleryFromAnchors(d.anchors)),
                   ErrorKind::kConfigMismatch);
  EXPECT_NFB_ERROR(EvalZeroShot({}, n2c, g), ErrorKind::kEmptyInput);
}

TEST(Baseline, NoiseFreeOneView) {
  const auto d = AxisDataset(4, 3, 2);
  const auto anchors = LabelGalleryFromAnchors(d.anchors);
  const auto r = EvalClipBaselineZeroShot(d.records, anchors, 1);
  EXPECT_EQ(r.metrics.at("accuracy"), 1.0);
  EXPECT_EQ(r.views, 1u);
  EXPECT_NFB_ERROR(EvalClipBaselineZeroShot(d.records, anchors, 2), ErrorKind::kInsufficientViews);
  EXPECT_NO_THROW(EvalClipBaselineZeroShot(d.records, anchors, 3, {}, ViewSourceSet::All()));
}

TEST(RetrievalImages, NoiseFreeCombinatorics) {
  const std::size_t per_class = 4;
  const auto d = AxisDataset(5, per_class, 4);
  const auto cp = IdentityCheckpoint(MapperDirection::kClip2Nerf, 5);
  RetrievalOptions opt;
  const auto r = EvalRetrievalImages(d.records, cp, opt);
  // Every same-class NeRF scores 1, every other 0: the first per_class - 1
  // results are same-class once self is excluded.
  EXPECT_EQ(r.metrics.at("recall@1"), 1.0);
  EXPECT_EQ(r.metrics.at("recall@5"), 1.0);
  for (const auto& q : r.queries) {
    for (const auto& e : q.ranked) EXPECT_NE(e.id, q.query_id);
    for (std::size_t i = 0; i + 1 < per_class; ++i) EXPECT_EQ(q.ranked[i].label, q.true_label);
  }
  opt.exclude_self = false;
  const auto with_self = EvalRetrievalImages(d.records, cp, opt);
  EXPECT_EQ(with_self.queries[0].ranked[0].id, d.records[0].id);
}

TEST(RetrievalImages, SingleViewMatchesMultiViewQuery) {
  SynthSpec s;
  s.num_classes = 3;
  s.objects_per_class = 6;
  s.views_per_object = 5;
  s.noise_sigma = 0.3;
  s.clip_dim = 8;
  s.nerf_dim = 8;
  const auto d = GenerateSynthetic(s);
  auto cp = IdentityCheckpoint(MapperDirection::kClip2Nerf, 8);
  RetrievalOptions opt;
  opt.seed = 13;
  const auto r = EvalRetrievalImages(d.records, cp, opt);
  const auto g = NerfGallery(d.records);
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const auto& rec = d.records[i];
    const auto views = SelectViews(rec, 1, {ViewSource::kGroundTruth}, 13);
    const auto direct = MultiViewQuery(cp, views, g, 10, rec.id);
    ASSERT_EQ(r.queries[i].ranked.size(), direct.size());
    for (std::size_t k = 0; k < direct.size(); ++k) {
      EXPECT_EQ(r.queries[i].ranked[k].id, direct[k].id);
      EXPECT_EQ(r.queries[i].ranked[k].score, direct[k].score);
    }
  }
}

TEST(RetrievalImages, DeterministicAndSelfConsistent) {
  SynthSpec s;
  s.num_classes = 4;
  s.objects_per_class = 5;
  s.views_per_object = 6;
  s.noise_sigma = 0.5;
  s.clip_dim = 6;
  s.nerf_dim = 6;
  const auto d = GenerateSynthetic(s);
  const auto cp = IdentityCheckpoint(MapperDirection::kClip2Nerf, 6);
  RetrievalOptions opt;
  opt.n_query_views = 3;
  const auto a = EvalRetrievalImages(d.records, cp, opt);
  const auto b = EvalRetrievalImages(d.records, cp, opt);
  EXPECT_EQ(a.queries, b.queries);
  EXPECT_EQ(a.metrics, b.metrics);
  EXPECT_LE(a.metrics.at("recall@1"), a.metrics.at("recall@5"));
  EXPECT_LE(a.metrics.at("recall@5"), a.metrics.at("recall@10"));
  const auto back = EvalReport::FromJson(a.ToJson());
  EXPECT_EQ(back.queries, a.queries);
  EXPECT_EQ(back.metrics, a.metrics);
}

TEST(RetrievalImages, CrossDatasetQueries) {
  const auto gallery = AxisDataset(3, 3, 2);
  auto queries = AxisDataset(3, 1, 2);
  for (auto& r : queries.records) r.id = "photo_" + r.id;
  const auto cp = IdentityCheckpoint(MapperDirection::kClip2Nerf, 3);
  RetrievalOptions opt;
  opt.exclude_self = false;
  const auto r = EvalRetrievalImages(gallery.records, cp, opt, queries.records);
  EXPECT_EQ(r.queries.size(), 3u);
  EXPECT_EQ(r.metrics.at("recall@1"), 1.0);
  EXPECT_NFB_ERROR(EvalRetrievalImages(gallery.records, IdentityCheckpoint(MapperDirection::kNerf2Clip, 3), opt),
                   ErrorKind::kConfigMismatch);
}

TEST(RetrievalText, NoiseFreeAndMissingCaption) {
  auto d = AxisDataset(4, 3, 1);
  const auto cp = IdentityCheckpoint(MapperDirection::kClip2Nerf, 4);
  const auto r = EvalRetrievalText(d.records, cp);
  EXPECT_EQ(r.metrics.at("recall@1"), 1.0);
  EXPECT_EQ(r.views, 0u);
  d.records[2].caption_embedding.reset();
  try {
    EvalRetrievalText(d.records, cp);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMissingCaption);
    EXPECT_NE(std::string(e.what()).find(d.records[2].id), std::string::npos);
  }
}

TEST(Report, VerifyCatchesTampering) {
  const auto d = AxisDataset(3, 2, 1);
  auto r = EvalZeroShot(d.records, IdentityCheckpoint(MapperDirection::kNerf2Clip, 3),
                        LabelGalleryFromAnchors(d.anchors));
  r.metrics["accuracy"] = 0.5;
  EXPECT_NFB_ERROR(r.Verify(), ErrorKind::kValidationError);
  EXPECT_NFB_ERROR(EvalReport::FromJson(r.ToJson()), ErrorKind::kValidationError);
}

TEST(Report, CsvColumns) {
  const auto d = AxisDataset(3, 2, 2);
  const auto zs = EvalZeroShot(d.records, IdentityCheckpoint(MapperDirection::kNerf2Clip, 3),
                               LabelGalleryFromAnchors(d.anchors));
  const auto base = EvalClipBaselineZeroShot(d.records, LabelGalleryFromAnchors(d.anchors), 1);
  const std::vector<EvalReport> cls{zs, base};
  const auto csv = ReportTableCsv(cls);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,views,accuracy,time_ms");
  EXPECT_NE(csv.find("\nclip rendered,1,100.00,"), std::string::npos) << csv;

  const auto ret = EvalRetrievalText(d.records, IdentityCheckpoint(MapperDirection::kClip2Nerf, 3));
  const std::vector<EvalReport> rr{ret};
  const auto rcsv = ReportTableCsv(rr);
  EXPECT_EQ(rcsv.substr(0, rcsv.find('\n')), "method,views,recall@1,recall@5,recall@10,time_ms");
  const std::vector<EvalReport> mixed{zs, ret};
  EXPECT_NFB_ERROR(ReportTableCsv(mixed), ErrorKind::kConfigMismatch);
}

TEST(Report, WriteAndLoad) {
  testing::TempDir dir;
  const auto d = AxisDataset(3, 2, 2);
  const std::vector<EvalReport> runs{
      EvalRetrievalText(d.records, IdentityCheckpoint(MapperDirection::kClip2Nerf, 3))};
  WriteReports(runs, dir.path(), "text");
  const auto back = LoadReports(dir / "text.report.json");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].queries, runs[0].queries);
  EXPECT_TRUE(std::filesystem::exists(dir / "text.table.csv"));
}

}  // namespace
}  // namespace nfb
