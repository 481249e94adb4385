#include <cmath>
#include <cstring>
#include <set>

#include <gtest/gtest.h>

#include "nfb/binary_io.h"
#include "nfb/mapper.h"
#include "test_support.h"

namespace nfb {
namespace {

Dataset NoiseFreeOneClass(std::size_t views = 4) {
  SynthSpec s;
  s.num_classes = 1;
  s.objects_per_class = 10;
  s.views_per_object = views;
  s.noise_sigma = 0.0;
  s.seed = 11;
  return GenerateSynthetic(s);
}

// Small dims keep these fast; the shape logic is the same.
MapperConfig SmallConfig(MapperDirection dir) {
  auto c = MapperConfig::Defaults(dir);
  c.clip_dim = 8;
  c.hidden_dim = 12;
  c.nerf_dim = 16;
  c.epochs = 3;
  c.batch_size = 8;
  c.seed = 2;
  return c;
}

Dataset SmallDataset(std::size_t views = 6, std::uint64_t seed = 4) {
  SynthSpec s;
  s.num_classes = 3;
  s.objects_per_class = 10;
  s.views_per_object = views;
  s.noise_sigma = 0.1;
  s.seed = seed;
  s.clip_dim = 8;
  s.nerf_dim = 16;
  return GenerateSynthetic(s);
}

TEST(MapperConfig, Defaults) {
  const auto c = MapperConfig::Defaults(MapperDirection::kClip2Nerf);
  EXPECT_EQ(c.epochs, 150u);
  EXPECT_EQ(c.max_lr, 1e-5);
  EXPECT_EQ(c.weight_decay, 1e-2);
  EXPECT_EQ(c.batch_size, 64u);
  EXPECT_EQ(c.LayerDims(), (std::vector<std::size_t>{512, 768, 1024}));
  const auto n = MapperConfig::Defaults(MapperDirection::kNerf2Clip);
  EXPECT_EQ(n.epochs, 100u);
  EXPECT_EQ(n.max_lr, 1e-3);
  EXPECT_EQ(n.LayerDims(), (std::vector<std::size_t>{1024, 768, 512}));
}

TEST(MapperConfig, JsonRoundTrip) {
  auto c = SmallConfig(MapperDirection::kNerf2Clip);
  c.n_views = 4;
  c.view_sources = ViewSourceSet::Synthetic();
  EXPECT_EQ(MapperConfig::FromJson(c.ToJson()), c);
}

TEST(InitParams, KaimingBoundsAndZeroBias) {
  const auto p = InitParams(MapperDirection::kClip2Nerf, 5);
  EXPECT_EQ(p, InitParams(MapperDirection::kClip2Nerf, 5));
  EXPECT_NE(p, InitParams(MapperDirection::kClip2Nerf, 6));
  for (std::size_t k = 0; k < p.num_layers(); ++k) {
    const double bound = std::sqrt(6.0 / static_cast<double>(p.layer_dims[k]));
    double max_abs = 0;
    for (float w : p.weights[k].values()) max_abs = std::max(max_abs, std::fabs(double(w)));
    EXPECT_LE(max_abs, bound);
    EXPECT_GT(max_abs, 0.95 * bound);
    for (float b : p.biases[k].values()) EXPECT_EQ(b, 0.0f);
  }
}

TEST(Train, Clip2NerfNoiseFreeConverges) {
  auto c = MapperConfig::Defaults(MapperDirection::kClip2Nerf);
  c.epochs = 50;
  c.max_lr = 1e-3;
  c.batch_size = 8;
  c.seed = 1;
  const auto d = NoiseFreeOneClass();
  const auto r = TrainClip2Nerf(d, c);
  ASSERT_EQ(r.trace.size(), 50u);
  EXPECT_LT(r.trace.back().train_loss, 1e-3);
  const auto rec = RecordsInSplit(d, Split::kTrain).front();
  const auto out = Infer(r.checkpoint, rec.views[0].embedding);
  EXPECT_EQ(out.dim(), 1024u);
  EXPECT_GT(CosineSimilarity(out, rec.nerf_embedding), 0.999);
}

TEST(Train, Nerf2ClipNoiseFreeConverges) {
  auto c = MapperConfig::Defaults(MapperDirection::kNerf2Clip);
  c.epochs = 50;
  c.batch_size = 2;
  c.seed = 1;
  const auto d = NoiseFreeOneClass();
  const auto r = TrainNerf2Clip(d, c);
  EXPECT_LT(r.trace.back().train_loss, 1e-3);
  std::size_t non_monotone = 0;
  for (std::size_t e = 5; e < r.trace.size(); ++e) {
    non_monotone += r.trace[e].train_loss > r.trace[e - 1].train_loss ? 1 : 0;
  }
  EXPECT_LE(non_monotone, 2u);
}

TEST(Train, BitIdenticalCheckpoints) {
  const auto d = SmallDataset();
  const auto c = SmallConfig(MapperDirection::kClip2Nerf);
  const auto a = TrainClip2Nerf(d, c);
  const auto b = TrainClip2Nerf(d, c);
  EXPECT_EQ(EncodeCheckpoint(a.checkpoint), EncodeCheckpoint(b.checkpoint));
  auto other = c;
  other.seed = 3;
  EXPECT_NE(EncodeCheckpoint(TrainClip2Nerf(d, other).checkpoint), EncodeCheckpoint(a.checkpoint));
}

TEST(Train, ZeroEpochsKeepsInit) {
  auto c = SmallConfig(MapperDirection::kNerf2Clip);
  c.epochs = 0;
  const auto r = TrainNerf2Clip(SmallDataset(), c);
  EXPECT_TRUE(r.trace.empty());
  EXPECT_EQ(r.checkpoint.params, InitParams(c.LayerDims(), c.seed));
  EXPECT_EQ(r.checkpoint.final_params, r.checkpoint.params);
  EXPECT_EQ(r.checkpoint.metadata.total_steps, 0u);
}

TEST(Train, StepCounts) {
  const auto d = SmallDataset(6);
  const std::size_t n_train = RecordsInSplit(d, Split::kTrain).size();
  auto c = SmallConfig(MapperDirection::kClip2Nerf);
  c.n_views = 4;
  auto r = TrainClip2Nerf(d, c);
  EXPECT_EQ(r.checkpoint.metadata.samples_per_epoch, 4 * n_train);
  EXPECT_EQ(r.checkpoint.metadata.total_steps, c.epochs * ((4 * n_train + 7) / 8));
  EXPECT_EQ(r.trace.back().steps, r.checkpoint.metadata.total_steps);

  auto n = SmallConfig(MapperDirection::kNerf2Clip);
  n.n_views = 4;
  r = TrainNerf2Clip(d, n);
  EXPECT_EQ(r.checkpoint.metadata.samples_per_epoch, n_train);

  c.multimodal = true;
  c.caption_repeat = 2;
  r = TrainClip2Nerf(d, c);
  EXPECT_EQ(r.checkpoint.metadata.samples_per_epoch, 6 * n_train);
}

TEST(Train, Nerf2ClipTargetIsViewMean) {
  const auto d = SmallDataset(6);
  auto c = SmallConfig(MapperDirection::kNerf2Clip);
  c.n_views = 1;
  const auto records = RecordsInSplit(d, Split::kTrain);
  auto pool = BuildSamplePool(records, c);
  const auto one = SelectViews(records[0], 1, c.view_sources, c.seed);
  EXPECT_TRUE(std::equal(one[0].begin(), one[0].end(), pool.targets.row(0).begin()));

  c.n_views = 3;
  pool = BuildSamplePool(records, c);
  const auto three = SelectViews(records[0], 3, c.view_sources, c.seed);
  for (std::size_t j = 0; j < 8; ++j) {
    const double mean = (double(three[0][j]) + three[1][j] + three[2][j]) / 3.0;
    EXPECT_NEAR(pool.targets(0, j), mean, 1e-6);
  }
}

TEST(Train, NViewsSweepDistinct) {
  const auto d = SmallDataset(36);
  std::set<std::uint64_t> fingerprints;
  std::set<std::string> bytes;
  for (std::size_t n : {1, 2, 4, 8, 16, 36}) {
    auto c = SmallConfig(MapperDirection::kNerf2Clip);
    c.epochs = 1;
    c.n_views = n;
    const auto r = TrainNerf2Clip(d, c);
    fingerprints.insert(r.checkpoint.metadata.dataset_fingerprint);
    bytes.insert(EncodeCheckpoint(r.checkpoint));
  }
  EXPECT_EQ(fingerprints.size(), 6u);
  EXPECT_EQ(bytes.size(), 6u);
}

TEST(Train, Errors) {
  const auto d = SmallDataset();
  EXPECT_NFB_ERROR(TrainClip2Nerf(d, SmallConfig(MapperDirection::kNerf2Clip)),
                   ErrorKind::kConfigMismatch);
  auto empty = d;
  std::erase_if(empty.records, [](const auto& r) { return r.split == Split::kTrain; });
  EXPECT_NFB_ERROR(TrainClip2Nerf(empty, SmallConfig(MapperDirection::kClip2Nerf)),
                   ErrorKind::kEmptyDataset);
  auto no_caption = d;
  for (auto& r : no_caption.records) r.caption_embedding.reset();
  auto c = SmallConfig(MapperDirection::kClip2Nerf);
  c.multimodal = true;
  EXPECT_NFB_ERROR(TrainClip2Nerf(no_caption, c), ErrorKind::kMissingCaption);
  c = SmallConfig(MapperDirection::kClip2Nerf);
  c.n_views = 7;
  EXPECT_NFB_ERROR(TrainClip2Nerf(d, c), ErrorKind::kInsufficientViews);
}

TEST(Train, LossInvariantToTargetScale) {
  const auto d = SmallDataset();
  const auto c = SmallConfig(MapperDirection::kClip2Nerf);
  const auto r = TrainClip2Nerf(d, c);
  auto pool = BuildSamplePool(RecordsInSplit(d, Split::kVal), c);
  const double base = PoolLoss(r.checkpoint.params, pool);
  for (float& v : pool.targets.values()) v *= 3.5f;
  EXPECT_NEAR(PoolLoss(r.checkpoint.params, pool), base, 1e-6);
}

TEST(Checkpoint, SaveLoadSaveIdentical) {
  testing::TempDir dir;
  const auto r = TrainNerf2Clip(SmallDataset(), SmallConfig(MapperDirection::kNerf2Clip));
  SaveCheckpoint(r.checkpoint, dir / "a.ckpt");
  const auto loaded = LoadCheckpoint(dir / "a.ckpt");
  SaveCheckpoint(loaded, dir / "b.ckpt");
  EXPECT_EQ(ReadFile(dir / "a.ckpt"), ReadFile(dir / "b.ckpt"));
  EXPECT_EQ(loaded.params, r.checkpoint.params);
  EXPECT_EQ(loaded.config, r.checkpoint.config);
}

TEST(Checkpoint, FlippedByteIsCorrupt) {
  const auto r = TrainNerf2Clip(SmallDataset(), SmallConfig(MapperDirection::kNerf2Clip));
  const auto bytes = EncodeCheckpoint(r.checkpoint);
  for (std::size_t pos : {bytes.size() - 20, bytes.size() / 2, std::size_t{30}}) {
    auto bad = bytes;
    bad[pos] = static_cast<char>(bad[pos] ^ 0x10);
    EXPECT_NFB_ERROR(DecodeCheckpoint(bad), ErrorKind::kCorruptCheckpoint);
  }
  EXPECT_NFB_ERROR(DecodeCheckpoint(bytes.substr(0, bytes.size() - 1)),
                   ErrorKind::kCorruptCheckpoint);
}

TEST(Checkpoint, VersionChecked) {
  const auto r = TrainNerf2Clip(SmallDataset(), SmallConfig(MapperDirection::kNerf2Clip));
  auto bytes = EncodeCheckpoint(r.checkpoint);
  const std::uint32_t v = 9;
  std::memcpy(bytes.data() + 8, &v, 4);
  bytes.resize(bytes.size() - 8);
  AppendU64(bytes, Crc64(bytes));
  EXPECT_NFB_ERROR(DecodeCheckpoint(bytes), ErrorKind::kVersionError);
}

TEST(Infer, ShapeAndDeterminism) {
  Checkpoint cp;
  cp.config = MapperConfig::Defaults(MapperDirection::kClip2Nerf);
  cp.params = InitParams(MapperDirection::kClip2Nerf, 3);
  cp.final_params = cp.params;
  const Vector x(512, 0.1f);
  const auto y = Infer(cp, x);
  EXPECT_EQ(y.dim(), 1024u);
  EXPECT_EQ(Infer(cp, x), y);
  testing::TempDir dir;
  SaveCheckpoint(cp, dir / "c.ckpt");
  const auto loaded = LoadCheckpoint(dir / "c.ckpt");
  EXPECT_NFB_ERROR(Infer(loaded, Vector(1024, 0.1f)), ErrorKind::kDimensionMismatch);
}

}  // namespace
}  // namespace nfb
