#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nfb/dataset.h"
#include "nfb/mlp.h"

namespace nfb {

enum class MapperDirection : std::uint8_t {
  kClip2Nerf,  // image/text embedding -> NeRF embedding
  kNerf2Clip,  // NeRF embedding -> mean view embedding
};

std::string_view ToString(MapperDirection direction);
MapperDirection ParseDirection(std::string_view text);

struct MapperConfig {
  MapperDirection direction = MapperDirection::kClip2Nerf;
  // Views per object used for training; nullopt takes every matching view.
  std::optional<std::size_t> n_views;
  ViewSourceSet view_sources{ViewSource::kGroundTruth};
  // clip2nerf only: caption embeddings join the sample pool.
  bool multimodal = false;
  std::size_t caption_repeat = 1;

  std::size_t epochs = 150;
  double max_lr = 1e-5;
  double weight_decay = 1e-2;
  std::size_t batch_size = 64;
  double pct_start = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  std::size_t clip_dim = 512;
  std::size_t hidden_dim = 768;
  std::size_t nerf_dim = 1024;

  // clip2nerf: 150 epochs at 1e-5; nerf2clip: 100 epochs at 1e-3. Both use
  // weight decay 1e-2 and batch size 64.
  static MapperConfig Defaults(MapperDirection direction);

  std::vector<std::size_t> LayerDims() const;
  void Validate() const;

  nlohmann::ordered_json ToJson() const;
  // FromJson starts from Defaults() of the json's direction (clip2nerf if
  // absent); Overlay starts from `base`. Both override every key present.
  static MapperConfig FromJson(const nlohmann::ordered_json& json);
  static MapperConfig Overlay(MapperConfig base, const nlohmann::ordered_json& json);

  friend bool operator==(const MapperConfig&, const MapperConfig&) = default;
};

struct TrainingMetadata {
  std::size_t epochs_run = 0;
  std::size_t total_steps = 0;
  std::size_t samples_per_epoch = 0;
  double final_train_loss = 0.0;
  double final_val_loss = 0.0;  // NaN without a validation split
  double best_val_loss = 0.0;   // NaN without a validation split
  std::size_t best_epoch = 0;   // 1-based; 0 means the initialization
  std::uint64_t dataset_fingerprint = 0;

  nlohmann::ordered_json ToJson() const;
  static TrainingMetadata FromJson(const nlohmann::ordered_json& json);
};

struct Checkpoint {
  MapperConfig config;
  MlpParams params;        // lowest validation loss (or final without val data)
  MlpParams final_params;  // after the last epoch
  TrainingMetadata metadata;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double last_lr = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochStats> trace;
};

// Kaiming-uniform: weights of layer k drawn from U(-sqrt(6/fan_in), +sqrt(6/fan_in)),
// biases zero. One xoshiro256** stream over all layers in order.
MlpParams InitParams(const std::vector<std::size_t>& layer_dims, std::uint64_t seed);
MlpParams InitParams(MapperDirection direction, std::uint64_t seed);

// A training pool: row i of inputs maps to row i of targets.
struct SamplePool {
  Matrix inputs;
  Matrix targets;
  std::vector<std::string> record_ids;  // owner of each row
};

// clip2nerf: one (view, nerf) row per selected view (plus captions when
// multimodal). nerf2clip: one (nerf, mean of selected views) row per record.
// View selection uses config.seed. Throws kInsufficientViews, kMissingCaption.
SamplePool BuildSamplePool(const std::vector<ObjectRecord>& records, const MapperConfig& config);

// Called after every epoch, e.g. for progress output.
using EpochCallback = std::function<void(const EpochStats&)>;

// Trains on the train split, tracks the val split. Throws kConfigMismatch,
// kEmptyDataset, kMissingCaption, kInsufficientViews.
TrainResult TrainClip2Nerf(const Dataset& dataset, const MapperConfig& config,
                           const EpochCallback& on_epoch = {});
TrainResult TrainNerf2Clip(const Dataset& dataset, const MapperConfig& config,
                           const EpochCallback& on_epoch = {});
TrainResult TrainMapper(const Dataset& dataset, const MapperConfig& config,
                        const EpochCallback& on_epoch = {});

// Mean cosine loss of params over a pool.
double PoolLoss(const MlpParams& params, const SamplePool& pool);

Vector Infer(const Checkpoint& checkpoint, const Vector& input);
Matrix InferBatch(const Checkpoint& checkpoint, const Matrix& inputs);

// File layout: "NFBCKPT\0", u32 version, u64 JSON length, JSON (config,
// metadata, layer dims), best params then final params as little-endian f32
// (per layer: weights row-major, then bias), u64 CRC-64/XZ of all prior bytes.
inline constexpr std::string_view kCheckpointMagic{"NFBCKPT\0", 8};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string EncodeCheckpoint(const Checkpoint& checkpoint);
// Throws kCorruptCheckpoint, kVersionError.
Checkpoint DecodeCheckpoint(std::string_view bytes);
void SaveCheckpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);
// JSON header only, for inspection.
nlohmann::ordered_json ReadCheckpointHeader(const std::filesystem::path& path);

}  // namespace nfb
