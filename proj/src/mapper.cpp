#include "nfb/mapper.h"

#include <cmath>
#include <limits>

#include "nfb/binary_io.h"
#include "nfb/error.h"
#include "nfb/optim.h"
#include "nfb/prng.h"

namespace nfb {

using nlohmann::ordered_json;

namespace {

// Stream tags for DeriveSeed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;

constexpr std::size_t kEvalBatch = 256;

}  // namespace

std::string_view ToString(MapperDirection direction) {
  return direction == MapperDirection::kClip2Nerf ? "clip2nerf" : "nerf2clip";
}

MapperDirection ParseDirection(std::string_view text) {
  if (text == "clip2nerf") return MapperDirection::kClip2Nerf;
  if (text == "nerf2clip") return MapperDirection::kNerf2Clip;
  Fail(ErrorKind::kValidationError, "unknown direction '" + std::string(text) + "'");
}

MapperConfig MapperConfig::Defaults(MapperDirection direction) {
  MapperConfig c;
  c.direction = direction;
  if (direction == MapperDirection::kClip2Nerf) {
    c.epochs = 150;
    c.max_lr = 1e-5;
  } else {
    c.epochs = 100;
    c.max_lr = 1e-3;
  }
  return c;
}

std::vector<std::size_t> MapperConfig::LayerDims() const {
  if (direction == MapperDirection::kClip2Nerf) return {clip_dim, hidden_dim, nerf_dim};
  return {nerf_dim, hidden_dim, clip_dim};
}

void MapperConfig::Validate() const {
  auto bad = [](const std::string& what) { Fail(ErrorKind::kValidationError, what); };
  if (n_views && *n_views == 0) bad("n_views must be >= 1");
  if (view_sources.empty()) bad("view_sources must not be empty");
  if (multimodal && caption_repeat == 0) bad("caption_repeat must be >= 1");
  if (batch_size == 0) bad("batch_size must be >= 1");
  if (!(max_lr >= 0.0) || !(weight_decay >= 0.0)) bad("max_lr and weight_decay must be >= 0");
  if (!(pct_start > 0.0 && pct_start < 1.0)) bad("pct_start must be in (0, 1)");
  if (!(div_factor > 1.0) || !(final_div_factor > 1.0)) bad("div factors must be > 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0)) {
    bad("AdamW betas must be in [0, 1) and eps > 0");
  }
  if (clip_dim == 0 || hidden_dim == 0 || nerf_dim == 0) bad("layer dims must be positive");
}

ordered_json MapperConfig::ToJson() const {
  return {{"direction", ToString(direction)},
          {"n_views", n_views ? ordered_json(*n_views) : ordered_json(nullptr)},
          {"view_sources", view_sources.ToString()},
          {"multimodal", multimodal},
          {"caption_repeat", caption_repeat},
          {"epochs", epochs},
          {"max_lr", max_lr},
          {"weight_decay", weight_decay},
          {"batch_size", batch_size},
          {"pct_start", pct_start},
          {"div_factor", div_factor},
          {"final_div_factor", final_div_factor},
          {"beta1", beta1},
          {"beta2", beta2},
          {"adam_eps", adam_eps},
          {"seed", seed},
          {"clip_dim", clip_dim},
          {"hidden_dim", hidden_dim},
          {"nerf_dim", nerf_dim}};
}

MapperConfig MapperConfig::Overlay(MapperConfig c, const ordered_json& j) {
  if (!j.is_object()) Fail(ErrorKind::kValidationError, "mapper config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "direction") c.direction = ParseDirection(value.get<std::string>());
      else if (key == "n_views") c.n_views = value.is_null() ? std::nullopt : std::optional(value.get<std::size_t>());
      else if (key == "view_sources") c.view_sources = ViewSourceSet::Parse(value.get<std::string>());
      else if (key == "multimodal") c.multimodal = value.get<bool>();
      else if (key == "caption_repeat") c.caption_repeat = value.get<std::size_t>();
      else if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "max_lr") c.max_lr = value.get<double>();
      else if (key == "weight_decay") c.weight_decay = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "pct_start") c.pct_start = value.get<double>();
      else if (key == "div_factor") c.div_factor = value.get<double>();
      else if (key == "final_div_factor") c.final_div_factor = value.get<double>();
      else if (key == "beta1") c.beta1 = value.get<double>();
      else if (key == "beta2") c.beta2 = value.get<double>();
      else if (key == "adam_eps") c.adam_eps = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "clip_dim") c.clip_dim = value.get<std::size_t>();
      else if (key == "hidden_dim") c.hidden_dim = value.get<std::size_t>();
      else if (key == "nerf_dim") c.nerf_dim = value.get<std::size_t>();
      else Fail(ErrorKind::kValidationError, "unknown mapper config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kValidationError, std::string("bad mapper config value: ") + e.what());
  }
  return c;
}

MapperConfig MapperConfig::FromJson(const ordered_json& j) {
  MapperDirection direction = MapperDirection::kClip2Nerf;
  if (j.is_object() && j.contains("direction") && j["direction"].is_string()) {
    direction = ParseDirection(j["direction"].get<std::string>());
  }
  return Overlay(Defaults(direction), j);
}

ordered_json TrainingMetadata::ToJson() const {
  auto num = [](double x) { return std::isfinite(x) ? ordered_json(x) : ordered_json(nullptr); };
  return {{"epochs_run", epochs_run},
          {"total_steps", total_steps},
          {"samples_per_epoch", samples_per_epoch},
          {"final_train_loss", num(final_train_loss)},
          {"final_val_loss", num(final_val_loss)},
          {"best_val_loss", num(best_val_loss)},
          {"best_epoch", best_epoch},
          {"dataset_fingerprint", dataset_fingerprint}};
}

TrainingMetadata TrainingMetadata::FromJson(const ordered_json& j) {
  auto num = [&](const char* key) {
    const auto& v = j.at(key);
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  TrainingMetadata m;
  m.epochs_run = j.at("epochs_run").get<std::size_t>();
  m.total_steps = j.at("total_steps").get<std::size_t>();
  m.samples_per_epoch = j.at("samples_per_epoch").get<std::size_t>();
  m.final_train_loss = num("final_train_loss");
  m.final_val_loss = num("final_val_loss");
  m.best_val_loss = num("best_val_loss");
  m.best_epoch = j.at("best_epoch").get<std::size_t>();
  m.dataset_fingerprint = j.at("dataset_fingerprint").get<std::uint64_t>();
  return m;
}

MlpParams InitParams(const std::vector<std::size_t>& layer_dims, std::uint64_t seed) {
  auto params = MlpParams::Zeros(layer_dims);
  Xoshiro256 rng(DeriveSeed(seed, kInitStream));
  for (auto& w : params.weights) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.cols()));
    for (float& x : w.values()) x = static_cast<float>((2.0 * rng.Uniform() - 1.0) * bound);
  }
  return params;
}

MlpParams InitParams(MapperDirection direction, std::uint64_t seed) {
  return InitParams(MapperConfig::Defaults(direction).LayerDims(), seed);
}

namespace {

std::vector<Vector> TrainingViews(const ObjectRecord& r, const MapperConfig& config) {
  std::size_t n = 0;
  if (config.n_views) {
    n = *config.n_views;
  } else {
    for (const auto& v : r.views) n += config.view_sources.Contains(v.source) ? 1 : 0;
  }
  return SelectViews(r, n, config.view_sources, config.seed);
}

void AppendRow(std::vector<float>& dst, const Vector& v) {
  dst.insert(dst.end(), v.begin(), v.end());
}

}  // namespace

SamplePool BuildSamplePool(const std::vector<ObjectRecord>& records, const MapperConfig& config) {
  const auto dims = config.LayerDims();
  const std::size_t in_dim = dims.front();
  const std::size_t out_dim = dims.back();
  std::vector<float> inputs;
  std::vector<float> targets;
  SamplePool pool;

  for (const auto& r : records) {
    if (r.nerf_embedding.dim() != config.nerf_dim) {
      Fail(ErrorKind::kDimensionMismatch, "record '" + r.id + "' NeRF embedding is " +
                                              std::to_string(r.nerf_embedding.dim()) +
                                              "-d, config expects " +
                                              std::to_string(config.nerf_dim));
    }
    const auto views = TrainingViews(r, config);
    if (config.direction == MapperDirection::kClip2Nerf) {
      for (const auto& v : views) {
        AppendRow(inputs, v);
        AppendRow(targets, r.nerf_embedding);
        pool.record_ids.push_back(r.id);
      }
      if (config.multimodal) {
        if (!r.caption_embedding) {
          Fail(ErrorKind::kMissingCaption, "record '" + r.id + "' has no caption embedding");
        }
        for (std::size_t k = 0; k < config.caption_repeat; ++k) {
          AppendRow(inputs, *r.caption_embedding);
          AppendRow(targets, r.nerf_embedding);
          pool.record_ids.push_back(r.id);
        }
      }
    } else {
      const auto stacked = StackRows<float>(views);
      AppendRow(inputs, r.nerf_embedding);
      AppendRow(targets, MeanRows(stacked));
      pool.record_ids.push_back(r.id);
    }
  }
  const std::size_t n = pool.record_ids.size();
  if (n > 0 && (inputs.size() != n * in_dim || targets.size() != n * out_dim)) {
    Fail(ErrorKind::kDimensionMismatch, "embedding dims do not match the mapper config");
  }
  pool.inputs = Matrix(n, in_dim, std::move(inputs));
  pool.targets = Matrix(n, out_dim, std::move(targets));
  return pool;
}

double PoolLoss(const MlpParams& params, const SamplePool& pool) {
  const std::size_t n = pool.inputs.rows();
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (std::size_t start = 0; start < n; start += kEvalBatch) {
    const std::size_t end = std::min(n, start + kEvalBatch);
    Matrix batch(end - start, pool.inputs.cols());
    for (std::size_t i = start; i < end; ++i) {
      std::copy(pool.inputs.row(i).begin(), pool.inputs.row(i).end(), batch.row(i - start).begin());
    }
    const Matrix out = MlpInfer(params, batch);
    for (std::size_t i = start; i < end; ++i) {
      total += 1.0 - CosineSimilarity<float>(out.row(i - start), pool.targets.row(i));
    }
  }
  return total / static_cast<double>(n);
}

namespace {

std::uint64_t Fingerprint(const SamplePool& pool) {
  std::string bytes;
  AppendF32(bytes, pool.inputs.values());
  AppendF32(bytes, pool.targets.values());
  return Crc64(bytes);
}

TrainResult Train(const Dataset& dataset, const MapperConfig& config,
                  const EpochCallback& on_epoch) {
  config.Validate();
  if (dataset.nerf_dim != config.nerf_dim || dataset.clip_dim != config.clip_dim) {
    Fail(ErrorKind::kConfigMismatch,
         "dataset dims " + std::to_string(dataset.clip_dim) + "/" +
             std::to_string(dataset.nerf_dim) + " differ from config " +
             std::to_string(config.clip_dim) + "/" + std::to_string(config.nerf_dim));
  }
  if (config.multimodal && config.direction != MapperDirection::kClip2Nerf) {
    Fail(ErrorKind::kConfigMismatch, "multimodal training applies to clip2nerf only");
  }
  const auto train_records = RecordsInSplit(dataset, Split::kTrain);
  if (train_records.empty()) Fail(ErrorKind::kEmptyDataset, "training split is empty");
  const auto val_records = RecordsInSplit(dataset, Split::kVal);

  const SamplePool train = BuildSamplePool(train_records, config);
  const SamplePool val = BuildSamplePool(val_records, config);
  const std::size_t n = train.inputs.rows();
  const std::size_t batch = config.batch_size;
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;

  TrainResult result;
  Checkpoint& cp = result.checkpoint;
  cp.config = config;
  cp.params = InitParams(config.LayerDims(), config.seed);
  cp.metadata.samples_per_epoch = n;
  cp.metadata.total_steps = config.epochs * steps_per_epoch;
  cp.metadata.dataset_fingerprint = Fingerprint(train);

  MlpParams params = cp.params;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  cp.metadata.final_train_loss = PoolLoss(params, train);
  cp.metadata.final_val_loss = PoolLoss(params, val);
  cp.metadata.best_val_loss = cp.metadata.final_val_loss;

  if (config.epochs > 0) {
    OneCycleSchedule schedule{config.max_lr, cp.metadata.total_steps, config.pct_start,
                              config.div_factor, config.final_div_factor};
    auto state = InitAdamW(params, config.beta1, config.beta2, config.adam_eps);
    Xoshiro256 shuffle_rng(DeriveSeed(config.seed, kShuffleStream));
    const std::size_t in_dim = train.inputs.cols();
    const std::size_t out_dim = train.targets.cols();
    std::size_t step = 0;
    bool have_best = !val_records.empty();

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
      const auto order = Permutation(n, shuffle_rng);
      double loss_sum = 0.0;
      double lr = 0.0;
      for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t end = std::min(n, start + batch);
        const std::size_t rows = end - start;
        Matrix x(rows, in_dim);
        Matrix y(rows, out_dim);
        for (std::size_t i = 0; i < rows; ++i) {
          const std::size_t src = order[start + i];
          std::copy(train.inputs.row(src).begin(), train.inputs.row(src).end(), x.row(i).begin());
          std::copy(train.targets.row(src).begin(), train.targets.row(src).end(), y.row(i).begin());
        }
        const auto fwd = MlpForward(params, x);
        Matrix grad(rows, out_dim);
        const double scale = 1.0 / static_cast<double>(rows);
        for (std::size_t i = 0; i < rows; ++i) {
          const auto loss = CosineLossAndGrad<float>(fwd.output.row(i), y.row(i));
          loss_sum += loss.loss;
          auto dst = grad.row(i);
          for (std::size_t j = 0; j < out_dim; ++j) {
            dst[j] = static_cast<float>(static_cast<double>(loss.grad[j]) * scale);
          }
        }
        const auto grads = MlpBackward(params, fwd.cache, grad);
        lr = OneCycleLr(schedule, step);
        AdamWStep(params, grads, state, lr, config.weight_decay);
        ++step;
      }

      EpochStats stats;
      stats.epoch = epoch;
      stats.steps = step;
      stats.train_loss = loss_sum / static_cast<double>(n);
      stats.val_loss = val_records.empty() ? nan : PoolLoss(params, val);
      stats.last_lr = lr;
      result.trace.push_back(stats);
      if (on_epoch) on_epoch(stats);

      if (have_best && stats.val_loss < cp.metadata.best_val_loss) {
        cp.metadata.best_val_loss = stats.val_loss;
        cp.metadata.best_epoch = epoch;
        cp.params = params;
      }
    }
    cp.metadata.epochs_run = config.epochs;
    cp.metadata.final_train_loss = result.trace.back().train_loss;
    cp.metadata.final_val_loss = result.trace.back().val_loss;
    if (!have_best) {
      cp.params = params;
      cp.metadata.best_epoch = config.epochs;
    }
  }
  cp.final_params = std::move(params);
  return result;
}

}  // namespace

TrainResult TrainClip2Nerf(const Dataset& dataset, const MapperConfig& config,
                           const EpochCallback& on_epoch) {
  if (config.direction != MapperDirection::kClip2Nerf) {
    Fail(ErrorKind::kConfigMismatch, "TrainClip2Nerf needs a clip2nerf config");
  }
  return Train(dataset, config, on_epoch);
}

TrainResult TrainNerf2Clip(const Dataset& dataset, const MapperConfig& config,
                           const EpochCallback& on_epoch) {
  if (config.direction != MapperDirection::kNerf2Clip) {
    Fail(ErrorKind::kConfigMismatch, "TrainNerf2Clip needs a nerf2clip config");
  }
  return Train(dataset, config, on_epoch);
}

TrainResult TrainMapper(const Dataset& dataset, const MapperConfig& config,
                        const EpochCallback& on_epoch) {
  return config.direction == MapperDirection::kClip2Nerf ? TrainClip2Nerf(dataset, config, on_epoch)
                                                         : TrainNerf2Clip(dataset, config, on_epoch);
}

Matrix InferBatch(const Checkpoint& checkpoint, const Matrix& inputs) {
  return MlpInfer(checkpoint.params, inputs);
}

Vector Infer(const Checkpoint& checkpoint, const Vector& input) {
  const Matrix out = InferBatch(checkpoint, Matrix(1, input.dim(), input.raw()));
  return Vector(std::vector<float>(out.values().begin(), out.values().end()));
}

}  // namespace nfb
