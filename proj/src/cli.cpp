#include "nfb/cli.h"

#include <algorithm>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "nfb/binary_io.h"
#include "nfb/dataset.h"
#include "nfb/eval.h"
#include "nfb/gallery.h"
#include "nfb/mapper.h"
#include "nfb/parallel.h"
#include "nfb/report.h"

namespace nfb {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

int ExitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIoError:
      return kExitIo;
    case ErrorKind::kValidationError:
    case ErrorKind::kOutOfRange:
    case ErrorKind::kConfigMismatch:
      return kExitUsage;
    default:
      return kExitProtocol;
  }
}

namespace {

[[noreturn]] void Usage(const std::string& message) { Fail(ErrorKind::kValidationError, message); }

// Collects one subcommand's settings. Each flag writes to a JSON pointer in
// the resolved config; defaults < --config file < flags.
class Settings {
 public:
  explicit Settings(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON file with settings (same layout as the echo)");
  }

  template <typename T>
  CLI::Option* Option(const std::string& flags, const std::string& key, const std::string& help,
                      std::optional<T> def = std::nullopt) {
    auto holder = std::make_shared<T>(def.value_or(T{}));
    CLI::Option* opt = app_->add_option(flags, *holder, help);
    if (def) defaults_[ordered_json::json_pointer(key)] = *def;
    Register(key);
    apply_.push_back([this, opt, holder, key] {
      if (opt->count() > 0) resolved_[ordered_json::json_pointer(key)] = *holder;
    });
    return opt;
  }

  CLI::Option* Flag(const std::string& flags, const std::string& key, const std::string& help,
                    bool def = false) {
    auto holder = std::make_shared<bool>(def);
    CLI::Option* opt = app_->add_flag(flags, *holder, help);
    defaults_[ordered_json::json_pointer(key)] = def;
    Register(key);
    apply_.push_back([this, opt, holder, key] {
      if (opt->count() > 0) resolved_[ordered_json::json_pointer(key)] = *holder;
    });
    return opt;
  }

  ordered_json Resolve(const std::string& command) {
    resolved_ = defaults_;
    if (!config_path_.empty()) {
      if (!fs::exists(config_path_)) Usage("config file not found: " + config_path_);
      ordered_json file;
      try {
        file = ordered_json::parse(ReadFile(config_path_));
      } catch (const nlohmann::json::parse_error& e) {
        Usage("config file is not valid JSON: " + std::string(e.what()));
      }
      if (!file.is_object()) Usage("config file must hold a JSON object");
      for (const auto& [key, value] : file.items()) {
        if (key == "command") continue;
        if (!known_.contains(key)) Usage("unknown config key '" + key + "'");
        if (value.is_object() && resolved_.contains(key) && resolved_[key].is_object()) {
          for (const auto& [sub, v] : value.items()) resolved_[key][sub] = v;
        } else {
          resolved_[key] = value;
        }
      }
    }
    for (auto& apply : apply_) apply();
    ordered_json out = {{"command", command}};
    for (const auto& [key, value] : resolved_.items()) out[key] = value;
    return out;
  }

 private:
  void Register(const std::string& key) {
    const auto end = key.find('/', 1);
    known_.insert(key.substr(1, end == std::string::npos ? std::string::npos : end - 1));
  }

  CLI::App* app_;
  std::string config_path_;
  ordered_json defaults_ = ordered_json::object();
  ordered_json resolved_ = ordered_json::object();
  std::set<std::string> known_;
  std::vector<std::function<void()>> apply_;
};

template <typename T>
std::optional<T> Get(const ordered_json& j, const std::string& key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  try {
    return j[key].get<T>();
  } catch (const nlohmann::json::exception& e) {
    Usage("setting '" + key + "': " + e.what());
  }
}

template <typename T>
T Require(const ordered_json& j, const std::string& key, const std::string& flag) {
  auto v = Get<T>(j, key);
  if (!v) Usage("missing " + flag);
  return *v;
}

fs::path ExistingDir(const ordered_json& j, const std::string& key, const std::string& flag) {
  const fs::path p = Require<std::string>(j, key, flag);
  if (!fs::is_directory(p)) Usage(flag + ": directory not found: " + p.string());
  return p;
}

fs::path ExistingFile(const ordered_json& j, const std::string& key, const std::string& flag) {
  const fs::path p = Require<std::string>(j, key, flag);
  if (!fs::is_regular_file(p)) Usage(flag + ": file not found: " + p.string());
  return p;
}

std::vector<ObjectRecord> RecordsFor(const Dataset& d, const std::string& split) {
  if (split == "all") return d.records;
  return RecordsInSplit(d, ParseSplit(split));
}

void EchoConfig(std::ostream& err, const ordered_json& resolved) {
  err << "resolved config: " << resolved.dump() << "\n";
}

// ---- synth ----------------------------------------------------------------

struct SynthCommand {
  explicit SynthCommand(CLI::App* app) : settings(app) {
    const SynthSpec d;
    settings.Option<std::string>("-o,--out", "/out", "output dataset directory");
    settings.Option<std::size_t>("--classes", "/spec/num_classes", "number of classes", d.num_classes);
    settings.Option<std::size_t>("--per-class", "/spec/objects_per_class", "objects per class",
                                 d.objects_per_class);
    settings.Option<std::size_t>("--views", "/spec/views_per_object", "ground-truth views per object",
                                 d.views_per_object);
    settings.Option<std::size_t>("--rendered", "/spec/rendered_per_object",
                                 "rendered views per object", d.rendered_per_object);
    settings.Option<std::size_t>("--generated", "/spec/generated_per_object",
                                 "generated views per object", d.generated_per_object);
    settings.Option<double>("--sigma", "/spec/noise_sigma", "noise standard deviation", d.noise_sigma);
    settings.Option<std::uint64_t>("--seed", "/spec/seed", "generator seed", d.seed);
    settings.Option<std::size_t>("--nerf-dim", "/spec/nerf_dim", "NeRF embedding dim", d.nerf_dim);
    settings.Option<std::size_t>("--clip-dim", "/spec/clip_dim", "CLIP embedding dim", d.clip_dim);
  }

  int Run(std::ostream& out, std::ostream& err) {
    ordered_json r = settings.Resolve("synth");
    const fs::path dir = Require<std::string>(r, "out", "--out");
    SynthSpec spec;
    const auto& s = r["spec"];
    if (!s.is_object()) Usage("'spec' must be an object");
    for (const auto& [key, value] : s.items()) {
      try {
        if (key == "generator") continue;
        if (key == "num_classes") spec.num_classes = value.get<std::size_t>();
        else if (key == "objects_per_class") spec.objects_per_class = value.get<std::size_t>();
        else if (key == "views_per_object") spec.views_per_object = value.get<std::size_t>();
        else if (key == "rendered_per_object") spec.rendered_per_object = value.get<std::size_t>();
        else if (key == "generated_per_object") spec.generated_per_object = value.get<std::size_t>();
        else if (key == "noise_sigma") spec.noise_sigma = value.get<double>();
        else if (key == "seed") spec.seed = value.get<std::uint64_t>();
        else if (key == "nerf_dim") spec.nerf_dim = value.get<std::size_t>();
        else if (key == "clip_dim") spec.clip_dim = value.get<std::size_t>();
        else Usage("unknown spec key '" + key + "'");
      } catch (const nlohmann::json::exception& e) {
        Usage("spec key '" + key + "': " + e.what());
      }
    }
    spec.Validate();
    r["spec"] = spec.ToJson();
    EchoConfig(err, r);
    const Dataset d = GenerateSynthetic(spec);
    SaveDatasetDir(d, dir);
    out << ordered_json({{"out", dir.string()},
                         {"records", d.records.size()},
                         {"classes", d.classes.size()}})
               .dump()
        << "\n";
    return kExitOk;
  }

  Settings settings;
};

// ---- train ----------------------------------------------------------------

struct TrainCommand {
  explicit TrainCommand(CLI::App* app) : settings(app) {
    settings.Option<std::string>("-d,--dataset", "/dataset", "dataset directory");
    settings.Option<std::string>("-o,--out", "/out", "checkpoint path");
    settings.Option<std::string>("--trace", "/trace", "loss-trace CSV (default <out>.trace.csv)");
    settings.Option<std::string>("--direction", "/mapper/direction", "clip2nerf | nerf2clip");
    settings.Option<std::size_t>("--epochs", "/mapper/epochs", "training epochs");
    settings.Option<double>("--max-lr", "/mapper/max_lr", "one-cycle peak learning rate");
    settings.Option<double>("--weight-decay", "/mapper/weight_decay", "AdamW weight decay");
    settings.Option<std::size_t>("--batch-size", "/mapper/batch_size", "mini-batch size");
    settings.Option<double>("--pct-start", "/mapper/pct_start", "warm-up fraction");
    settings.Option<double>("--div-factor", "/mapper/div_factor", "initial lr = max_lr / div");
    settings.Option<double>("--final-div-factor", "/mapper/final_div_factor",
                            "final lr = max_lr / final_div");
    settings.Option<double>("--beta1", "/mapper/beta1", "AdamW beta1");
    settings.Option<double>("--beta2", "/mapper/beta2", "AdamW beta2");
    settings.Option<double>("--adam-eps", "/mapper/adam_eps", "AdamW epsilon");
    settings.Option<std::string>("--n-views", "/mapper/n_views", "views per object or 'all'");
    settings.Option<std::string>("--view-sources", "/mapper/view_sources",
                                 "comma list of gt, rendered, generated");
    settings.Flag("--multimodal", "/mapper/multimodal", "add caption samples (clip2nerf)");
    settings.Option<std::size_t>("--caption-repeat", "/mapper/caption_repeat",
                                 "caption copies per object when multimodal");
    settings.Option<std::size_t>("--hidden-dim", "/mapper/hidden_dim", "hidden layer width");
    settings.Option<std::uint64_t>("--seed", "/mapper/seed", "seed for init, views and shuffling");
    settings.Option<std::size_t>("--syn2real-synthetic", "/syn2real/synthetic",
                                 "synthetic views kept per object");
    settings.Option<std::size_t>("--syn2real-generated", "/syn2real/generated",
                                 "generated views kept per object");
  }

  int Run(std::ostream& out, std::ostream& err) {
    ordered_json r = settings.Resolve("train");
    const fs::path dataset_dir = ExistingDir(r, "dataset", "--dataset");
    const fs::path ckpt = Require<std::string>(r, "out", "--out");
    const fs::path trace = Get<std::string>(r, "trace").value_or(ckpt.string() + ".trace.csv");
    r["trace"] = trace.string();

    Dataset dataset = LoadDatasetDir(dataset_dir);

    ordered_json m = r.contains("mapper") ? r["mapper"] : ordered_json::object();
    if (m.contains("n_views") && m["n_views"].is_string()) {
      const auto text = m["n_views"].get<std::string>();
      if (text == "all") {
        m["n_views"] = nullptr;
      } else {
        try {
          m["n_views"] = std::stoull(text);
        } catch (const std::exception&) {
          Usage("--n-views must be a positive integer or 'all'");
        }
      }
    }
    MapperDirection direction = MapperDirection::kClip2Nerf;
    if (auto d = Get<std::string>(m, "direction")) direction = ParseDirection(*d);
    MapperConfig base = MapperConfig::Defaults(direction);
    base.clip_dim = dataset.clip_dim;
    base.nerf_dim = dataset.nerf_dim;
    const MapperConfig config = MapperConfig::Overlay(base, m);
    config.Validate();
    r["mapper"] = config.ToJson();

    if (r.contains("syn2real") && !r["syn2real"].is_null()) {
      const auto& s = r["syn2real"];
      auto syn = Get<std::size_t>(s, "synthetic");
      auto gen = Get<std::size_t>(s, "generated");
      if (!syn || !gen) Usage("syn2real needs both --syn2real-synthetic and --syn2real-generated");
      dataset.records = ComposeSyn2Real(dataset.records, *syn, *gen, config.seed);
    } else {
      r["syn2real"] = nullptr;
    }
    EchoConfig(err, r);

    auto progress = [&](const EpochStats& e) {
      err << "epoch " << e.epoch << "/" << config.epochs << " train_loss " << e.train_loss
          << " val_loss " << e.val_loss << " lr " << e.last_lr << "\n";
    };
    const TrainResult result = TrainMapper(dataset, config, progress);
    SaveCheckpoint(result.checkpoint, ckpt);

    std::string csv = "epoch,train_loss,val_loss,lr\n";
    for (const auto& e : result.trace) {
      char line[160];
      std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.9g\n", e.epoch, e.train_loss, e.val_loss,
                    e.last_lr);
      csv += line;
    }
    WriteFile(trace, csv);
    WriteFile(ckpt.string() + ".config.json", r.dump(1) + "\n");
    out << ordered_json({{"checkpoint", ckpt.string()},
                         {"metadata", result.checkpoint.metadata.ToJson()}})
               .dump()
        << "\n";
    return kExitOk;
  }

  Settings settings;
};

// ---- eval -----------------------------------------------------------------

std::vector<std::string> SplitList(const ordered_json& j) {
  std::vector<std::string> out;
  if (j.is_null()) return out;
  if (j.is_array()) {
    for (const auto& v : j) out.push_back(v.is_string() ? v.get<std::string>() : v.dump());
  } else {
    out.push_back(j.is_string() ? j.get<std::string>() : j.dump());
  }
  return out;
}

std::size_t ParseCount(const std::string& text, const std::string& flag) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used != text.size() || v == 0) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    Usage(flag + " expects positive integers or 'all', got '" + text + "'");
  }
}

// Largest n every record can supply from the given sources.
std::size_t AvailableViews(std::span<const ObjectRecord> records, ViewSourceSet sources) {
  std::size_t n = std::numeric_limits<std::size_t>::max();
  for (const auto& r : records) {
    std::size_t c = 0;
    for (const auto& v : r.views) c += sources.Contains(v.source) ? 1 : 0;
    n = std::min(n, c);
  }
  return records.empty() ? 0 : n;
}

struct EvalCommand {
  explicit EvalCommand(CLI::App* app) : settings(app) {
    app->add_option("protocol", protocol,
                    "zeroshot | zeroshot-baseline | retrieval-images | retrieval-text")
        ->required();
    settings.Option<std::string>("-d,--dataset", "/dataset", "dataset directory");
    settings.Option<std::vector<std::string>>("--ckpt", "/checkpoints", "checkpoint (repeatable)")
        ->delimiter(',');
    settings.Option<std::vector<std::string>>("--method", "/methods", "row label per checkpoint")
        ->delimiter(',');
    settings.Option<std::string>("--split", "/split", "train | val | test | all",
                                 std::optional<std::string>("test"));
    settings.Option<std::vector<std::string>>("--query-views,--views", "/query_views",
                                              "views per query, comma list ('all' allowed)",
                                              std::optional<std::vector<std::string>>({"1"}))
        ->delimiter(',');
    settings.Option<std::string>("--query-sources", "/query_sources",
                                 "view sources for image queries",
                                 std::optional<std::string>("gt"));
    settings.Option<std::string>("--baseline-sources", "/baseline_sources",
                                 "view sources for the zero-shot baseline",
                                 std::optional<std::string>("rendered"));
    settings.Option<std::string>("--query-dataset", "/query_dataset",
                                 "second dataset supplying image queries");
    settings.Option<std::string>("--query-split", "/query_split", "split of the query dataset",
                                 std::optional<std::string>("all"));
    settings.Option<std::uint64_t>("--seed", "/seed", "seed for query view choice",
                                   std::optional<std::uint64_t>(0));
    settings.Option<std::size_t>("--top-k", "/top_k", "neighbors kept per query",
                                 std::optional<std::size_t>(10));
    settings.Option<std::string>("-o,--out", "/out", "report directory",
                                 std::optional<std::string>("."));
    settings.Option<std::string>("--name", "/name", "report base name (default: protocol)");
  }

  int Run(std::ostream& out, std::ostream& err) {
    ordered_json r = settings.Resolve("eval");
    const Protocol p = ParseProtocol(protocol);
    r["protocol"] = ToString(p);
    const fs::path dataset_dir = ExistingDir(r, "dataset", "--dataset");
    const std::string name = Get<std::string>(r, "name").value_or(protocol);
    r["name"] = name;
    const auto split = Require<std::string>(r, "split", "--split");
    const auto ckpt_paths = SplitList(r.value("checkpoints", ordered_json()));
    const auto methods = SplitList(r.value("methods", ordered_json()));
    const auto view_list = SplitList(r["query_views"]);
    if (view_list.empty()) Usage("--query-views must not be empty");
    EvalOptions base;
    base.seed = Require<std::uint64_t>(r, "seed", "--seed");
    base.top_k = Require<std::size_t>(r, "top_k", "--top-k");
    if (base.top_k == 0) Usage("--top-k must be >= 1");

    const bool needs_ckpt = p != Protocol::kZeroShotBaseline;
    if (needs_ckpt && ckpt_paths.empty()) Usage("missing --ckpt");
    for (const auto& c : ckpt_paths) {
      if (!fs::is_regular_file(c)) Usage("--ckpt: file not found: " + c);
    }
    if (!methods.empty() && methods.size() != (needs_ckpt ? ckpt_paths.size() : 1)) {
      Usage("--method needs one label per checkpoint");
    }
    EchoConfig(err, r);

    const Dataset dataset = LoadDatasetDir(dataset_dir);
    const auto records = RecordsFor(dataset, split);
    std::vector<Checkpoint> checkpoints;
    for (const auto& c : ckpt_paths) checkpoints.push_back(LoadCheckpoint(c));
    auto method_for = [&](std::size_t i) { return methods.empty() ? std::string() : methods[i]; };

    std::vector<EvalReport> runs;
    switch (p) {
      case Protocol::kZeroShot: {
        const Gallery anchors = LabelGalleryFromAnchors(dataset.anchors);
        for (std::size_t i = 0; i < checkpoints.size(); ++i) {
          EvalOptions o = base;
          o.method = method_for(i);
          runs.push_back(EvalZeroShot(records, checkpoints[i], anchors, o));
        }
        break;
      }
      case Protocol::kZeroShotBaseline: {
        const Gallery anchors = LabelGalleryFromAnchors(dataset.anchors);
        const auto sources = ViewSourceSet::Parse(r["baseline_sources"].get<std::string>());
        for (const auto& v : view_list) {
          const std::size_t n =
              v == "all" ? AvailableViews(records, sources) : ParseCount(v, "--query-views");
          EvalOptions o = base;
          o.method = method_for(0);
          runs.push_back(EvalClipBaselineZeroShot(records, anchors, n, o, sources));
        }
        break;
      }
      case Protocol::kRetrievalImages: {
        std::optional<Dataset> query_dataset;
        std::vector<ObjectRecord> queries;
        if (auto q = Get<std::string>(r, "query_dataset")) {
          if (!fs::is_directory(*q)) Usage("--query-dataset: directory not found: " + *q);
          query_dataset = LoadDatasetDir(*q);
          queries = RecordsFor(*query_dataset, r["query_split"].get<std::string>());
          if (queries.empty()) Fail(ErrorKind::kEmptyInput, "query dataset split has no records");
        }
        const auto sources = ViewSourceSet::Parse(r["query_sources"].get<std::string>());
        const auto& query_pool = query_dataset ? queries : records;
        for (std::size_t i = 0; i < checkpoints.size(); ++i) {
          for (const auto& v : view_list) {
            RetrievalOptions o;
            o.seed = base.seed;
            o.top_k = base.top_k;
            o.method = method_for(i);
            o.query_sources = sources;
            o.exclude_self = !query_dataset.has_value();
            o.n_query_views =
                v == "all" ? AvailableViews(query_pool, sources) : ParseCount(v, "--query-views");
            runs.push_back(EvalRetrievalImages(records, checkpoints[i], o, queries));
          }
        }
        break;
      }
      case Protocol::kRetrievalText: {
        for (std::size_t i = 0; i < checkpoints.size(); ++i) {
          EvalOptions o = base;
          o.method = method_for(i);
          runs.push_back(EvalRetrievalText(records, checkpoints[i], o));
        }
        break;
      }
    }
    for (auto& run : runs) run.config["invocation"] = r;
    const fs::path out_dir = Require<std::string>(r, "out", "--out");
    WriteReports(runs, out_dir, name);
    out << ReportTableCsv(runs);
    err << "wrote " << (out_dir / (name + ".report.json")).string() << "\n";
    return kExitOk;
  }

  Settings settings;
  std::string protocol;
};

// ---- query ----------------------------------------------------------------

struct QueryCommand {
  explicit QueryCommand(CLI::App* app) : settings(app) {
    settings.Option<std::string>("--ckpt", "/checkpoint", "checkpoint");
    settings.Option<std::string>("--gallery", "/gallery", "exported gallery directory");
    settings.Option<std::string>("-d,--dataset", "/dataset",
                                 "dataset for the gallery and/or --record");
    settings.Option<std::string>("--split", "/split", "dataset split for the gallery",
                                 std::optional<std::string>("all"));
    settings.Option<std::string>("--input", "/input", "embedding file (one row per view)");
    settings.Option<std::string>("--query-id", "/query_id", "id of the --input query");
    settings.Option<std::string>("--record", "/record", "query with a dataset record");
    settings.Option<std::size_t>("--query-views", "/query_views", "views taken from --record",
                                 std::optional<std::size_t>(1));
    settings.Option<std::string>("--query-sources", "/query_sources", "view sources for --record",
                                 std::optional<std::string>("gt"));
    settings.Option<std::size_t>("-k,--k", "/k", "neighbors to return",
                                 std::optional<std::size_t>(10));
    settings.Flag("--exclude-self", "/exclude_self", "drop the query's own id from the results");
    settings.Option<std::string>("--export-predicted", "/export_predicted",
                                 "write the mapped query embedding to this file");
    settings.Option<std::string>("--save-gallery", "/save_gallery",
                                 "export the gallery built from --dataset");
    settings.Option<std::uint64_t>("--seed", "/seed", "seed for view choice",
                                   std::optional<std::uint64_t>(0));
  }

  int Run(std::ostream& out, std::ostream& err) {
    ordered_json r = settings.Resolve("query");
    const fs::path ckpt_path = ExistingFile(r, "checkpoint", "--ckpt");
    const auto gallery_dir = Get<std::string>(r, "gallery");
    const auto dataset_dir = Get<std::string>(r, "dataset");
    const auto input = Get<std::string>(r, "input");
    const auto record_id = Get<std::string>(r, "record");
    if (!gallery_dir && !dataset_dir) Usage("need --gallery or --dataset");
    if (input.has_value() == record_id.has_value()) Usage("need exactly one of --input, --record");
    if (record_id && !dataset_dir) Usage("--record needs --dataset");
    if (gallery_dir && !fs::is_directory(*gallery_dir)) Usage("--gallery: directory not found");
    if (dataset_dir && !fs::is_directory(*dataset_dir)) Usage("--dataset: directory not found");
    if (input && !fs::is_regular_file(*input)) Usage("--input: file not found: " + *input);
    const auto k = Require<std::size_t>(r, "k", "--k");
    if (k == 0) Usage("--k must be >= 1");
    const auto seed = Require<std::uint64_t>(r, "seed", "--seed");

    const Checkpoint cp = LoadCheckpoint(ckpt_path);
    const bool c2n = cp.config.direction == MapperDirection::kClip2Nerf;
    const std::size_t in_dim = cp.config.LayerDims().front();

    std::optional<Dataset> dataset;
    if (dataset_dir) dataset = LoadDatasetDir(*dataset_dir);
    Gallery gallery;
    if (gallery_dir) {
      gallery = Gallery::Import(*gallery_dir);
    } else if (c2n) {
      gallery = NerfGallery(RecordsFor(*dataset, r["split"].get<std::string>()));
    } else {
      gallery = LabelGalleryFromAnchors(dataset->anchors);
    }

    std::vector<Vector> rows;
    std::optional<std::string> query_id = Get<std::string>(r, "query_id");
    if (input) {
      const Matrix m = ReadEmbeddingFile(*input, in_dim);
      for (std::size_t i = 0; i < m.rows(); ++i) {
        rows.emplace_back(std::vector<float>(m.row(i).begin(), m.row(i).end()));
      }
    } else {
      auto it = std::find_if(dataset->records.begin(), dataset->records.end(),
                             [&](const ObjectRecord& rec) { return rec.id == *record_id; });
      if (it == dataset->records.end()) {
        Fail(ErrorKind::kEmptyInput, "record '" + *record_id + "' not in the dataset");
      }
      query_id = it->id;
      if (c2n) {
        rows = SelectViews(*it, r["query_views"].get<std::size_t>(),
                           ViewSourceSet::Parse(r["query_sources"].get<std::string>()), seed);
      } else {
        rows.push_back(it->nerf_embedding);
      }
    }
    EchoConfig(err, r);

    const Vector predicted = MeanRows(InferBatch(cp, StackRows<float>(rows)));
    std::optional<std::string_view> exclude;
    if (r["exclude_self"].get<bool>()) {
      if (!query_id) Usage("--exclude-self needs --record or --query-id");
      exclude = *query_id;
    }
    const QueryResult result = TopK(gallery, predicted, k, exclude);

    if (auto path = Get<std::string>(r, "export_predicted")) {
      WriteEmbeddingFile(*path, Matrix(1, predicted.dim(), predicted.raw()));
    }
    if (auto path = Get<std::string>(r, "save_gallery")) gallery.Export(*path);

    out << ordered_json({{"config", r}}).dump() << "\n";
    for (std::size_t i = 0; i < result.size(); ++i) {
      out << ordered_json({{"rank", i + 1},
                           {"id", result[i].id},
                           {"label", result[i].label},
                           {"score", result[i].score}})
                 .dump()
          << "\n";
    }
    return kExitOk;
  }

  Settings settings;
};

// ---- inspect --------------------------------------------------------------

ordered_json InspectDataset(const fs::path& dir) {
  const Dataset d = LoadDatasetDir(dir);
  std::size_t splits[3] = {0, 0, 0};
  std::size_t sources[3] = {0, 0, 0};
  std::size_t captions = 0;
  for (const auto& r : d.records) {
    ++splits[static_cast<int>(r.split)];
    for (const auto& v : r.views) ++sources[static_cast<int>(v.source)];
    captions += r.caption_embedding ? 1 : 0;
  }
  return {{"kind", "dataset"},
          {"nerf_dim", d.nerf_dim},
          {"clip_dim", d.clip_dim},
          {"classes", d.classes.size()},
          {"anchors", d.anchors.size()},
          {"records", d.records.size()},
          {"splits", {{"train", splits[0]}, {"val", splits[1]}, {"test", splits[2]}}},
          {"views", {{"gt", sources[0]}, {"rendered", sources[1]}, {"generated", sources[2]}}},
          {"captions", captions},
          {"provenance", d.provenance}};
}

ordered_json InspectPath(const fs::path& path) {
  if (fs::is_directory(path)) {
    if (fs::exists(path / kManifestFileName)) return InspectDataset(path);
    if (fs::exists(path / kGalleryManifestName)) {
      const Gallery g = Gallery::Import(path);
      return {{"kind", "gallery"}, {"entries", g.size()}, {"dim", g.dim()}};
    }
    Usage("no dataset or gallery manifest in " + path.string());
  }
  if (!fs::is_regular_file(path)) Usage("not found: " + path.string());
  const std::string bytes = ReadFile(path);
  if (bytes.starts_with(kCheckpointMagic)) {
    ordered_json header = ReadCheckpointHeader(path);
    const Checkpoint cp = DecodeCheckpoint(bytes);
    return {{"kind", "checkpoint"},
            {"bytes", bytes.size()},
            {"checksum", "ok"},
            {"parameters", cp.params.num_parameters()},
            {"header", std::move(header)}};
  }
  if (bytes.starts_with(kBlobMagic)) {
    CheckBlobHeader(bytes, path.string());
    return {{"kind", "embedding-blob"},
            {"bytes", bytes.size()},
            {"payload_floats", (bytes.size() - kBlobHeaderBytes) / 4}};
  }
  if (path.filename() == kManifestFileName) return InspectDataset(path.parent_path());
  const auto runs = LoadReports(path);
  ordered_json summary = ordered_json::array();
  for (const auto& run : runs) {
    ordered_json metrics = ordered_json::object();
    for (const auto& [k, v] : run.metrics) metrics[k] = v;
    summary.push_back({{"protocol", ToString(run.protocol)},
                       {"method", run.method},
                       {"views", run.views},
                       {"queries", run.queries.size()},
                       {"metrics", std::move(metrics)},
                       {"time_ms", run.timing.total_ms()}});
  }
  return {{"kind", "report"}, {"self_consistent", true}, {"runs", std::move(summary)}};
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Map between NeRF and CLIP embedding spaces, retrieve and classify.", "nfbridge"};
  app.require_subcommand(1);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "worker thread cap (0: all cores)");

  auto* synth_app = app.add_subcommand("synth", "generate a synthetic dataset");
  auto* train_app = app.add_subcommand("train", "train a mapping network");
  auto* eval_app = app.add_subcommand("eval", "run an evaluation protocol");
  auto* query_app = app.add_subcommand("query", "ad-hoc gallery query, JSON lines on stdout");
  auto* inspect_app = app.add_subcommand("inspect", "print dataset, checkpoint or report headers");
  for (auto* sub : {synth_app, train_app, eval_app, query_app, inspect_app}) sub->fallthrough();

  SynthCommand synth(synth_app);
  TrainCommand train(train_app);
  EvalCommand eval(eval_app);
  QueryCommand query(query_app);
  std::string inspect_path;
  inspect_app->add_option("path", inspect_path, "dataset dir, gallery dir, checkpoint or report")
      ->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    SetMaxThreads(threads);
    if (*synth_app) return synth.Run(out, err);
    if (*train_app) return train.Run(out, err);
    if (*eval_app) return eval.Run(out, err);
    if (*query_app) return query.Run(out, err);
    if (*inspect_app) {
      out << InspectPath(inspect_path).dump(2) << "\n";
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return ExitCodeFor(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}

}  // namespace nfb
