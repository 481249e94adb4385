#include "nfb/report.h"

#include <cstdio>

#include "nfb/binary_io.h"
#include "nfb/error.h"
#include "nfb/metrics.h"

namespace nfb {

using nlohmann::ordered_json;

namespace {

constexpr std::pair<Protocol, std::string_view> kProtocolNames[] = {
    {Protocol::kZeroShot, "zeroshot"},
    {Protocol::kZeroShotBaseline, "zeroshot-baseline"},
    {Protocol::kRetrievalImages, "retrieval-images"},
    {Protocol::kRetrievalText, "retrieval-text"},
};

constexpr std::size_t kRecallKs[] = {1, 5, 10};

std::string Percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * fraction);
  return buf;
}

std::string Millis(double ms) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", ms);
  return buf;
}

// Methods are free text; quote when needed.
std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string_view ToString(Protocol protocol) {
  for (const auto& [p, name] : kProtocolNames) {
    if (p == protocol) return name;
  }
  return "unknown";
}

Protocol ParseProtocol(std::string_view text) {
  for (const auto& [p, name] : kProtocolNames) {
    if (name == text) return p;
  }
  Fail(ErrorKind::kValidationError, "unknown protocol '" + std::string(text) +
                                        "' (zeroshot, zeroshot-baseline, retrieval-images, "
                                        "retrieval-text)");
}

bool IsClassification(Protocol protocol) {
  return protocol == Protocol::kZeroShot || protocol == Protocol::kZeroShotBaseline;
}

std::vector<std::string> EvalReport::MetricNames() const {
  if (IsClassification(protocol)) return {"accuracy", "recall@1"};
  std::vector<std::string> names;
  for (auto k : kRecallKs) names.push_back("recall@" + std::to_string(k));
  return names;
}

std::map<std::string, double> EvalReport::ComputeMetrics() const {
  std::vector<RankedLabels> ranked;
  ranked.reserve(queries.size());
  for (const auto& q : queries) {
    RankedLabels r{q.true_label, {}};
    for (const auto& e : q.ranked) r.ranked_labels.push_back(e.label);
    ranked.push_back(std::move(r));
  }
  std::map<std::string, double> out;
  if (IsClassification(protocol)) {
    std::vector<LabelPrediction> predictions;
    for (const auto& q : queries) {
      predictions.push_back({q.true_label, q.ranked.empty() ? std::string() : q.ranked.front().label});
    }
    out["accuracy"] = MulticlassAccuracy(predictions);
    out["recall@1"] = RecallAtK(ranked, 1);
    if (out["accuracy"] != out["recall@1"]) {
      Fail(ErrorKind::kValidationError, "accuracy differs from recall@1 on the anchor gallery");
    }
    return out;
  }
  for (auto k : kRecallKs) out["recall@" + std::to_string(k)] = RecallAtK(ranked, k);
  return out;
}

void EvalReport::Finalize() { metrics = ComputeMetrics(); }

void EvalReport::Verify() const {
  const auto expected = ComputeMetrics();
  for (const auto& [name, value] : expected) {
    auto it = metrics.find(name);
    if (it == metrics.end()) Fail(ErrorKind::kValidationError, "report lacks metric " + name);
    if (it->second != value) {
      Fail(ErrorKind::kValidationError, "metric " + name + " is not reproduced by the query records");
    }
  }
  if (metrics.size() != expected.size()) {
    Fail(ErrorKind::kValidationError, "report carries unexpected metrics");
  }
}

ordered_json EvalReport::ToJson() const {
  ordered_json m = ordered_json::object();
  for (const auto& name : MetricNames()) {
    auto it = metrics.find(name);
    if (it != metrics.end()) m[name] = it->second;
  }
  ordered_json qs = ordered_json::array();
  for (const auto& q : queries) {
    ordered_json ranked = ordered_json::array();
    for (const auto& e : q.ranked) ranked.push_back({{"id", e.id}, {"label", e.label}, {"score", e.score}});
    qs.push_back({{"query_id", q.query_id},
                  {"true_label", q.true_label},
                  {"view_indices", q.view_indices},
                  {"ranked", std::move(ranked)}});
  }
  return {{"protocol", ToString(protocol)},
          {"method", method},
          {"views", views},
          {"config", config},
          {"metrics", std::move(m)},
          {"timing",
           {{"inference_ms_per_query", timing.inference_ms},
            {"search_ms_per_query", timing.search_ms},
            {"total_ms_per_query", timing.total_ms()},
            {"note", timing_note}}},
          {"queries", std::move(qs)}};
}

EvalReport EvalReport::FromJson(const ordered_json& j) {
  EvalReport r;
  try {
    r.protocol = ParseProtocol(j.at("protocol").get<std::string>());
    r.method = j.at("method").get<std::string>();
    r.views = j.at("views").get<std::size_t>();
    r.config = j.at("config");
    for (const auto& [name, value] : j.at("metrics").items()) r.metrics[name] = value.get<double>();
    const auto& t = j.at("timing");
    r.timing.inference_ms = t.at("inference_ms_per_query").get<double>();
    r.timing.search_ms = t.at("search_ms_per_query").get<double>();
    r.timing_note = t.at("note").get<std::string>();
    for (const auto& q : j.at("queries")) {
      QueryRecord rec;
      rec.query_id = q.at("query_id").get<std::string>();
      rec.true_label = q.at("true_label").get<std::string>();
      rec.view_indices = q.at("view_indices").get<std::vector<std::size_t>>();
      for (const auto& e : q.at("ranked")) {
        rec.ranked.push_back(
            {e.at("id").get<std::string>(), e.at("label").get<std::string>(), e.at("score").get<double>()});
      }
      r.queries.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kParseError, std::string("malformed report: ") + e.what());
  }
  r.Verify();
  return r;
}

ordered_json ReportsToJson(std::span<const EvalReport> runs) {
  ordered_json arr = ordered_json::array();
  for (const auto& r : runs) arr.push_back(r.ToJson());
  return {{"schema_version", kReportSchemaVersion}, {"runs", std::move(arr)}};
}

std::vector<EvalReport> ReportsFromJson(const ordered_json& j) {
  std::vector<EvalReport> runs;
  try {
    if (j.at("schema_version").get<int>() != kReportSchemaVersion) {
      Fail(ErrorKind::kVersionError, "unsupported report schema version");
    }
    for (const auto& r : j.at("runs")) runs.push_back(EvalReport::FromJson(r));
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kParseError, std::string("malformed report file: ") + e.what());
  }
  return runs;
}

std::string ReportTableCsv(std::span<const EvalReport> runs) {
  if (runs.empty()) Fail(ErrorKind::kEmptyInput, "no runs to tabulate");
  const bool classification = IsClassification(runs.front().protocol);
  std::string out = classification ? "method,views,accuracy,time_ms\n"
                                   : "method,views,recall@1,recall@5,recall@10,time_ms\n";
  for (const auto& r : runs) {
    if (IsClassification(r.protocol) != classification) {
      Fail(ErrorKind::kConfigMismatch, "cannot mix classification and retrieval runs in one table");
    }
    out += CsvField(r.method) + "," + std::to_string(r.views);
    if (classification) {
      out += "," + Percent(r.metrics.at("accuracy"));
    } else {
      for (auto k : kRecallKs) out += "," + Percent(r.metrics.at("recall@" + std::to_string(k)));
    }
    out += "," + Millis(r.timing.total_ms()) + "\n";
  }
  return out;
}

void WriteReports(std::span<const EvalReport> runs, const std::filesystem::path& dir,
                  std::string_view name) {
  const std::string base(name);
  WriteFile(dir / (base + ".report.json"), ReportsToJson(runs).dump(1) + "\n");
  WriteFile(dir / (base + ".table.csv"), ReportTableCsv(runs));
}

std::vector<EvalReport> LoadReports(const std::filesystem::path& report_json) {
  const std::string text = ReadFile(report_json);
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    Fail(ErrorKind::kParseError, std::string("report is not valid JSON: ") + e.what());
  }
  return ReportsFromJson(j);
}

}  // namespace nfb
