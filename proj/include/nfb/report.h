#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace nfb {

enum class Protocol { kZeroShot, kZeroShotBaseline, kRetrievalImages, kRetrievalText };

// "zeroshot", "zeroshot-baseline", "retrieval-images", "retrieval-text".
std::string_view ToString(Protocol protocol);
Protocol ParseProtocol(std::string_view text);
bool IsClassification(Protocol protocol);

struct RankedEntry {
  std::string id;
  std::string label;
  double score = 0.0;

  friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

struct QueryRecord {
  std::string query_id;
  std::string true_label;
  std::vector<std::size_t> view_indices;  // views averaged into the query, if any
  std::vector<RankedEntry> ranked;

  friend bool operator==(const QueryRecord&, const QueryRecord&) = default;
};

// Per-query means in milliseconds.
struct StageTiming {
  double inference_ms = 0.0;
  double search_ms = 0.0;
  double total_ms() const { return inference_ms + search_ms; }
};

inline constexpr int kReportSchemaVersion = 1;

struct EvalReport {
  Protocol protocol = Protocol::kZeroShot;
  std::string method;     // row label in the CSV table
  std::size_t views = 0;  // views averaged per query (0: no views involved)
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::map<std::string, double> metrics;
  std::vector<QueryRecord> queries;
  StageTiming timing;
  std::string timing_note;

  // Classification: accuracy and recall@1. Retrieval: recall@{1,5,10}.
  std::vector<std::string> MetricNames() const;
  std::map<std::string, double> ComputeMetrics() const;
  // Fills metrics from the query records.
  void Finalize();
  // Throws kValidationError unless the stored metrics equal the recomputed ones.
  void Verify() const;

  nlohmann::ordered_json ToJson() const;
  // Verifies self-consistency. Throws kParseError, kVersionError, kValidationError.
  static EvalReport FromJson(const nlohmann::ordered_json& json);
};

// Canonical file: {"schema_version", "runs": [...]}. One run per CSV row.
nlohmann::ordered_json ReportsToJson(std::span<const EvalReport> runs);
std::vector<EvalReport> ReportsFromJson(const nlohmann::ordered_json& json);

// Classification: method,views,accuracy,time_ms. Retrieval:
// method,views,recall@1,recall@5,recall@10,time_ms. Metrics in percent.
// Throws kConfigMismatch when runs mix the two kinds.
std::string ReportTableCsv(std::span<const EvalReport> runs);

// Writes <dir>/<name>.report.json and <dir>/<name>.table.csv.
void WriteReports(std::span<const EvalReport> runs, const std::filesystem::path& dir,
                  std::string_view name);
std::vector<EvalReport> LoadReports(const std::filesystem::path& report_json);

}  // namespace nfb
