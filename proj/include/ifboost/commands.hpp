#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ifboost/boost.hpp"
#include "ifboost/conflict.hpp"
#include "ifboost/eval.hpp"
#include "ifboost/gateway.hpp"
#include "ifboost/sampler.hpp"

namespace ifboost {

std::string toolkit_version();

struct QueryRecord {
  std::string id;  // empty: assign a generated id
  std::string query;
};

/// One query per line: plain text, or a record with "query" and optional "id".
std::vector<QueryRecord> read_queries(const std::filesystem::path& path);

/// SHA-256 of the dataset in its canonical serialized form.
std::string dataset_sha256(const Dataset& dataset);

std::string utc_timestamp();

/// Skeleton shared by every command's manifest.
Json base_manifest(const std::string& command, std::uint64_t seed);

void write_json(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);

// dataset gen ---------------------------------------------------------------

struct DatasetGenOptions {
  std::filesystem::path queries;
  std::size_t n = 10;
  std::uint64_t seed = 0;
  std::filesystem::path out;
  std::optional<std::filesystem::path> keywords_file;
  std::optional<std::filesystem::path> constraints;
  std::optional<BackendConfig> keyword_backend;  // model-backed keywords when set
  bool shuffle = true;
};

struct DatasetGenResult {
  Dataset dataset;
  std::vector<std::string> failures;  // "query id: reason"
};

/// Writes the dataset and `<out>.manifest.json`.
DatasetGenResult cmd_dataset_gen(const DatasetGenOptions& options);

void cmd_dataset_scale(const std::filesystem::path& dataset, std::size_t n,
                       std::uint64_t seed, const std::filesystem::path& out);

// boost run -----------------------------------------------------------------

struct BoostRunOptions {
  std::filesystem::path dataset;
  StrategyConfig strategy;
  BackendConfig backend;
  std::uint64_t seed = 0;
  std::filesystem::path out;
};

struct BoostRunResult {
  std::vector<BoostOutcome> outcomes;
  EvalSummary summary;
};

/// Writes outcomes.jsonl, summary.json and manifest.json under options.out.
BoostRunResult cmd_boost(const BoostRunOptions& options);

/// Re-reads outcomes.jsonl from a run directory.
std::vector<BoostOutcome> load_outcomes(const std::filesystem::path& run_dir);

// conflict score ------------------------------------------------------------

struct ConflictRunOptions {
  std::filesystem::path dataset;
  BackendConfig backend;
  ConflictOptions conflict;
  double bucket_width = 0.1;
  std::optional<std::filesystem::path> run;  // boost run supplying IF rates
  std::uint64_t seed = 0;
  std::filesystem::path out;
};

/// Writes pairs.jsonl, scores.jsonl, buckets.jsonl, summary.json and
/// manifest.json under options.out.
ConflictReport cmd_conflict(const ConflictRunOptions& options);

// report --------------------------------------------------------------------

struct RunReport {
  Json tables;                        // machine-readable
  std::string text;                   // plain-text rendering
  std::vector<std::string> warnings;  // incompatible runs
};

RunReport cmd_report(const std::vector<std::filesystem::path>& run_dirs);

}  // namespace ifboost
