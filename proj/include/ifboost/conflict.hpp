#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ifboost/core.hpp"
#include "ifboost/gateway.hpp"

namespace ifboost {

/// Identity of an unordered instruction pair under a query; used to evaluate
/// each distinct pair once per run.
std::string pair_key(const std::string& query, const Instruction& a, const Instruction& b);

struct PairExpansion {
  Dataset pairs;                            // one two-instruction sample per distinct pair
  std::vector<std::string> keys;            // aligned with pairs.samples
  std::map<std::string, std::vector<std::string>> derived_ids;  // key -> "src#i-j" ids
};

/// k(k-1)/2 pair samples per source sample, deduplicated by pair_key.
/// Throws DatasetError when a sample has fewer than two instructions.
PairExpansion expand_pairwise(const Dataset& dataset);

struct PairConflict {
  std::string key;
  std::string sample_id;  // the evaluated pair sample
  long long responses = 0;
  long long violations = 0;
  bool complete = true;
  std::string error;
};

Json to_json(const PairConflict& p);

/// Responses among `responses` that violate at least one of the pair.
long long count_violations(const Sample& pair, const std::vector<std::string>& responses);

struct ConflictOptions {
  long long r = 5;
  double temperature = 0.7;
  int max_tokens = 2048;
};

/// Draws r responses per pair sample (one call with n = r) and counts
/// violations with the oracle verifiers. Gateway errors mark the pair
/// incomplete instead of aborting.
std::vector<PairConflict> conflict_counts(Gateway& gateway, const PairExpansion& pairs,
                                          const ConflictOptions& options = {},
                                          CostTracker* sink = nullptr);

struct ConflictScore {
  std::string sample_id;
  long long unordered_sum = 0;  // sum of c_ij over i < j
  long long k = 0;
  double score = 0.0;           // 2 * unordered_sum / k

  bool operator==(const ConflictScore&) const = default;
};

Json to_json(const ConflictScore& s);

/// Throws Error if a pair of `sample` has no count.
ConflictScore conflict_score(const Sample& sample, const std::map<std::string, long long>& counts);

/// Throws Error for mismatched or short input and for zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

struct BucketRow {
  double lo = 0.0;
  double hi = 0.0;  // exclusive except for the last bucket, which includes 1.0
  double mean = 0.0;
  double sem = 0.0;
  std::size_t n = 0;
};

Json to_json(const BucketRow& b);

/// Groups scores by IF rate into buckets of `width` over [0, 1]; empty
/// buckets are omitted. SEM is the sample standard deviation over sqrt(n).
std::vector<BucketRow> bucket_by_if_rate(const std::vector<double>& if_rates,
                                         const std::vector<double>& scores, double width);

/// Entry p is the fraction of rows whose p-th verdict is followed. Throws
/// Error for ragged input.
std::vector<double> positional_if_rate(const std::vector<std::vector<Verdict>>& verdicts);

struct ConflictReport {
  std::vector<PairConflict> pairs;
  std::vector<ConflictScore> scores;
  std::vector<std::string> skipped;        // samples with incomplete pair counts
  std::optional<double> correlation;       // vs supplied IF rates
  std::string correlation_notice;
  std::vector<BucketRow> buckets;
  double mean_score = 0.0;
};

/// Full pipeline: expansion, counts, scores, optional correlation against
/// per-sample IF rates (sample id -> rate) and bucketing.
ConflictReport run_conflict(Gateway& gateway, const Dataset& dataset,
                            const ConflictOptions& options,
                            const std::map<std::string, double>& if_rates, double bucket_width);

}  // namespace ifboost
