#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ifboost/conflict.hpp"
#include "ifboost/core.hpp"
#include "ifboost/judge.hpp"

namespace ifboost::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

void write_file(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

using Spec = std::pair<std::string, Json>;  // class id, parameters

/// Sample whose instructions are built through the registry.
Sample make_sample(const std::string& id, const std::string& query,
                   const std::vector<Spec>& specs);

struct GoldenCase {
  std::string class_id;
  Json params;
  std::string text;
  bool expect;
};

/// Hand-written responses with known verdicts for every instruction class.
const std::vector<GoldenCase>& golden_cases();

/// Twenty assorted queries used by sampler and pipeline tests.
const std::vector<std::string>& fixture_queries();

/// Responses with deliberately different instruction coverage.
const std::vector<std::string>& response_pool();

/// Judge reply: a JSON array with one verdict object per answer.
std::string judge_reply(const std::vector<std::string>& answers);

/// `samples` samples of `k` sampled instructions over the fixture queries.
Dataset sampled_dataset(std::size_t samples, std::size_t k, std::uint64_t seed);

/// Mock script answering every role the pipeline uses, for `k`-instruction
/// samples. Completions cycle through response_pool().
Json pipeline_script(std::size_t k);

/// Hard-conflict rules restated directly on a finished set's parameters.
/// Empty when the set is clean.
std::vector<std::string> oracle_conflicts(const std::vector<Instruction>& set);

struct JudgeFixture {
  std::string name;
  std::string raw;
  std::size_t n;
  ParseFailure expect;
};

/// Judge replies in the shapes seen in practice, with the expected outcome.
std::vector<JudgeFixture> judge_fixtures();

/// Runs conflict scoring on a 5-sample, 4-instruction fixture against a
/// recording backend, then recomputes every score from the raw responses by
/// brute force over ordered pairs with exact integer arithmetic.
struct ConflictOracleRun {
  ConflictReport report;
  std::vector<std::string> mismatches;  // empty when every score agrees
  std::size_t checked = 0;
};
ConflictOracleRun run_conflict_oracle_fixture();

}  // namespace ifboost::testing
