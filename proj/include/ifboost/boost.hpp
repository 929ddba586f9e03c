#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ifboost/core.hpp"
#include "ifboost/gateway.hpp"
#include "ifboost/judge.hpp"

namespace ifboost {

enum class StrategyKind {
  DetectRepair,
  DetectRepairExpl,
  BestOfN,
  BestOfNOracle,
  BestOfNGen,
  MapReduce,
};

enum class Reward { Judge, Oracle };

std::string_view to_string(StrategyKind kind);
StrategyKind strategy_from_string(std::string_view name);  // throws Error
std::string_view to_string(Reward reward);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::DetectRepair;
  int n_samples = 5;
  double temperature = 0.7;        // generations and rewrites
  double judge_temperature = 0.0;  // detector, reward judge, adherence
  Reward reward = Reward::Judge;
  bool include_initial = true;     // initial response joins the Best-of-N pool
  bool check_adherence = true;
  int max_tokens = 2048;

  /// Defaults for `kind`; Best-of-N Oracle implies the oracle reward.
  static StrategyConfig for_kind(StrategyKind kind);
  static StrategyConfig from_json(const Json& j);
  Json to_json() const;
  void validate() const;  // throws Error
};

struct BoostOutcome {
  std::string sample_id;
  std::string strategy;
  std::string initial_response;
  std::string final_response;
  std::vector<Verdict> verdicts_before;
  std::vector<Verdict> verdicts_after;
  std::optional<JudgeReport> judge_before;
  std::vector<double> rewards;  // Best-of-N pool rewards, pool order
  int chosen = -1;              // pool index of the final response; -1 = initial kept
  CostRecord cost;
  std::map<std::string, CostRecord> cost_by_role;
  std::optional<bool> adherence_before;
  std::optional<bool> adherence_after;
  bool excluded = false;  // initial response failed task adherence
  bool failed = false;    // no verdicts could be produced
  std::vector<std::string> errors;

  double if_before() const;
  double if_after() const;
};

Json to_json(const BoostOutcome& o);
BoostOutcome outcome_from_json(const Json& j);

/// Text between the first `open` tag and the next `close` tag, trimmed.
std::optional<std::string> extract_tagged(std::string_view text, std::string_view open,
                                          std::string_view close);

inline constexpr std::string_view kRewriteOpen = "<START_OF_REWRITE>";
inline constexpr std::string_view kRewriteClose = "<END_OF_REWRITE>";
inline constexpr std::string_view kResponseOpen = "<START_OF_RESPONSE>";
inline constexpr std::string_view kResponseClose = "<END_OF_RESPONSE>";

/// Labeled per-guideline blocks for the reduce prompt; `numbers` are the
/// 1-based instruction positions.
std::string render_guideline_blocks(const std::vector<std::size_t>& numbers,
                                    const std::vector<std::string>& descriptions,
                                    const std::vector<std::string>& rewrites);

/// Drives the strategies against one gateway. Every call made on behalf of a
/// sample is charged to the tracker passed in.
class Booster {
 public:
  Booster(Gateway& gateway, StrategyConfig config);

  const StrategyConfig& config() const { return config_; }

  std::string initial_prompt(const Sample& sample) const;
  std::string initial_generate(const Sample& sample, CostTracker* sink = nullptr);

  BoostOutcome detect_repair(const Sample& sample, const std::string& initial, bool expl,
                             CostTracker* sink = nullptr);
  BoostOutcome best_of_n(const Sample& sample, const std::string& initial,
                         CostTracker* sink = nullptr);
  /// Leaves final_response empty (with an error) when no candidate is tagged.
  BoostOutcome best_of_n_gen(const Sample& sample, CostTracker* sink = nullptr);
  BoostOutcome map_reduce(const Sample& sample, const std::string& initial,
                          CostTracker* sink = nullptr);

  /// Dispatches on config().kind.
  BoostOutcome apply(const Sample& sample, const std::string& initial,
                     CostTracker* sink = nullptr);

  /// Instruction-following reward of `text` under the configured reward.
  double reward(const Sample& sample, const std::string& text, CostTracker* sink);

  /// The full per-sample flow: initial generation, adherence gate, strategy,
  /// oracle verdicts before and after, adherence after. Never throws; errors
  /// are recorded on the outcome.
  BoostOutcome run_sample(const Sample& sample);

 private:
  std::string rewrite_call(const std::string& prompt, const std::string& role,
                           CostTracker* sink);
  std::string repair_prompt(const Sample& sample, const std::string& text,
                            const std::string& policies) const;

  Gateway& gateway_;
  StrategyConfig config_;
};

/// Samples run concurrently up to the gateway's in-flight limit; outcomes
/// come back in dataset order.
std::vector<BoostOutcome> run_strategy(Gateway& gateway, const Dataset& dataset,
                                       const StrategyConfig& config);

}  // namespace ifboost
