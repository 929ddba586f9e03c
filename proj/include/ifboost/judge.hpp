#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "ifboost/core.hpp"
#include "ifboost/gateway.hpp"

namespace ifboost {

struct DetectionVerdict {
  std::string policy;
  std::string answer;  // "yes" or "no"
  std::string explanation;

  bool operator==(const DetectionVerdict&) const = default;
};

enum class ParseFailure { None, NoArray, BadLength, BadAnswer, Malformed };

std::string_view to_string(ParseFailure f);

struct ParseResult {
  std::vector<DetectionVerdict> verdicts;
  ParseFailure failure = ParseFailure::None;
  std::string reason;

  bool ok() const { return failure == ParseFailure::None; }
};

/// Takes the first balanced top-level JSON array in `raw`, so fenced or
/// prose-wrapped replies are accepted. Never throws.
ParseResult parse_judge_output(std::string_view raw, std::size_t expected_n);

struct JudgeReport {
  std::vector<DetectionVerdict> verdicts;
  std::vector<std::size_t> violated;  // 0-based instruction indices
  bool parse_ok = false;
  std::string failure;  // reason code and detail when !parse_ok

  /// Fraction of instructions the judge considers followed.
  double followed_fraction(std::size_t instruction_count) const;
};

Json to_json(const JudgeReport& r);
JudgeReport judge_report_from_json(const Json& j);

/// Report for a raw judge reply. A parse failure marks everything violated.
JudgeReport make_report(std::string_view raw, std::size_t instruction_count);

/// "1. <description>" lines in order.
std::string numbered_policies(const std::vector<Instruction>& instructions);

struct JudgeOptions {
  double temperature = 0.0;
  int max_tokens = 2048;
};

JudgeReport detect_violations(Gateway& gateway, std::string_view text,
                              const std::vector<Instruction>& instructions,
                              CostTracker* sink = nullptr,
                              const JudgeOptions& options = {});

/// True iff the first word of the reply is "yes".
bool parse_adherence_reply(std::string_view reply);

bool check_task_adherence(Gateway& gateway, std::string_view query,
                          std::string_view response, CostTracker* sink = nullptr,
                          const JudgeOptions& options = {});

/// Agreement between judge and oracle verifiers over all (sample,
/// instruction) pairs. Throws on shape mismatch or when there are no pairs.
double judge_accuracy(const Dataset& dataset, const std::vector<std::string>& responses,
                      const std::vector<JudgeReport>& reports);

}  // namespace ifboost
