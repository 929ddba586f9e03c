#pragma once

#include <map>
#include <string>
#include <vector>

#include "ifboost/boost.hpp"
#include "ifboost/gateway.hpp"

namespace ifboost {

struct RateSet {
  double before = 0.0;
  double after = 0.0;
};

/// Aggregates over a run. "Included" samples passed the initial adherence
/// gate and produced verdicts; "inclusive" rates also count gated samples at
/// their unboosted initial response.
struct EvalSummary {
  std::string strategy;
  std::size_t instructions_per_sample = 0;
  std::size_t samples = 0;
  std::size_t included = 0;
  std::size_t excluded_initial = 0;     // initial response failed adherence
  std::size_t additional_after = 0;     // passed before, failed after boosting
  std::size_t failed = 0;               // no verdicts (generation error)
  std::size_t with_errors = 0;          // any recorded error
  double exclusion_rate = 0.0;

  RateSet macro;            // mean of per-sample fractions, included samples
  RateSet micro;            // pooled instruction fraction, included samples
  RateSet macro_inclusive;  // over all samples with verdicts
  std::map<std::string, RateSet> per_class;  // micro per class id, included samples
  std::vector<double> positional_before;
  std::vector<double> positional_after;

  CostRecord cost;
  std::map<std::string, CostRecord> cost_by_role;
};

Json to_json(const EvalSummary& s);
EvalSummary summary_from_json(const Json& j);

EvalSummary summarize(const std::vector<BoostOutcome>& outcomes, const std::string& strategy);

}  // namespace ifboost
