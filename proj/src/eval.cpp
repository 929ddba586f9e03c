#include "ifboost/eval.hpp"

#include <array>

#include "ifboost/conflict.hpp"
#include "ifboost/verifiers.hpp"

namespace ifboost {

namespace {

Json rates(const RateSet& r) { return Json{{"before", r.before}, {"after", r.after}}; }

RateSet rates_from(const Json& j) {
  return {j.at("before").get<double>(), j.at("after").get<double>()};
}

}  // namespace

Json to_json(const EvalSummary& s) {
  Json per_class = Json::object();
  for (const auto& [c, r] : s.per_class) per_class[c] = rates(r);
  Json roles = Json::object();
  for (const auto& [role, c] : s.cost_by_role) roles[role] = to_json(c);
  return Json{{"strategy", s.strategy},
              {"instructions_per_sample", s.instructions_per_sample},
              {"samples", s.samples},
              {"included", s.included},
              {"excluded_initial", s.excluded_initial},
              {"additional_after", s.additional_after},
              {"failed", s.failed},
              {"with_errors", s.with_errors},
              {"exclusion_rate", s.exclusion_rate},
              {"if_rate", rates(s.macro)},
              {"if_rate_micro", rates(s.micro)},
              {"if_rate_inclusive", rates(s.macro_inclusive)},
              {"per_class", per_class},
              {"positional_before", s.positional_before},
              {"positional_after", s.positional_after},
              {"cost", to_json(s.cost)},
              {"cost_by_role", roles}};
}

EvalSummary summary_from_json(const Json& j) {
  EvalSummary s;
  try {
    s.strategy = j.at("strategy").get<std::string>();
    s.instructions_per_sample = j.at("instructions_per_sample").get<std::size_t>();
    s.samples = j.at("samples").get<std::size_t>();
    s.included = j.at("included").get<std::size_t>();
    s.excluded_initial = j.at("excluded_initial").get<std::size_t>();
    s.additional_after = j.at("additional_after").get<std::size_t>();
    s.failed = j.at("failed").get<std::size_t>();
    s.with_errors = j.at("with_errors").get<std::size_t>();
    s.exclusion_rate = j.at("exclusion_rate").get<double>();
    s.macro = rates_from(j.at("if_rate"));
    s.micro = rates_from(j.at("if_rate_micro"));
    s.macro_inclusive = rates_from(j.at("if_rate_inclusive"));
    for (const auto& [c, r] : j.at("per_class").items()) s.per_class[c] = rates_from(r);
    s.positional_before = j.at("positional_before").get<std::vector<double>>();
    s.positional_after = j.at("positional_after").get<std::vector<double>>();
    s.cost = cost_from_json(j.at("cost"));
    for (const auto& [role, c] : j.at("cost_by_role").items()) s.cost_by_role[role] = cost_from_json(c);
  } catch (const Json::exception& e) {
    throw Error(std::string("malformed summary: ") + e.what());
  }
  return s;
}

EvalSummary summarize(const std::vector<BoostOutcome>& outcomes, const std::string& strategy) {
  EvalSummary s;
  s.strategy = strategy;
  s.samples = outcomes.size();

  std::size_t inclusive_n = 0;
  std::size_t followed_before = 0, followed_after = 0, pooled = 0;
  std::map<std::string, std::array<std::size_t, 3>> per_class;  // before, after, total
  std::vector<std::vector<Verdict>> pos_before, pos_after;
  bool ragged = false;

  for (const auto& o : outcomes) {
    s.cost += o.cost;
    for (const auto& [role, c] : o.cost_by_role) s.cost_by_role[role] += c;
    if (!o.errors.empty()) ++s.with_errors;
    if (o.failed || o.verdicts_before.empty()) {
      ++s.failed;
      continue;
    }
    if (s.instructions_per_sample == 0) s.instructions_per_sample = o.verdicts_before.size();
    if (o.verdicts_before.size() != s.instructions_per_sample) ragged = true;

    ++inclusive_n;
    s.macro_inclusive.before += o.if_before();
    s.macro_inclusive.after += o.excluded ? o.if_before() : o.if_after();

    if (o.excluded) {
      ++s.excluded_initial;
      continue;
    }
    if (o.adherence_before.value_or(true) && !o.adherence_after.value_or(true)) {
      ++s.additional_after;
    }
    ++s.included;
    s.macro.before += o.if_before();
    s.macro.after += o.if_after();
    for (std::size_t i = 0; i < o.verdicts_before.size(); ++i) {
      auto& pc = per_class[o.verdicts_before[i].class_id];
      pc[0] += o.verdicts_before[i].followed;
      pc[1] += o.verdicts_after.at(i).followed;
      pc[2] += 1;
      followed_before += o.verdicts_before[i].followed;
      followed_after += o.verdicts_after.at(i).followed;
      ++pooled;
    }
    pos_before.push_back(o.verdicts_before);
    pos_after.push_back(o.verdicts_after);
  }

  if (s.included) {
    s.macro.before /= static_cast<double>(s.included);
    s.macro.after /= static_cast<double>(s.included);
  }
  if (inclusive_n) {
    s.macro_inclusive.before /= static_cast<double>(inclusive_n);
    s.macro_inclusive.after /= static_cast<double>(inclusive_n);
    s.exclusion_rate = static_cast<double>(s.excluded_initial) / static_cast<double>(inclusive_n);
  }
  if (pooled) {
    s.micro.before = static_cast<double>(followed_before) / static_cast<double>(pooled);
    s.micro.after = static_cast<double>(followed_after) / static_cast<double>(pooled);
  }
  for (const auto& [c, v] : per_class) {
    s.per_class[c] = {static_cast<double>(v[0]) / static_cast<double>(v[2]),
                      static_cast<double>(v[1]) / static_cast<double>(v[2])};
  }
  if (!ragged) {
    s.positional_before = positional_if_rate(pos_before);
    s.positional_after = positional_if_rate(pos_after);
  }
  return s;
}

}  // namespace ifboost
