#include "ifboost/boost.hpp"

#include <atomic>
#include <sstream>
#include <thread>

#include "ifboost/templates.hpp"
#include "ifboost/text.hpp"
#include "ifboost/verifiers.hpp"

namespace ifboost {

namespace {

struct KindName {
  StrategyKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {StrategyKind::DetectRepair, "detect_repair"},
    {StrategyKind::DetectRepairExpl, "detect_repair_expl"},
    {StrategyKind::BestOfN, "best_of_n"},
    {StrategyKind::BestOfNOracle, "best_of_n_oracle"},
    {StrategyKind::BestOfNGen, "best_of_n_gen"},
    {StrategyKind::MapReduce, "map_reduce"},
};

double oracle_fraction(const std::vector<Verdict>& v) { return followed_fraction(v); }

std::vector<Verdict> oracle_verdicts(const Sample& s, const std::string& text) {
  return verify_all(s, text);
}

}  // namespace

std::string_view to_string(StrategyKind kind) {
  for (const auto& k : kKindNames) {
    if (k.kind == kind) return k.name;
  }
  return "unknown";
}

StrategyKind strategy_from_string(std::string_view name) {
  for (const auto& k : kKindNames) {
    if (k.name == name) return k.kind;
  }
  std::string known;
  for (const auto& k : kKindNames) known += (known.empty() ? "" : ", ") + std::string(k.name);
  throw Error("unknown strategy '" + std::string(name) + "' (known: " + known + ")");
}

std::string_view to_string(Reward reward) {
  return reward == Reward::Oracle ? "oracle" : "judge";
}

StrategyConfig StrategyConfig::for_kind(StrategyKind kind) {
  StrategyConfig c;
  c.kind = kind;
  if (kind == StrategyKind::BestOfNOracle) c.reward = Reward::Oracle;
  return c;
}

void StrategyConfig::validate() const {
  if (n_samples < 1) throw Error("strategy n_samples must be >= 1");
  if (temperature < 0 || judge_temperature < 0) throw Error("temperatures must be >= 0");
  if (max_tokens < 1) throw Error("max_tokens must be >= 1");
  if (kind == StrategyKind::BestOfNOracle && reward != Reward::Oracle) {
    throw Error("best_of_n_oracle requires the oracle reward");
  }
}

StrategyConfig StrategyConfig::from_json(const Json& j) {
  StrategyConfig c = for_kind(strategy_from_string(j.at("kind").get<std::string>()));
  c.n_samples = j.value("n_samples", c.n_samples);
  c.temperature = j.value("temperature", c.temperature);
  c.judge_temperature = j.value("judge_temperature", c.judge_temperature);
  if (j.contains("reward")) {
    const auto r = j.at("reward").get<std::string>();
    if (r != "judge" && r != "oracle") throw Error("reward must be 'judge' or 'oracle'");
    c.reward = r == "oracle" ? Reward::Oracle : Reward::Judge;
  }
  c.include_initial = j.value("include_initial", c.include_initial);
  c.check_adherence = j.value("check_adherence", c.check_adherence);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.validate();
  return c;
}

Json StrategyConfig::to_json() const {
  return Json{{"kind", to_string(kind)},
              {"n_samples", n_samples},
              {"temperature", temperature},
              {"judge_temperature", judge_temperature},
              {"reward", to_string(reward)},
              {"include_initial", include_initial},
              {"check_adherence", check_adherence},
              {"max_tokens", max_tokens}};
}

double BoostOutcome::if_before() const { return oracle_fraction(verdicts_before); }
double BoostOutcome::if_after() const { return oracle_fraction(verdicts_after); }

Json to_json(const BoostOutcome& o) {
  Json before = Json::array(), after = Json::array();
  for (const auto& v : o.verdicts_before) before.push_back(to_json(v));
  for (const auto& v : o.verdicts_after) after.push_back(to_json(v));
  Json roles = Json::object();
  for (const auto& [role, c] : o.cost_by_role) roles[role] = to_json(c);
  auto opt_bool = [](const std::optional<bool>& b) { return b ? Json(*b) : Json(nullptr); };
  return Json{{"sample_id", o.sample_id},
              {"strategy", o.strategy},
              {"initial_response", o.initial_response},
              {"final_response", o.final_response},
              {"verdicts_before", before},
              {"verdicts_after", after},
              {"if_before", o.if_before()},
              {"if_after", o.if_after()},
              {"judge_before", o.judge_before ? to_json(*o.judge_before) : Json(nullptr)},
              {"rewards", o.rewards},
              {"chosen", o.chosen},
              {"cost", to_json(o.cost)},
              {"cost_by_role", roles},
              {"adherence_before", opt_bool(o.adherence_before)},
              {"adherence_after", opt_bool(o.adherence_after)},
              {"excluded", o.excluded},
              {"failed", o.failed},
              {"errors", o.errors}};
}

BoostOutcome outcome_from_json(const Json& j) {
  BoostOutcome o;
  try {
    o.sample_id = j.at("sample_id").get<std::string>();
    o.strategy = j.at("strategy").get<std::string>();
    o.initial_response = j.at("initial_response").get<std::string>();
    o.final_response = j.at("final_response").get<std::string>();
    for (const auto& v : j.at("verdicts_before")) o.verdicts_before.push_back(verdict_from_json(v));
    for (const auto& v : j.at("verdicts_after")) o.verdicts_after.push_back(verdict_from_json(v));
    if (!j.at("judge_before").is_null()) o.judge_before = judge_report_from_json(j.at("judge_before"));
    o.rewards = j.at("rewards").get<std::vector<double>>();
    o.chosen = j.at("chosen").get<int>();
    o.cost = cost_from_json(j.at("cost"));
    for (const auto& [role, c] : j.at("cost_by_role").items()) o.cost_by_role[role] = cost_from_json(c);
    if (!j.at("adherence_before").is_null()) o.adherence_before = j.at("adherence_before").get<bool>();
    if (!j.at("adherence_after").is_null()) o.adherence_after = j.at("adherence_after").get<bool>();
    o.excluded = j.at("excluded").get<bool>();
    o.failed = j.at("failed").get<bool>();
    o.errors = j.at("errors").get<std::vector<std::string>>();
  } catch (const Json::exception& e) {
    throw Error(std::string("malformed outcome record: ") + e.what());
  }
  return o;
}

std::optional<std::string> extract_tagged(std::string_view text, std::string_view open,
                                          std::string_view close) {
  const std::size_t a = text.find(open);
  if (a == std::string_view::npos) return std::nullopt;
  const std::size_t body = a + open.size();
  const std::size_t b = text.find(close, body);
  if (b == std::string_view::npos) return std::nullopt;
  return std::string(trim(text.substr(body, b - body)));
}

std::string render_guideline_blocks(const std::vector<std::size_t>& numbers,
                                    const std::vector<std::string>& descriptions,
                                    const std::vector<std::string>& rewrites) {
  std::ostringstream os;
  for (std::size_t i = 0; i < numbers.size(); ++i) {
    os << "\n<START_OF_GUIDELINE_RESPONSE_" << numbers[i] << ">\n"
       << "Guideline: " << descriptions[i] << "\n"
       << rewrites[i] << "\n"
       << "<END_OF_GUIDELINE_RESPONSE_" << numbers[i] << ">\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------

Booster::Booster(Gateway& gateway, StrategyConfig config)
    : gateway_(gateway), config_(std::move(config)) {
  config_.validate();
}

std::string Booster::initial_prompt(const Sample& sample) const {
  return templates::render(templates::kInitialGeneration,
                           {{"instruction_list", numbered_policies(sample.instructions)},
                            {"prompt_request", sample.query}});
}

std::string Booster::initial_generate(const Sample& sample, CostTracker* sink) {
  GenerationRequest req;
  req.user = initial_prompt(sample);
  req.temperature = config_.temperature;
  req.max_tokens = config_.max_tokens;
  req.role = "initial";
  return gateway_.generate(req, sink).texts.at(0);
}

std::string Booster::rewrite_call(const std::string& prompt, const std::string& role,
                                  CostTracker* sink) {
  GenerationRequest req;
  req.user = prompt;
  req.temperature = config_.temperature;
  req.max_tokens = config_.max_tokens;
  req.role = role;
  return gateway_.generate(req, sink).texts.at(0);
}

std::string Booster::repair_prompt(const Sample& sample, const std::string& text,
                                   const std::string& policies) const {
  return templates::render(templates::kRepair,
                           {{"query", sample.query},
                            {"instr", numbered_policies(sample.instructions)},
                            {"text", text},
                            {"policies", policies}});
}

double Booster::reward(const Sample& sample, const std::string& text, CostTracker* sink) {
  if (config_.reward == Reward::Oracle) return followed_fraction(oracle_verdicts(sample, text));
  JudgeOptions opts{config_.judge_temperature, config_.max_tokens};
  return detect_violations(gateway_, text, sample.instructions, sink, opts)
      .followed_fraction(sample.instructions.size());
}

BoostOutcome Booster::detect_repair(const Sample& sample, const std::string& initial,
                                    bool expl, CostTracker* sink) {
  BoostOutcome out;
  out.sample_id = sample.id;
  out.strategy = std::string(to_string(expl ? StrategyKind::DetectRepairExpl
                                            : StrategyKind::DetectRepair));
  out.initial_response = initial;
  out.final_response = initial;

  JudgeOptions opts{config_.judge_temperature, config_.max_tokens};
  JudgeReport report = detect_violations(gateway_, initial, sample.instructions, sink, opts);
  if (!report.parse_ok) out.errors.push_back("judge reply unparsed (" + report.failure + ")");
  out.judge_before = report;
  if (!report.violated.empty()) {
    std::ostringstream policies;
    for (std::size_t n = 0; n < report.violated.size(); ++n) {
      const std::size_t i = report.violated[n];
      if (n) policies << '\n';
      policies << i + 1 << ". " << sample.instructions[i].description;
      if (expl && report.parse_ok && !report.verdicts[i].explanation.empty()) {
        policies << " Explanation: " << report.verdicts[i].explanation;
      }
    }
    const std::string reply = rewrite_call(repair_prompt(sample, initial, policies.str()),
                                           "repair", sink);
    if (auto body = extract_tagged(reply, kRewriteOpen, kRewriteClose)) {
      out.final_response = *body;
      out.chosen = 0;
    } else {
      out.errors.push_back("repair reply lacks rewrite tags; kept initial response");
    }
  }
  out.verdicts_before = oracle_verdicts(sample, initial);
  out.verdicts_after = oracle_verdicts(sample, out.final_response);
  return out;
}

BoostOutcome Booster::best_of_n(const Sample& sample, const std::string& initial,
                                CostTracker* sink) {
  BoostOutcome out;
  out.sample_id = sample.id;
  out.strategy = std::string(to_string(config_.kind == StrategyKind::BestOfNOracle
                                           ? StrategyKind::BestOfNOracle
                                           : StrategyKind::BestOfN));
  out.initial_response = initial;
  out.final_response = initial;

  const std::string prompt =
      templates::render(templates::kBestOfN, {{"query", sample.query},
                                              {"text", initial},
                                              {"instr", numbered_policies(sample.instructions)}});
  std::vector<std::string> pool;
  if (config_.include_initial) pool.push_back(initial);
  std::size_t untagged = 0;
  for (int k = 0; k < config_.n_samples; ++k) {
    const std::string reply = rewrite_call(prompt, "rewrite", sink);
    if (auto body = extract_tagged(reply, kRewriteOpen, kRewriteClose)) {
      pool.push_back(*body);
    } else {
      ++untagged;
    }
  }
  if (untagged) {
    out.errors.push_back(std::to_string(untagged) + " of " + std::to_string(config_.n_samples) +
                         " rewrites lack rewrite tags");
  }
  const std::size_t first_rewrite = config_.include_initial ? 1 : 0;
  if (pool.size() == first_rewrite) {
    out.errors.push_back("no usable rewrite; kept initial response");
  } else {
    int best = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      out.rewards.push_back(reward(sample, pool[i], sink));
      if (out.rewards[i] > out.rewards[best]) best = static_cast<int>(i);
    }
    out.final_response = pool[best];
    // chosen indexes the pool; -1 means the initial response itself was kept.
    out.chosen = (config_.include_initial && best == 0) ? -1 : best;
  }
  out.verdicts_before = oracle_verdicts(sample, initial);
  out.verdicts_after = oracle_verdicts(sample, out.final_response);
  return out;
}

BoostOutcome Booster::best_of_n_gen(const Sample& sample, CostTracker* sink) {
  BoostOutcome out;
  out.sample_id = sample.id;
  out.strategy = std::string(to_string(StrategyKind::BestOfNGen));
  const std::string prompt = templates::render(
      templates::kBestOfNGen,
      {{"query", sample.query}, {"instr", numbered_policies(sample.instructions)}});
  std::vector<std::string> pool;
  std::size_t untagged = 0;
  for (int k = 0; k < config_.n_samples; ++k) {
    const std::string reply = rewrite_call(prompt, "generate", sink);
    if (auto body = extract_tagged(reply, kResponseOpen, kResponseClose)) {
      pool.push_back(*body);
    } else {
      ++untagged;
    }
  }
  if (untagged) {
    out.errors.push_back(std::to_string(untagged) + " of " + std::to_string(config_.n_samples) +
                         " generations lack response tags");
  }
  if (pool.empty()) {
    out.errors.push_back("no tagged generation; outcome empty");
    return out;
  }
  int best = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    out.rewards.push_back(pool.size() == 1 ? 1.0 : reward(sample, pool[i], sink));
    if (out.rewards[i] > out.rewards[best]) best = static_cast<int>(i);
  }
  if (pool.size() == 1) out.rewards.clear();
  out.chosen = best;
  out.final_response = pool[best];
  out.verdicts_after = oracle_verdicts(sample, out.final_response);
  return out;
}

BoostOutcome Booster::map_reduce(const Sample& sample, const std::string& initial,
                                 CostTracker* sink) {
  BoostOutcome out;
  out.sample_id = sample.id;
  out.strategy = std::string(to_string(StrategyKind::MapReduce));
  out.initial_response = initial;
  out.final_response = initial;

  JudgeOptions opts{config_.judge_temperature, config_.max_tokens};
  JudgeReport report = detect_violations(gateway_, initial, sample.instructions, sink, opts);
  if (!report.parse_ok) out.errors.push_back("judge reply unparsed (" + report.failure + ")");
  out.judge_before = report;

  std::vector<std::size_t> numbers;
  std::vector<std::string> descriptions, rewrites;
  for (std::size_t i : report.violated) {
    const std::string policy =
        std::to_string(i + 1) + ". " + sample.instructions[i].description;
    const std::string reply = rewrite_call(repair_prompt(sample, initial, policy), "map", sink);
    if (auto body = extract_tagged(reply, kRewriteOpen, kRewriteClose)) {
      numbers.push_back(i + 1);
      descriptions.push_back(sample.instructions[i].description);
      rewrites.push_back(*body);
    } else {
      out.errors.push_back("map reply for instruction " + std::to_string(i + 1) +
                           " lacks rewrite tags; branch skipped");
    }
  }
  if (!report.violated.empty() && rewrites.empty()) {
    out.errors.push_back("no successful map branch; kept initial response");
  }
  if (!rewrites.empty()) {
    const std::string prompt = templates::render(
        templates::kMapReduce,
        {{"query", sample.query},
         {"per_guideline_responses", render_guideline_blocks(numbers, descriptions, rewrites)},
         {"instr", numbered_policies(sample.instructions)}});
    const std::string reply = rewrite_call(prompt, "reduce", sink);
    if (auto body = extract_tagged(reply, kRewriteOpen, kRewriteClose)) {
      out.final_response = *body;
      out.chosen = 0;
    } else {
      out.errors.push_back("reduce reply lacks rewrite tags; kept initial response");
    }
  }
  out.verdicts_before = oracle_verdicts(sample, initial);
  out.verdicts_after = oracle_verdicts(sample, out.final_response);
  return out;
}

BoostOutcome Booster::apply(const Sample& sample, const std::string& initial, CostTracker* sink) {
  switch (config_.kind) {
    case StrategyKind::DetectRepair: return detect_repair(sample, initial, false, sink);
    case StrategyKind::DetectRepairExpl: return detect_repair(sample, initial, true, sink);
    case StrategyKind::BestOfN:
    case StrategyKind::BestOfNOracle: return best_of_n(sample, initial, sink);
    case StrategyKind::MapReduce: return map_reduce(sample, initial, sink);
    case StrategyKind::BestOfNGen: {
      BoostOutcome out = best_of_n_gen(sample, sink);
      out.initial_response = initial;
      if (out.final_response.empty() && out.verdicts_after.empty()) {
        out.final_response = initial;
        out.errors.push_back("fell back to initial response");
      }
      out.verdicts_before = oracle_verdicts(sample, initial);
      out.verdicts_after = oracle_verdicts(sample, out.final_response);
      return out;
    }
  }
  throw Error("unhandled strategy");
}

BoostOutcome Booster::run_sample(const Sample& sample) {
  CostTracker sink;
  BoostOutcome out;
  out.sample_id = sample.id;
  out.strategy = std::string(to_string(config_.kind));
  const JudgeOptions opts{config_.judge_temperature, config_.max_tokens};
  try {
    const std::string initial = initial_generate(sample, &sink);
    out.initial_response = initial;
    out.final_response = initial;
    out.verdicts_before = oracle_verdicts(sample, initial);
    out.verdicts_after = out.verdicts_before;
    if (config_.check_adherence) {
      out.adherence_before = check_task_adherence(gateway_, sample.query, initial, &sink, opts);
      if (!*out.adherence_before) out.excluded = true;
    }
    if (!out.excluded) {
      BoostOutcome boosted = apply(sample, initial, &sink);
      boosted.strategy = out.strategy;
      boosted.adherence_before = out.adherence_before;
      out = std::move(boosted);
      if (config_.check_adherence) {
        out.adherence_after =
            out.final_response == initial
                ? out.adherence_before
                : check_task_adherence(gateway_, sample.query, out.final_response, &sink, opts);
      }
    }
  } catch (const std::exception& e) {
    out.errors.push_back(e.what());
    if (out.verdicts_before.empty()) out.failed = true;
  }
  out.cost = sink.total();
  out.cost_by_role = sink.by_role();
  return out;
}

std::vector<BoostOutcome> run_strategy(Gateway& gateway, const Dataset& dataset,
                                       const StrategyConfig& config) {
  Booster booster(gateway, config);
  std::vector<BoostOutcome> out(dataset.samples.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < out.size(); i = next++) {
      out[i] = booster.run_sample(dataset.samples[i]);
    }
  };
  std::vector<std::jthread> threads;
  const std::size_t workers = std::min(gateway.max_in_flight(), out.size());
  for (std::size_t t = 1; t < workers; ++t) threads.emplace_back(worker);
  worker();
  threads.clear();
  return out;
}

}  // namespace ifboost
