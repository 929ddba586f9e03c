#include "ifboost/commands.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "ifboost/templates.hpp"
#include "ifboost/verifiers.hpp"

#ifndef IFBOOST_VERSION
#define IFBOOST_VERSION "0.0.0"
#endif

namespace ifboost {

namespace fs = std::filesystem;

std::string toolkit_version() { return IFBOOST_VERSION; }

std::vector<QueryRecord> read_queries(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open queries file " + path.string());
  std::vector<QueryRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string_view t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '{') {
      try {
        Json j = Json::parse(t);
        out.push_back({j.value("id", std::string()), j.at("query").get<std::string>()});
      } catch (const Json::exception& e) {
        throw DatasetError(std::string("malformed query record: ") + e.what(), lineno);
      }
    } else {
      out.push_back({"", std::string(t)});
    }
  }
  return out;
}

std::string dataset_sha256(const Dataset& dataset) {
  std::ostringstream os;
  write_dataset(os, dataset);
  return templates::sha256_hex(os.str());
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

Json base_manifest(const std::string& command, std::uint64_t seed) {
  Json hashes = Json::object();
  for (const auto& [name, h] : templates::content_hashes()) hashes[name] = h;
  return Json{{"command", command},
              {"version", toolkit_version()},
              {"seed", seed},
              {"templates", hashes},
              {"started_at", utc_timestamp()}};
}

void write_json(const fs::path& path, const Json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

namespace {

Json dataset_info(const fs::path& path, const Dataset& d) {
  return Json{{"path", path.string()},
              {"sha256", dataset_sha256(d)},
              {"samples", d.samples.size()},
              {"instructions_per_sample", d.meta.instructions_per_sample}};
}

void write_lines(const fs::path& path, const std::vector<Json>& records) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
}

Json backend_info(const BackendConfig& config, const Gateway& gateway) {
  return Json{{"id", gateway.backend_id()},
              {"model_params", gateway.model_params()},
              {"config", config.to_json()}};
}

}  // namespace

// ---------------------------------------------------------------------------

DatasetGenResult cmd_dataset_gen(const DatasetGenOptions& options) {
  const ConstraintTable table =
      options.constraints ? ConstraintTable::load(*options.constraints) : ConstraintTable::defaults();
  const auto queries = read_queries(options.queries);

  std::unique_ptr<Gateway> gateway;
  std::unique_ptr<KeywordProvider> provider;
  if (options.keyword_backend) {
    gateway = make_gateway(*options.keyword_backend);
    provider = std::make_unique<ModelKeywordProvider>(*gateway);
  } else if (options.keywords_file) {
    provider = std::make_unique<WordlistKeywordProvider>(
        WordlistKeywordProvider::from_file(*options.keywords_file));
  } else {
    provider = std::make_unique<WordlistKeywordProvider>(WordlistKeywordProvider::builtin());
  }

  DatasetGenResult result;
  Dataset& d = result.dataset;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const std::string id = queries[i].id.empty() ? generated_sample_id(i) : queries[i].id;
    if (!ids.insert(id).second) throw DatasetError("duplicate query id '" + id + "'");
    try {
      auto instructions = sample_instruction_set(queries[i].query, options.n,
                                                 derive_seed(options.seed, i), provider.get(), table);
      d.samples.push_back({id, queries[i].query, std::move(instructions)});
    } catch (const SamplingExhausted& e) {
      result.failures.push_back(id + ": " + e.what());
    }
  }
  d.meta.instructions_per_sample = d.samples.empty() ? 0 : options.n;
  d.meta.seed = options.seed;
  d.meta.provenance = options.queries.string();
  if (options.shuffle) d = shuffle_instructions(d, options.seed);
  validate_dataset(d);
  save_dataset(options.out, d);

  Json manifest = base_manifest("dataset gen", options.seed);
  manifest["config"] = {{"queries", options.queries.string()},
                        {"n", options.n},
                        {"shuffle", options.shuffle},
                        {"keyword_provider", provider->id()},
                        {"constraints", table.to_json()}};
  if (options.keywords_file) manifest["config"]["keywords_file"] = options.keywords_file->string();
  if (gateway) manifest["backend"] = backend_info(*options.keyword_backend, *gateway);
  manifest["dataset"] = dataset_info(options.out, d);
  manifest["failures"] = result.failures;
  manifest["finished_at"] = utc_timestamp();
  write_json(fs::path(options.out.string() + ".manifest.json"), manifest);
  return result;
}

void cmd_dataset_scale(const fs::path& dataset, std::size_t n, std::uint64_t seed,
                       const fs::path& out) {
  Dataset d = load_dataset(dataset);
  Dataset scaled = scale_down(d, n, seed);
  save_dataset(out, scaled);
  Json manifest = base_manifest("dataset scale", seed);
  manifest["config"] = {{"source", dataset.string()}, {"n", n}};
  manifest["source_dataset"] = dataset_info(dataset, d);
  manifest["dataset"] = dataset_info(out, scaled);
  manifest["finished_at"] = utc_timestamp();
  write_json(fs::path(out.string() + ".manifest.json"), manifest);
}

// ---------------------------------------------------------------------------

BoostRunResult cmd_boost(const BoostRunOptions& options) {
  options.strategy.validate();
  const Dataset d = load_dataset(options.dataset);
  BackendConfig backend = options.backend;
  if (backend.kind == "http" && !backend.http.seed) backend.http.seed = options.seed;
  auto gateway = make_gateway(backend);

  Json manifest = base_manifest("boost run", options.seed);
  BoostRunResult result;
  result.outcomes = run_strategy(*gateway, d, options.strategy);
  result.summary = summarize(result.outcomes, std::string(to_string(options.strategy.kind)));

  std::vector<Json> lines;
  for (const auto& o : result.outcomes) lines.push_back(to_json(o));
  write_lines(options.out / "outcomes.jsonl", lines);
  write_json(options.out / "summary.json", to_json(result.summary));

  manifest["config"] = options.strategy.to_json();
  manifest["backend"] = backend_info(backend, *gateway);
  manifest["dataset"] = dataset_info(options.dataset, d);
  manifest["finished_at"] = utc_timestamp();
  write_json(options.out / "manifest.json", manifest);
  return result;
}

std::vector<BoostOutcome> load_outcomes(const fs::path& run_dir) {
  const fs::path path = run_dir / "outcomes.jsonl";
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<BoostOutcome> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    try {
      out.push_back(outcome_from_json(Json::parse(line)));
    } catch (const Json::parse_error& e) {
      throw Error(path.string() + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

ConflictReport cmd_conflict(const ConflictRunOptions& options) {
  const Dataset d = load_dataset(options.dataset);
  auto gateway = make_gateway(options.backend);

  std::map<std::string, double> if_rates;
  if (options.run) {
    for (const auto& o : load_outcomes(*options.run)) {
      if (!o.failed && !o.excluded && !o.verdicts_after.empty()) if_rates[o.sample_id] = o.if_after();
    }
  }

  Json manifest = base_manifest("conflict score", options.seed);
  ConflictReport report = run_conflict(*gateway, d, options.conflict, if_rates, options.bucket_width);

  std::vector<Json> pair_lines, score_lines, bucket_lines;
  for (const auto& p : report.pairs) pair_lines.push_back(to_json(p));
  for (const auto& s : report.scores) score_lines.push_back(to_json(s));
  for (const auto& b : report.buckets) bucket_lines.push_back(to_json(b));
  write_lines(options.out / "pairs.jsonl", pair_lines);
  write_lines(options.out / "scores.jsonl", score_lines);
  write_lines(options.out / "buckets.jsonl", bucket_lines);

  Json summary{{"samples", d.samples.size()},
               {"scored", report.scores.size()},
               {"skipped", report.skipped},
               {"pairs", report.pairs.size()},
               {"incomplete_pairs",
                std::count_if(report.pairs.begin(), report.pairs.end(),
                              [](const PairConflict& p) { return !p.complete; })},
               {"r", options.conflict.r},
               {"mean_score", report.mean_score},
               {"correlation", report.correlation ? Json(*report.correlation) : Json(nullptr)},
               {"correlation_notice", report.correlation_notice},
               {"bucket_width", options.bucket_width},
               {"cost", to_json(gateway->costs().total())}};
  write_json(options.out / "summary.json", summary);

  manifest["config"] = {{"r", options.conflict.r},
                        {"temperature", options.conflict.temperature},
                        {"bucket_width", options.bucket_width},
                        {"run", options.run ? Json(options.run->string()) : Json(nullptr)}};
  manifest["backend"] = backend_info(options.backend, *gateway);
  manifest["dataset"] = dataset_info(options.dataset, d);
  manifest["finished_at"] = utc_timestamp();
  write_json(options.out / "manifest.json", manifest);
  return report;
}

// ---------------------------------------------------------------------------

namespace {

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(3) << v;
  return os.str();
}

std::string render_table(const std::vector<std::string>& header,
                         const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      os << (c ? "  " : "") << std::left << std::setw(static_cast<int>(width[c])) << cells[c];
    }
    os << '\n';
  };
  line(header);
  std::vector<std::string> rule;
  for (std::size_t w : width) rule.emplace_back(w, '-');
  line(rule);
  for (const auto& r : rows) line(r);
  return os.str();
}

}  // namespace

RunReport cmd_report(const std::vector<fs::path>& run_dirs) {
  if (run_dirs.empty()) throw Error("report needs at least one run directory");
  struct Row {
    std::string run;
    EvalSummary summary;
    std::string dataset_sha;
  };
  std::vector<Row> rows;
  for (const auto& dir : run_dirs) {
    Row r;
    r.run = dir.string();
    r.summary = summary_from_json(read_json(dir / "summary.json"));
    Json manifest = read_json(dir / "manifest.json");
    r.dataset_sha = manifest.at("dataset").at("sha256").get<std::string>();
    rows.push_back(std::move(r));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.summary.strategy != b.summary.strategy) return a.summary.strategy < b.summary.strategy;
    return a.summary.instructions_per_sample < b.summary.instructions_per_sample;
  });

  RunReport report;
  // Runs plotted at the same instruction count must come from one dataset.
  std::map<std::size_t, std::set<std::string>> datasets_by_n;
  for (const auto& r : rows) datasets_by_n[r.summary.instructions_per_sample].insert(r.dataset_sha);
  for (const auto& [n, shas] : datasets_by_n) {
    if (shas.size() > 1) {
      report.warnings.push_back("incompatible runs: " + std::to_string(shas.size()) +
                                " different datasets at " + std::to_string(n) + " instructions");
    }
  }

  Json trend = Json::array(), cost = Json::array();
  std::vector<std::vector<std::string>> trend_rows, cost_rows;
  for (const auto& r : rows) {
    const EvalSummary& s = r.summary;
    trend.push_back({{"run", r.run},
                     {"strategy", s.strategy},
                     {"instructions", s.instructions_per_sample},
                     {"if_before", s.macro.before},
                     {"if_after", s.macro.after},
                     {"if_micro_after", s.micro.after},
                     {"if_inclusive_after", s.macro_inclusive.after},
                     {"included", s.included},
                     {"excluded_initial", s.excluded_initial},
                     {"additional_after", s.additional_after},
                     {"dataset_sha256", r.dataset_sha}});
    trend_rows.push_back({s.strategy, std::to_string(s.instructions_per_sample),
                          fixed(s.macro.before, 4), fixed(s.macro.after, 4),
                          fixed(s.micro.after, 4),
                          std::to_string(s.included) + "/" + std::to_string(s.samples),
                          std::to_string(s.excluded_initial), std::to_string(s.additional_after)});
    cost.push_back({{"run", r.run},
                    {"strategy", s.strategy},
                    {"instructions", s.instructions_per_sample},
                    {"est_flops", s.cost.est_flops},
                    {"completion_tokens", s.cost.completion_tokens},
                    {"calls", s.cost.calls},
                    {"if_after", s.macro.after}});
    cost_rows.push_back({s.strategy, std::to_string(s.instructions_per_sample), sci(s.cost.est_flops),
                         std::to_string(s.cost.completion_tokens), std::to_string(s.cost.calls),
                         fixed(s.macro.after, 4)});
  }
  report.tables = Json{{"if_by_instruction_count", trend},
                       {"cost_vs_if", cost},
                       {"warnings", report.warnings}};
  std::ostringstream os;
  os << "IF rate by instruction count\n"
     << render_table({"strategy", "n", "if_before", "if_after", "micro_after", "included",
                      "gated_initial", "gated_after"},
                     trend_rows)
     << "\nCost vs IF rate\n"
     << render_table({"strategy", "n", "est_flops", "completion_tokens", "calls", "if_after"},
                     cost_rows);
  for (const auto& w : report.warnings) os << "\nWARNING: " << w << '\n';
  report.text = os.str();
  return report;
}

}  // namespace ifboost
