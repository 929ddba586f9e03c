#include <CLI11.hpp>

#include <iostream>

#include "ifboost/commands.hpp"

namespace fs = std::filesystem;
using namespace ifboost;

namespace {

struct BackendFlags {
  std::string backend;
  std::string mock_script;
  std::size_t max_in_flight = 0;

  void attach(CLI::App* app) {
    app->add_option("--backend", backend, "Backend config file (JSON)");
    app->add_option("--mock-script", mock_script, "Scripted mock backend file")
        ->check(CLI::ExistingFile);
    app->add_option("--max-in-flight", max_in_flight, "Concurrent request limit");
  }

  bool given() const { return !backend.empty() || !mock_script.empty(); }

  BackendConfig resolve() const {
    BackendConfig c;
    if (!backend.empty()) {
      c = BackendConfig::load(backend);
    } else if (mock_script.empty()) {
      throw Error("no backend configured: pass --backend or --mock-script");
    }
    if (!mock_script.empty()) {
      c.kind = "mock";
      c.mock_script = mock_script;
    }
    if (max_in_flight) c.max_in_flight = max_in_flight;
    // Fail fast on an unusable configuration before any work starts.
    make_backend(c);
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Instruction-following dataset generation, boosting and conflict analysis"};
  app.set_version_flag("--version", toolkit_version());
  app.require_subcommand(1);

  // dataset gen / dataset scale
  auto* dataset = app.add_subcommand("dataset", "Build or transform datasets");
  dataset->require_subcommand(1);

  DatasetGenOptions gen;
  std::string gen_queries, gen_out, gen_keywords, gen_constraints, keyword_source = "wordlist";
  bool no_shuffle = false;
  BackendFlags gen_backend;
  auto* gen_cmd = dataset->add_subcommand("gen", "Sample instruction sets for a query file");
  gen_cmd->add_option("--queries", gen_queries, "Query file (text or records per line)")
      ->required()
      ->check(CLI::ExistingFile);
  gen_cmd->add_option("--n", gen.n, "Instructions per sample")->check(CLI::Range(1, 10));
  gen_cmd->add_option("--seed", gen.seed, "Sampling seed");
  gen_cmd->add_option("--out", gen_out, "Output dataset file")->required();
  gen_cmd->add_option("--keywords", gen_keywords, "Word list for the offline keyword provider")
      ->check(CLI::ExistingFile);
  gen_cmd->add_option("--keyword-source", keyword_source, "wordlist or model")
      ->check(CLI::IsMember({"wordlist", "model"}));
  gen_cmd->add_option("--constraints", gen_constraints, "Constraint table override (JSON)")
      ->check(CLI::ExistingFile);
  gen_cmd->add_flag("--no-shuffle", no_shuffle, "Keep sampled instruction order");
  gen_backend.attach(gen_cmd);

  std::string scale_dataset, scale_out;
  std::size_t scale_n = 0;
  std::uint64_t scale_seed = 0;
  auto* scale_cmd = dataset->add_subcommand("scale", "Keep n random instructions per sample");
  scale_cmd->add_option("--dataset", scale_dataset)->required()->check(CLI::ExistingFile);
  scale_cmd->add_option("--n", scale_n)->required();
  scale_cmd->add_option("--seed", scale_seed);
  scale_cmd->add_option("--out", scale_out)->required();

  // boost run
  auto* boost = app.add_subcommand("boost", "Instruction boosting");
  boost->require_subcommand(1);
  std::string boost_dataset, boost_out, strategy_name, reward_name;
  int n_samples = 5;
  std::uint64_t boost_seed = 0;
  bool rewrites_only = false, no_adherence = false;
  double temperature = -1;
  BackendFlags boost_backend;
  auto* run_cmd = boost->add_subcommand("run", "Run a boosting strategy over a dataset");
  run_cmd->add_option("--dataset", boost_dataset)->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--strategy", strategy_name,
                      "detect_repair, detect_repair_expl, best_of_n, best_of_n_oracle, "
                      "best_of_n_gen or map_reduce")
      ->required();
  run_cmd->add_option("--n", n_samples, "Candidates for Best-of-N strategies")
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("--reward", reward_name, "judge or oracle")
      ->check(CLI::IsMember({"judge", "oracle"}));
  run_cmd->add_option("--temperature", temperature, "Generation and rewrite temperature");
  run_cmd->add_flag("--rewrites-only", rewrites_only,
                    "Select among rewrites only (initial response not in the pool)");
  run_cmd->add_flag("--no-adherence", no_adherence, "Skip task-adherence judging");
  run_cmd->add_option("--seed", boost_seed);
  run_cmd->add_option("--out", boost_out, "Run directory")->required();
  boost_backend.attach(run_cmd);

  // conflict score
  auto* conflict = app.add_subcommand("conflict", "Soft-conflict analysis");
  conflict->require_subcommand(1);
  ConflictRunOptions copt;
  std::string conflict_dataset, conflict_out, conflict_run;
  BackendFlags conflict_backend;
  auto* score_cmd = conflict->add_subcommand("score", "Estimate pairwise conflict scores");
  score_cmd->add_option("--dataset", conflict_dataset)->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--r", copt.conflict.r, "Responses per instruction pair")
      ->check(CLI::PositiveNumber);
  score_cmd->add_option("--bucket-width", copt.bucket_width)->check(CLI::Range(1e-6, 1.0));
  score_cmd->add_option("--run", conflict_run, "Boost run directory supplying IF rates")
      ->check(CLI::ExistingDirectory);
  score_cmd->add_option("--seed", copt.seed);
  score_cmd->add_option("--out", conflict_out, "Report directory")->required();
  conflict_backend.attach(score_cmd);

  // report
  std::vector<std::string> report_runs;
  std::string report_out;
  auto* report_cmd = app.add_subcommand("report", "Compare boost runs");
  report_cmd->add_option("runs", report_runs, "Run directories")
      ->required()
      ->check(CLI::ExistingDirectory);
  report_cmd->add_option("--out", report_out, "Write machine-readable tables here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) {
      gen.queries = gen_queries;
      gen.out = gen_out;
      gen.shuffle = !no_shuffle;
      if (!gen_keywords.empty()) gen.keywords_file = gen_keywords;
      if (!gen_constraints.empty()) gen.constraints = gen_constraints;
      if (keyword_source == "model") gen.keyword_backend = gen_backend.resolve();
      auto result = cmd_dataset_gen(gen);
      std::cout << "wrote " << result.dataset.samples.size() << " samples to " << gen_out << '\n';
      for (const auto& f : result.failures) std::cerr << "sampling failed for " << f << '\n';
      return result.failures.empty() ? 0 : 3;
    }
    if (*scale_cmd) {
      cmd_dataset_scale(scale_dataset, scale_n, scale_seed, scale_out);
      std::cout << "wrote " << scale_out << '\n';
      return 0;
    }
    if (*run_cmd) {
      BoostRunOptions opt;
      opt.dataset = boost_dataset;
      opt.out = boost_out;
      opt.seed = boost_seed;
      opt.strategy = StrategyConfig::for_kind(strategy_from_string(strategy_name));
      opt.strategy.n_samples = n_samples;
      if (!reward_name.empty()) {
        opt.strategy.reward = reward_name == "oracle" ? Reward::Oracle : Reward::Judge;
      }
      if (temperature >= 0) opt.strategy.temperature = temperature;
      opt.strategy.include_initial = !rewrites_only;
      opt.strategy.check_adherence = !no_adherence;
      opt.strategy.validate();
      opt.backend = boost_backend.resolve();
      auto result = cmd_boost(opt);
      const auto& s = result.summary;
      std::cout << "strategy " << s.strategy << ": IF " << s.macro.before << " -> " << s.macro.after
                << " over " << s.included << "/" << s.samples << " samples\n";
      if (s.with_errors) std::cout << s.with_errors << " sample(s) recorded errors\n";
      return 0;
    }
    if (*score_cmd) {
      copt.dataset = conflict_dataset;
      copt.out = conflict_out;
      if (!conflict_run.empty()) copt.run = conflict_run;
      copt.backend = conflict_backend.resolve();
      auto report = cmd_conflict(copt);
      std::cout << "scored " << report.scores.size() << " samples; mean conflict score "
                << report.mean_score << '\n';
      if (report.correlation) {
        std::cout << "pearson(IF rate, conflict score) = " << *report.correlation << '\n';
      } else {
        std::cout << report.correlation_notice << '\n';
      }
      return 0;
    }
    if (*report_cmd) {
      std::vector<fs::path> dirs(report_runs.begin(), report_runs.end());
      RunReport report = cmd_report(dirs);
      std::cout << report.text;
      if (!report_out.empty()) write_json(report_out, report.tables);
      return report.warnings.empty() ? 0 : 4;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
