#include <doctest.h>

#include "ifboost/judge.hpp"
#include "support.hpp"

using namespace ifboost;
using ifboost::testing::make_sample;

namespace {

std::string verdict_array(const std::vector<std::string>& answers) {
  Json a = Json::array();
  for (std::size_t i = 0; i < answers.size(); ++i) {
    a.push_back({{"policy", "policy " + std::to_string(i + 1)},
                 {"answer", answers[i]},
                 {"explanation", "because " + std::to_string(i + 1)}});
  }
  return a.dump();
}

using ifboost::testing::judge_fixtures;

}  // namespace

TEST_CASE("judge output fixtures are accepted or rejected correctly") {
  for (const auto& f : judge_fixtures()) {
    INFO(f.name);
    ParseResult r = parse_judge_output(f.raw, f.n);
    CHECK(r.failure == f.expect);
    if (f.expect == ParseFailure::None) {
      CHECK(r.verdicts.size() == f.n);
    } else {
      CHECK_FALSE(r.reason.empty());
    }
  }
}

TEST_CASE("answers are normalized and verdict order follows the array") {
  ParseResult r = parse_judge_output(verdict_array({" Yes", "NO", "yes"}), 3);
  REQUIRE(r.ok());
  CHECK(r.verdicts[0].answer == "yes");
  CHECK(r.verdicts[1].answer == "no");
  CHECK(r.verdicts[1].policy == "policy 2");
  CHECK(r.verdicts[1].explanation == "because 2");
}

TEST_CASE("reports map 'no' answers to instruction indices") {
  JudgeReport rep = make_report(verdict_array({"yes", "no", "yes", "no"}), 4);
  CHECK(rep.parse_ok);
  CHECK(rep.violated == std::vector<std::size_t>{1, 3});
  CHECK(rep.followed_fraction(4) == doctest::Approx(0.5));
  JudgeReport back = judge_report_from_json(to_json(rep));
  CHECK(back.violated == rep.violated);
  CHECK(back.verdicts == rep.verdicts);
}

TEST_CASE("a parse failure marks every instruction violated") {
  for (const auto& f : judge_fixtures()) {
    if (f.expect == ParseFailure::None) continue;
    INFO(f.name);
    JudgeReport rep = make_report(f.raw, f.n);
    CHECK_FALSE(rep.parse_ok);
    CHECK(rep.violated.size() == f.n);
    CHECK(rep.followed_fraction(f.n) == 0.0);
    CHECK(rep.failure.find(std::string(to_string(f.expect))) == 0);
  }
}

TEST_CASE("numbered policies") {
  Sample s = make_sample("s", "q", {{"punctuation:no_comma", Json::object()},
                                    {"detectable_format:title", Json::object()}});
  std::string p = numbered_policies(s.instructions);
  CHECK(p == "1. " + s.instructions[0].description + "\n2. " + s.instructions[1].description);
}

TEST_CASE("detector and adherence calls go through the gateway") {
  Json script{{"rules",
               {{{"match", {{"role", "judge"}}}, {"completions", {verdict_array({"no", "yes"})}}},
                {{"match", {{"role", "adherence"}}}, {"completions", {"Yes, it does."}}}}}};
  Gateway gw(std::make_unique<MockBackend>(script));
  Sample s = make_sample("s", "q", {{"punctuation:no_comma", Json::object()},
                                    {"detectable_format:title", Json::object()}});
  CostTracker sink;
  JudgeReport rep = detect_violations(gw, "a, b", s.instructions, &sink);
  CHECK(rep.violated == std::vector<std::size_t>{0});
  CHECK(check_task_adherence(gw, "q", "text", &sink));
  CHECK(sink.total().calls == 2);
  CHECK(sink.by_role().at("judge").calls == 1);
  CHECK(sink.by_role().at("adherence").calls == 1);
}

TEST_CASE("adherence reply parsing") {
  CHECK(parse_adherence_reply("yes"));
  CHECK(parse_adherence_reply("  **Yes** it answers"));
  CHECK_FALSE(parse_adherence_reply("No."));
  CHECK_FALSE(parse_adherence_reply("yesterday"));
  CHECK_FALSE(parse_adherence_reply(""));
}

TEST_CASE("judge accuracy against the oracle") {
  Dataset d;
  std::vector<std::string> responses;
  std::vector<JudgeReport> agree, disagree, mixed;
  for (int i = 0; i < 100; ++i) {
    d.samples.push_back(make_sample("s" + std::to_string(i), "q",
                                    {{"punctuation:no_comma", Json::object()}}));
    // Even samples follow the instruction, odd ones do not.
    const bool followed = i % 2 == 0;
    responses.push_back(followed ? "no commas" : "a, b");
    const std::string right = followed ? "yes" : "no";
    const std::string wrong = followed ? "no" : "yes";
    agree.push_back(make_report(verdict_array({right}), 1));
    disagree.push_back(make_report(verdict_array({wrong}), 1));
    mixed.push_back(make_report(verdict_array({i < 73 ? right : wrong}), 1));
  }
  CHECK(judge_accuracy(d, responses, agree) == 1.0);
  CHECK(judge_accuracy(d, responses, disagree) == 0.0);
  CHECK(judge_accuracy(d, responses, mixed) == doctest::Approx(0.73));

  responses.pop_back();
  CHECK_THROWS_AS(judge_accuracy(d, responses, agree), Error);
  CHECK_THROWS_AS(judge_accuracy(Dataset{}, {}, {}), Error);
}
