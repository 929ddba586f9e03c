#include <doctest.h>

#include <cmath>

#include "ifboost/conflict.hpp"
#include "support.hpp"

using namespace ifboost;
using ifboost::testing::make_sample;

namespace {

// Textbook two-pass formula, kept separate from the library's.
double closed_form_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - sx / n) * (y[i] - sy / n);
    sxx += (x[i] - sx / n) * (x[i] - sx / n);
    syy += (y[i] - sy / n) * (y[i] - sy / n);
  }
  return sxy / std::sqrt(sxx * syy);
}

Sample pair_sample() {
  return make_sample("p", "Describe fog.",
                     {{"punctuation:no_comma", Json::object()},
                      {"change_case:lowercase_sentences", Json::object()}});
}

}  // namespace

TEST_CASE("pearson hand cases") {
  struct Case {
    std::vector<double> x, y;
    double expect;
  };
  const std::vector<Case> cases = {
      {{1, 2, 3}, {6, 4, 5}, -0.5},
      {{1, 2, 3}, {2, 4, 6}, 1.0},
      {{1, 2, 3, 4}, {4, 3, 2, 1}, -1.0},
      {{1, 2, 3, 4}, {1, 3, 2, 4}, 0.8},
      {{0, 1, 0, 1}, {0, 0, 1, 1}, 0.0},
  };
  for (const auto& c : cases) {
    const double got = pearson(c.x, c.y);
    CHECK(std::abs(got - c.expect) < 1e-12);
    CHECK(std::abs(got - closed_form_pearson(c.x, c.y)) < 1e-12);
  }
  CHECK_THROWS_AS(pearson({1, 2}, {1}), Error);
  CHECK_THROWS_AS(pearson({1}, {1}), Error);
  CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), Error);
}

TEST_CASE("bucket SEM is the sample standard deviation over root n") {
  auto rows = bucket_by_if_rate({0.41, 0.45, 0.49}, {1.0, 2.0, 4.0}, 0.1);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].n == 3);
  CHECK(rows[0].lo == doctest::Approx(0.4));
  CHECK(rows[0].hi == doctest::Approx(0.5));
  CHECK(rows[0].mean == doctest::Approx(7.0 / 3));
  // Sample variance: (16/9 + 1/9 + 25/9) / 2 = 7/3.
  CHECK(std::abs(rows[0].sem - std::sqrt(7.0 / 3) / std::sqrt(3.0)) < 1e-12);
}

TEST_CASE("bucket boundaries and empty buckets") {
  auto rows = bucket_by_if_rate({0.0, 0.05, 0.1, 0.3, 0.95, 1.0}, {1, 3, 5, 7, 2, 4}, 0.1);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].n == 2);
  CHECK(rows[0].mean == doctest::Approx(2.0));
  CHECK(rows[1].lo == doctest::Approx(0.1));
  CHECK(rows[1].n == 1);
  CHECK(rows[1].sem == 0.0);
  CHECK(rows[2].lo == doctest::Approx(0.3));
  CHECK(rows[3].lo == doctest::Approx(0.9));
  CHECK(rows[3].n == 2);  // 1.0 lands in the last bucket
  CHECK_THROWS(bucket_by_if_rate({0.1}, {1, 2}, 0.1));
}

TEST_CASE("conflict score for two instructions") {
  Sample s = pair_sample();
  std::map<std::string, long long> counts{
      {pair_key(s.query, s.instructions[0], s.instructions[1]), 3}};
  ConflictScore c = conflict_score(s, counts);
  CHECK(c.score == 3.0);
  CHECK(c.unordered_sum == 3);
  CHECK(c.k == 2);
  CHECK_THROWS_AS(conflict_score(s, {}), Error);
}

TEST_CASE("pair keys ignore order") {
  Sample s = pair_sample();
  CHECK(pair_key("q", s.instructions[0], s.instructions[1]) ==
        pair_key("q", s.instructions[1], s.instructions[0]));
  CHECK(pair_key("q", s.instructions[0], s.instructions[1]) !=
        pair_key("other", s.instructions[0], s.instructions[1]));
}

TEST_CASE("pairwise expansion deduplicates shared pairs") {
  Sample a = make_sample("a", "q", {{"punctuation:no_comma", Json::object()},
                                    {"detectable_format:title", Json::object()},
                                    {"startend:quotation", Json::object()}});
  Sample b = a;
  b.id = "b";
  std::swap(b.instructions[0], b.instructions[2]);
  Dataset d{{a, b}, {}};
  PairExpansion e = expand_pairwise(d);
  CHECK(e.pairs.samples.size() == 3);
  CHECK(e.keys.size() == 3);
  for (const auto& [key, ids] : e.derived_ids) CHECK(ids.size() == 2);
  CHECK(e.pairs.samples[0].id == "a#0-1");

  Dataset single{{make_sample("s", "q", {{"punctuation:no_comma", Json::object()}})}, {}};
  CHECK_THROWS_AS(expand_pairwise(single), DatasetError);
}

TEST_CASE("violation counting") {
  Sample s = pair_sample();
  CHECK(count_violations(s, {"fine text.", "Bad start.", "bad, comma.", "ok"}) == 2);
}

TEST_CASE("conflict scores agree with a brute-force recomputation") {
  auto run = ifboost::testing::run_conflict_oracle_fixture();
  CHECK(run.checked == 5);
  for (const auto& m : run.mismatches) FAIL_CHECK(m);
  CHECK(run.report.pairs.size() <= 5 * 6);
  CHECK(run.report.skipped.empty());
  CHECK_FALSE(run.report.correlation);
}

TEST_CASE("incomplete pairs are skipped, not fatal") {
  Json script{{"rules",
               {{{"match", {{"contains", "commas"}}}, {"errors", {"permanent"}}, {"completions", {"x"}}},
                {{"match", Json::object()}, {"completions", {"fine text."}}}}}};
  Gateway gw(std::make_unique<MockBackend>(script));
  Sample ok = make_sample("ok", "q1", {{"detectable_format:title", Json::object()},
                                       {"startend:quotation", Json::object()}});
  Dataset d{{pair_sample(), ok}, {}};
  ConflictReport r = run_conflict(gw, d, ConflictOptions{2, 0.7, 64}, {{"ok", 0.5}, {"p", 0.5}}, 0.1);
  CHECK(r.skipped == std::vector<std::string>{"p"});
  REQUIRE(r.scores.size() == 1);
  // "fine text." has no title and no quotes: both responses violate.
  CHECK(r.scores[0].score == 2.0);
  CHECK_FALSE(r.correlation);
  CHECK_FALSE(r.correlation_notice.empty());
}

TEST_CASE("positional IF rates") {
  std::vector<std::vector<Verdict>> rows;
  for (int r = 0; r < 4; ++r) {
    rows.push_back({{"a", false, ""}, {"b", r % 2 == 0, ""}, {"c", true, ""}});
  }
  auto p = positional_if_rate(rows);
  CHECK(p == std::vector<double>{0.0, 0.5, 1.0});
  rows.push_back({{"a", true, ""}});
  CHECK_THROWS_AS(positional_if_rate(rows), Error);
  CHECK(positional_if_rate({}).empty());
}
