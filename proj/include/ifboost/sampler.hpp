#pragma once

#include <climits>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ifboost/core.hpp"
#include "ifboost/random.hpp"

namespace ifboost {

class Gateway;

enum class ConstraintKind {
  NumericBound,
  KeywordDisjointness,
  ThreeWayLength,
  Exclusion,
  ForcedText,
};

std::string_view to_string(ConstraintKind kind);

/// A restriction on a candidate instruction induced by instructions already
/// in the set. `holds` is the authoritative test; `param`/`min`/`max` and
/// `excluded_words` narrow the parameter draw.
struct Constraint {
  ConstraintKind kind = ConstraintKind::NumericBound;
  std::vector<std::string> subject;  // class ids involved
  std::string description;
  std::function<bool(const Instruction& candidate)> holds;
  // Optional: a message naming the measured values for a failing candidate.
  std::function<std::string(const Instruction& candidate)> explain;

  std::string param;
  long long min = LLONG_MIN;
  long long max = LLONG_MAX;
  std::set<std::string> excluded_words;
};

/// value(target.target_param) >= factor * value(source.source_param).
/// With `relation_aware`, the target side is the largest count its relation
/// admits ("less than 20" admits 19; "at least" admits any count).
struct RatioRule {
  std::string target;
  std::string target_param;
  std::string source;
  std::string source_param;
  long long factor = 1;
  bool relation_aware = false;
};

/// words >= (sentences + offset) * (sentence_length + offset)
struct ThreeWayRule {
  std::string words_class = "length_constraints:number_words";
  std::string sentences_class = "length_constraints:number_sentences";
  std::string sentence_length_class = "length_constraints:sentence_length";
  long long offset = 3;
};

struct IntRange {
  long long lo = 0;
  long long hi = 0;
};

/// Everything the sampler treats as configuration. `defaults()` is the
/// shipped table; `from_json` overlays a config file on top of it.
struct ConstraintTable {
  std::map<std::string, IntRange> ranges;  // "class_id.param" -> range
  std::vector<std::string> relations;      // drawn for relation parameters
  std::vector<std::pair<std::string, std::string>> exclusions;
  std::vector<RatioRule> ratios;
  std::optional<ThreeWayRule> three_way;
  bool keyword_disjointness = true;
  bool forced_text_rules = true;
  std::vector<std::string> start_phrases;
  std::vector<std::string> end_phrases;
  std::size_t keywords_per_list = 2;
  std::size_t max_rejections = 100;
  std::size_t param_attempts = 32;

  static ConstraintTable defaults();
  static ConstraintTable from_json(const Json& j);
  static ConstraintTable load(const std::filesystem::path& path);
  Json to_json() const;

  IntRange range(std::string_view class_id, std::string_view param) const;
  bool excluded(std::string_view a, std::string_view b) const;
};

/// Source of query-relevant keywords for the keyword-bearing classes.
class KeywordProvider {
 public:
  virtual ~KeywordProvider() = default;
  /// Up to `count` distinct words not in `excluded` (keys are lower-case).
  /// Fewer than `count` means the provider is exhausted.
  virtual std::vector<std::string> keywords(std::string_view query,
                                            std::size_t count,
                                            const std::set<std::string>& excluded,
                                            Rng& rng) = 0;
  virtual std::string id() const = 0;
};

/// Offline provider drawing uniformly from a fixed word list.
class WordlistKeywordProvider : public KeywordProvider {
 public:
  explicit WordlistKeywordProvider(std::vector<std::string> words);
  static WordlistKeywordProvider builtin();
  static WordlistKeywordProvider from_file(const std::filesystem::path& path);

  std::vector<std::string> keywords(std::string_view query, std::size_t count,
                                    const std::set<std::string>& excluded,
                                    Rng& rng) override;
  std::string id() const override { return "wordlist"; }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
};

/// Asks the model for words relevant to the query (one call per distinct
/// query, cached) and draws from that list.
class ModelKeywordProvider : public KeywordProvider {
 public:
  explicit ModelKeywordProvider(Gateway& gateway, std::size_t pool_size = 20);

  std::vector<std::string> keywords(std::string_view query, std::size_t count,
                                    const std::set<std::string>& excluded,
                                    Rng& rng) override;
  std::string id() const override { return "model"; }

  /// Parses a model reply into distinct single-word keywords.
  static std::vector<std::string> parse_reply(std::string_view reply);

 private:
  const std::vector<std::string>& pool_for(std::string_view query);

  Gateway& gateway_;
  std::size_t pool_size_;
  std::mutex mu_;
  std::map<std::string, std::vector<std::string>, std::less<>> cache_;
};

/// Raised when no full instruction set can be assembled.
class SamplingExhausted : public Error {
 public:
  using Error::Error;
};

/// Constraints that instructions in `chosen` impose on a candidate of class
/// `candidate_class`.
std::vector<Constraint> compute_constraints(
    const std::vector<Instruction>& chosen, std::string_view candidate_class,
    const ConstraintTable& table = ConstraintTable::defaults());

struct ParameterDraw {
  std::optional<Json> parameters;
  std::string rejection;  // set when parameters is empty
};

/// Draws parameters for `class_id` satisfying every constraint, or reports
/// a rejection after `table.param_attempts` tries.
ParameterDraw sample_parameters(std::string_view class_id,
                                const std::vector<Constraint>& constraints,
                                std::string_view query, Rng& rng,
                                KeywordProvider* keywords,
                                const ConstraintTable& table =
                                    ConstraintTable::defaults());

/// Constrained instruction sampling: classes are drawn uniformly without
/// replacement; a class whose parameters cannot satisfy the constraints from
/// the set so far is rejected.
std::vector<Instruction> sample_instruction_set(
    std::string_view query, std::size_t n, std::uint64_t seed,
    KeywordProvider* keywords,
    const ConstraintTable& table = ConstraintTable::defaults());

/// Constraints violated by the set; empty iff it is free of hard conflicts.
std::vector<Constraint> audit_set(
    const std::vector<Instruction>& instructions,
    const ConstraintTable& table = ConstraintTable::defaults());

}  // namespace ifboost
