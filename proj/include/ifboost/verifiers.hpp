#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ifboost/core.hpp"
#include "ifboost/text.hpp"

namespace ifboost {

/// Numeric relations accepted by the counting classes.
inline constexpr std::string_view kRelations[] = {"at least", "less than",
                                                  "exactly", "at most"};

bool is_relation(std::string_view r);

/// Applies `relation` as "measured <relation> bound".
bool compare(std::string_view relation, long long measured, long long bound);

enum class ParamType { Integer, Relation, Word, Text, WordList, Letter, Choice };

struct ParamSpec {
  std::string name;
  ParamType type = ParamType::Integer;
  long long min = 0;  // Integer lower bound; WordList minimum length
  long long max = 0;  // Integer upper bound, 0 = unbounded
  std::vector<std::string> choices;  // Choice only
};

using CheckFn = std::function<Verdict(const Json& params,
                                      const SegmentedText& text)>;
using DescribeFn = std::function<std::string(const Json& params)>;

struct ClassEntry {
  std::string class_id;
  std::vector<ParamSpec> params;
  DescribeFn describe;
  CheckFn check;
  // Cross-parameter rules; throws SchemaError. May be empty.
  std::function<void(const Json& params)> validate_extra;
};

/// The 26 instruction classes: parameter schema, description template and
/// check procedure for each. Read-only after construction.
class VerifierRegistry {
 public:
  static const VerifierRegistry& instance();

  std::span<const ClassEntry> entries() const { return entries_; }
  std::vector<std::string> class_ids() const;
  const ClassEntry* find(std::string_view class_id) const;
  const ClassEntry& at(std::string_view class_id) const;  // throws SchemaError

  /// Throws SchemaError naming the first mismatch.
  void validate(const Instruction& instruction) const;
  void validate_parameters(std::string_view class_id, const Json& params) const;

  std::string describe(std::string_view class_id, const Json& params) const;

  /// Builds a validated instruction with its canonical description.
  Instruction make(std::string class_id, Json params) const;

 private:
  VerifierRegistry();
  std::vector<ClassEntry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

const VerifierRegistry& registry();

Verdict verify(const Instruction& instruction, std::string_view text);
Verdict verify(const Instruction& instruction, const SegmentedText& text);

/// One verdict per instruction, in sample order.
std::vector<Verdict> verify_all(const Sample& sample, std::string_view text);

/// Fraction of verdicts followed; 0 for an empty list.
double followed_fraction(std::span<const Verdict> verdicts);

}  // namespace ifboost
