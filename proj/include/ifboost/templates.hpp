#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace ifboost::templates {

struct Asset {
  std::string name;
  std::string content;
};

namespace detail {
const std::vector<Asset>& embedded_assets();
}

inline constexpr std::string_view kDetect = "detect";
inline constexpr std::string_view kRepair = "repair";
inline constexpr std::string_view kBestOfN = "best_of_n";
inline constexpr std::string_view kBestOfNGen = "best_of_n_gen";
inline constexpr std::string_view kMapReduce = "map_reduce";
inline constexpr std::string_view kInitialGeneration = "initial_generation";
inline constexpr std::string_view kTaskAdherence = "task_adherence_check";
inline constexpr std::string_view kKeywordSuggestion = "keyword_suggestion";

/// `${name}` placeholders, or `{name}` as used by the generation template.
enum class Syntax { Dollar, Brace };

using Vars = std::map<std::string, std::string, std::less<>>;

std::vector<std::string> names();

/// Raw template text; throws ifboost::Error for an unknown name.
const std::string& get(std::string_view name);

Syntax syntax_of(std::string_view name);

/// Single-pass substitution. Inserted values are never rescanned, so a value
/// containing `${x}` stays literal. A placeholder without a value throws.
std::string render_text(std::string_view content, const Vars& vars, Syntax syntax);

std::string render(std::string_view name, const Vars& vars);

std::string sha256_hex(std::string_view data);

/// name -> SHA-256 of the template text, for run manifests.
std::map<std::string, std::string> content_hashes();

}  // namespace ifboost::templates
