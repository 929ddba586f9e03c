#include "ifboost/sampler.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ifboost/gateway.hpp"
#include "ifboost/templates.hpp"
#include "ifboost/text.hpp"
#include "ifboost/verifiers.hpp"

namespace ifboost {

std::string_view to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::NumericBound: return "numeric-bound";
    case ConstraintKind::KeywordDisjointness: return "keyword-disjointness";
    case ConstraintKind::ThreeWayLength: return "three-way-length";
    case ConstraintKind::Exclusion: return "exclusion";
    case ConstraintKind::ForcedText: return "forced-text";
  }
  return "unknown";
}

namespace {

constexpr std::string_view kWords = "length_constraints:number_words";
constexpr std::string_view kSentences = "length_constraints:number_sentences";
constexpr std::string_view kSentenceLength = "length_constraints:sentence_length";
constexpr std::string_view kParagraphs = "length_constraints:number_paragraphs";
constexpr std::string_view kNthParagraph =
    "length_constraints:nth_paragraph_first_word";
constexpr std::string_view kSections = "detectable_format:multiple_sections";
constexpr std::string_view kExistence = "keywords:existence";
constexpr std::string_view kForbidden = "keywords:forbidden_words";
constexpr std::string_view kFrequency = "keywords:frequency";
constexpr std::string_view kLetter = "keywords:letter_frequency";
constexpr std::string_view kCapital = "change_case:capital_word_frequency";
constexpr std::string_view kLowercase = "change_case:lowercase_sentences";
constexpr std::string_view kNoComma = "punctuation:no_comma";
constexpr std::string_view kRepeat = "combination:repeat_prompt";
constexpr std::string_view kStart = "startend:start_checker";
constexpr std::string_view kEnd = "startend:end_checker";
constexpr std::string_view kConstrained = "detectable_format:constrained_response";
constexpr std::string_view kPostscript = "detectable_content:postscript";

long long int_param(const Instruction& i, const std::string& name) {
  return i.parameters.at(name).get<long long>();
}

/// Largest count admitted by "count <relation> n".
long long capacity(std::string_view relation, long long n) {
  if (relation == "less than") return n - 1;
  if (relation == "at most" || relation == "exactly") return n;
  return LLONG_MAX;
}

const char* relation_param(std::string_view class_id) {
  if (class_id == kLetter) return "let_relation";
  if (class_id == kCapital) return "capital_relation";
  return "relation";
}

// Value used on the target side of a ratio rule.
long long target_value(const Instruction& i, const RatioRule& r) {
  long long v = int_param(i, r.target_param);
  if (!r.relation_aware) return v;
  const char* rel = relation_param(i.class_id);
  if (!i.parameters.contains(rel)) return v;
  return capacity(i.parameters.at(rel).get<std::string>(), v);
}

// ---------------------------------------------------------------------------
// Text an instruction forces into every compliant response.

struct Forced {
  std::string text;
  bool exact_case = false;
  long long repeat = 1;
  long long extra_words = 0;  // words forced but not spelled out
};

bool is_keyword_class(std::string_view c) {
  return c == kExistence || c == kForbidden || c == kFrequency ||
         c == kNthParagraph;
}

std::vector<std::string> keyword_words(const Instruction& i) {
  const Json& p = i.parameters;
  if (i.class_id == kExistence) return p.at("keywords").get<std::vector<std::string>>();
  if (i.class_id == kForbidden) {
    return p.at("forbidden_words").get<std::vector<std::string>>();
  }
  if (i.class_id == kFrequency) return {p.at("keyword").get<std::string>()};
  if (i.class_id == kNthParagraph) return {p.at("first_word").get<std::string>()};
  return {};
}

std::vector<Forced> forced_texts(const Instruction& i) {
  const Json& p = i.parameters;
  const std::string_view c = i.class_id;
  if (c == kRepeat) return {{p.at("prompt_to_repeat").get<std::string>(), true, 1}};
  if (c == kStart) return {{p.at("start_phrase").get<std::string>(), false, 1}};
  if (c == kEnd) return {{p.at("end_phrase").get<std::string>(), false, 1}};
  if (c == kConstrained) return {{"My answer is", true, 1, 1}};
  if (c == kSections) {
    return {{p.at("section_spliter").get<std::string>() + " 0", true,
             p.at("num_sections").get<long long>()}};
  }
  if (c == kPostscript) return {{p.at("postscript_marker").get<std::string>(), false, 1}};
  if (c == kExistence) {
    std::vector<Forced> out;
    for (const auto& w : p.at("keywords")) out.push_back({w.get<std::string>(), false, 1});
    return out;
  }
  if (c == kFrequency) {
    auto rel = p.at("relation").get<std::string>();
    if (rel == "at least" || rel == "exactly") {
      return {{p.at("keyword").get<std::string>(), false,
               p.at("frequency").get<long long>()}};
    }
    return {};
  }
  if (c == kNthParagraph) return {{p.at("first_word").get<std::string>(), false, 1}};
  return {};
}

bool may_force_text(std::string_view c) {
  return c == kRepeat || c == kStart || c == kEnd || c == kConstrained ||
         c == kSections || c == kPostscript || c == kExistence ||
         c == kFrequency || c == kNthParagraph;
}

using Measure = std::function<long long(const Forced&)>;

long long total(const std::vector<const Instruction*>& others, const Measure& m,
                bool skip_keyword_classes = false) {
  long long sum = 0;
  for (const Instruction* o : others) {
    if (skip_keyword_classes && is_keyword_class(o->class_id)) continue;
    for (const Forced& f : forced_texts(*o)) sum += f.repeat * m(f);
  }
  return sum;
}

// Aggregate rules over a whole set. Each returns a message when violated.
using SetRule = std::optional<std::string> (*)(const std::vector<Instruction>&);

std::vector<const Instruction*> others_of(const std::vector<Instruction>& set,
                                          const Instruction* self) {
  std::vector<const Instruction*> out;
  for (const auto& i : set) {
    if (&i != self) out.push_back(&i);
  }
  return out;
}

const Instruction* find_class(const std::vector<Instruction>& set,
                              std::string_view c) {
  for (const auto& i : set) {
    if (i.class_id == c) return &i;
  }
  return nullptr;
}

std::optional<std::string> letter_rule(const std::vector<Instruction>& set) {
  const Instruction* lf = find_class(set, kLetter);
  if (!lf) return std::nullopt;
  const char letter = lf->parameters.at("letter").get<std::string>()[0];
  const long long cap = capacity(lf->parameters.at("let_relation").get<std::string>(),
                                 int_param(*lf, "let_frequency"));
  long long need = total(others_of(set, lf), [&](const Forced& f) {
    const std::string lower = to_lower(f.text);
    return static_cast<long long>(std::count(lower.begin(), lower.end(), letter));
  });
  if (need <= cap) return std::nullopt;
  return "letter '" + std::string(1, letter) + "' is forced " +
         std::to_string(need) + " times but allowed at most " +
         std::to_string(cap);
}

std::optional<std::string> capital_rule(const std::vector<Instruction>& set) {
  const Instruction* cw = find_class(set, kCapital);
  if (!cw) return std::nullopt;
  const long long cap =
      capacity(cw->parameters.at("capital_relation").get<std::string>(),
               int_param(*cw, "capital_frequency"));
  long long need = total(others_of(set, cw), [](const Forced& f) -> long long {
    if (!f.exact_case) return 0;
    SegmentedText seg = segment(f.text);
    long long n = 0;
    for (const Span& w : seg.words) {
      bool letter = false, lower = false;
      for (char c : seg.view(w)) {
        if (c >= 'a' && c <= 'z') lower = true;
        if (c >= 'A' && c <= 'Z') letter = true;
      }
      if (letter && !lower) ++n;
    }
    return n;
  });
  if (need <= cap) return std::nullopt;
  return "all-capital words forced " + std::to_string(need) +
         " times but allowed at most " + std::to_string(cap);
}

std::optional<std::string> comma_rule(const std::vector<Instruction>& set) {
  const Instruction* nc = find_class(set, kNoComma);
  if (!nc) return std::nullopt;
  long long commas = total(others_of(set, nc), [](const Forced& f) {
    return static_cast<long long>(std::count(f.text.begin(), f.text.end(), ','));
  });
  if (commas == 0) return std::nullopt;
  return "no_comma conflicts with required text containing a comma";
}

std::optional<std::string> word_budget_rule(const std::vector<Instruction>& set) {
  const Instruction* nw = find_class(set, kWords);
  if (!nw) return std::nullopt;
  const long long cap = capacity(nw->parameters.at("relation").get<std::string>(),
                                 int_param(*nw, "num_words"));
  long long need = total(others_of(set, nw), [](const Forced& f) {
    return static_cast<long long>(segment(f.text).num_words()) + f.extra_words;
  });
  if (need <= cap) return std::nullopt;
  return "required text holds " + std::to_string(need) +
         " words but number_words allows at most " + std::to_string(cap);
}

std::optional<std::string> keyword_budget_rule(const std::vector<Instruction>& set) {
  const Instruction* fq = find_class(set, kFrequency);
  if (!fq) return std::nullopt;
  const std::string kw = fq->parameters.at("keyword").get<std::string>();
  const long long cap = capacity(fq->parameters.at("relation").get<std::string>(),
                                 int_param(*fq, "frequency"));
  long long need = total(others_of(set, fq), [&](const Forced& f) {
    return static_cast<long long>(count_keyword(segment(f.text), kw));
  });
  if (need <= cap) return std::nullopt;
  return "keyword '" + kw + "' is forced " + std::to_string(need) +
         " times but allowed at most " + std::to_string(cap);
}

std::optional<std::string> forbidden_rule(const std::vector<Instruction>& set) {
  const Instruction* fw = find_class(set, kForbidden);
  if (!fw) return std::nullopt;
  for (const auto& w : keyword_words(*fw)) {
    long long hits = total(
        others_of(set, fw),
        [&](const Forced& f) {
          return static_cast<long long>(count_keyword(segment(f.text), w));
        },
        /*skip_keyword_classes=*/true);
    if (hits > 0) return "forbidden word '" + w + "' appears in required text";
  }
  return std::nullopt;
}

struct NamedSetRule {
  std::string_view bounded_class;
  SetRule rule;
};

constexpr NamedSetRule kSetRules[] = {
    {kLetter, letter_rule},     {kCapital, capital_rule},
    {kNoComma, comma_rule},     {kWords, word_budget_rule},
    {kFrequency, keyword_budget_rule}, {kForbidden, forbidden_rule},
};

// Pairwise rules tied to a repeated query.
std::optional<std::string> repeat_rule(const Instruction& repeat,
                                       const Instruction& other) {
  const SegmentedText q =
      segment(repeat.parameters.at("prompt_to_repeat").get<std::string>());
  if (other.class_id == kSentenceLength) {
    std::size_t longest = 0;
    for (const Span& s : q.sentences) longest = std::max(longest, q.words_in(s));
    long long limit = int_param(other, "max_words");
    if (static_cast<long long>(longest) > limit) {
      return "query has a " + std::to_string(longest) +
             "-word sentence; sentence_length allows " + std::to_string(limit);
    }
  } else if (other.class_id == kSentences) {
    long long cap = capacity(other.parameters.at("relation").get<std::string>(),
                             int_param(other, "num_sentences"));
    if (static_cast<long long>(q.num_sentences()) > cap) {
      return "query has " + std::to_string(q.num_sentences()) +
             " sentences; number_sentences allows at most " + std::to_string(cap);
    }
  } else if (other.class_id == kLowercase) {
    for (const Span& s : q.sentences) {
      for (char c : q.view(s)) {
        if (c >= 'a' && c <= 'z') break;
        if (c >= 'A' && c <= 'Z') {
          return std::string("query has a sentence starting uppercase; "
                             "lowercase_sentences cannot hold");
        }
      }
    }
  }
  return std::nullopt;
}

bool repeat_pairs_with(std::string_view c) {
  return c == kSentenceLength || c == kSentences || c == kLowercase;
}

std::string qualified(std::string_view c, std::string_view p) {
  return std::string(c) + "." + std::string(p);
}

}  // namespace

// ---------------------------------------------------------------------------

ConstraintTable ConstraintTable::defaults() {
  ConstraintTable t;
  t.ranges = {
      {"length_constraints:number_words.num_words", {30, 500}},
      {"length_constraints:number_paragraphs.num_paragraphs", {2, 5}},
      {"length_constraints:nth_paragraph_first_word.num_paragraphs", {2, 5}},
      {"length_constraints:number_sentences.num_sentences", {3, 20}},
      {"length_constraints:sentence_length.max_words", {10, 40}},
      {"detectable_format:number_bullet_lists.num_bullets", {1, 5}},
      {"detectable_format:number_highlighted_sections.num_highlights", {1, 4}},
      {"detectable_format:multiple_sections.num_sections", {2, 5}},
      {"detectable_content:number_placeholders.num_placeholders", {1, 4}},
      {"keywords:frequency.frequency", {1, 3}},
      {"keywords:letter_frequency.let_frequency", {1, 10}},
      {"change_case:capital_word_frequency.capital_frequency", {1, 20}},
  };
  t.relations = {"at least", "less than"};
  const std::string json = "detectable_format:json_format";
  const std::string yaml = "detectable_format:yaml_format";
  const std::string quotation = "startend:quotation";
  const std::string start(kStart), end(kEnd), repeat(kRepeat);
  const std::string bullets = "detectable_format:number_bullet_lists";
  const std::string multiple = "combination:multiple_responses";
  t.exclusions = {
      {json, yaml},        {json, quotation},  {json, start},
      {json, end},         {json, repeat},     {json, bullets},
      {json, multiple},    {yaml, quotation},  {yaml, start},
      {yaml, end},         {yaml, repeat},     {yaml, multiple},
      {quotation, start},  {quotation, repeat}, {start, repeat},
      {std::string(kParagraphs), std::string(kNthParagraph)},
      {std::string(kParagraphs), multiple},
  };
  t.ratios = {
      {std::string(kWords), "num_words", std::string(kParagraphs), "num_paragraphs", 10, false},
      {std::string(kWords), "num_words", std::string(kNthParagraph), "num_paragraphs", 10, false},
      {std::string(kWords), "num_words", std::string(kSections), "num_sections", 10, false},
      {std::string(kWords), "num_words", std::string(kSentences), "num_sentences", 3, false},
      {std::string(kSentences), "num_sentences", std::string(kNthParagraph), "num_paragraphs", 1, true},
  };
  t.three_way = ThreeWayRule{};
  t.start_phrases = {"My dear friend", "Here is my answer", "Let me explain",
                     "To begin with", "In short", "Well"};
  t.end_phrases = {"Any other questions?",
                   "Is there anything else I can help with?",
                   "Let me know if you have additional questions.",
                   "That is all."};
  return t;
}

IntRange ConstraintTable::range(std::string_view class_id,
                                std::string_view param) const {
  auto it = ranges.find(qualified(class_id, param));
  if (it == ranges.end()) {
    throw SchemaError("no sampling range configured for " +
                      qualified(class_id, param));
  }
  return it->second;
}

bool ConstraintTable::excluded(std::string_view a, std::string_view b) const {
  return std::any_of(exclusions.begin(), exclusions.end(), [&](const auto& e) {
    return (e.first == a && e.second == b) || (e.first == b && e.second == a);
  });
}

Json ConstraintTable::to_json() const {
  Json j;
  for (const auto& [k, r] : ranges) j["ranges"][k] = {r.lo, r.hi};
  j["relations"] = relations;
  j["exclusions"] = Json::array();
  for (const auto& [a, b] : exclusions) j["exclusions"].push_back({a, b});
  j["ratios"] = Json::array();
  for (const auto& r : ratios) {
    j["ratios"].push_back({{"target", r.target},
                           {"target_param", r.target_param},
                           {"source", r.source},
                           {"source_param", r.source_param},
                           {"factor", r.factor},
                           {"relation_aware", r.relation_aware}});
  }
  if (three_way) {
    j["three_way"] = {{"words", three_way->words_class},
                      {"sentences", three_way->sentences_class},
                      {"sentence_length", three_way->sentence_length_class},
                      {"offset", three_way->offset}};
  } else {
    j["three_way"] = nullptr;
  }
  j["keyword_disjointness"] = keyword_disjointness;
  j["forced_text_rules"] = forced_text_rules;
  j["start_phrases"] = start_phrases;
  j["end_phrases"] = end_phrases;
  j["keywords_per_list"] = keywords_per_list;
  j["max_rejections"] = max_rejections;
  j["param_attempts"] = param_attempts;
  return j;
}

ConstraintTable ConstraintTable::from_json(const Json& j) {
  ConstraintTable t = defaults();
  try {
    if (j.contains("ranges")) {
      for (const auto& [k, v] : j.at("ranges").items()) {
        IntRange r{v.at(0).get<long long>(), v.at(1).get<long long>()};
        if (r.lo > r.hi) throw SchemaError("empty range for " + k);
        t.ranges[k] = r;
      }
    }
    if (j.contains("relations")) {
      t.relations = j.at("relations").get<std::vector<std::string>>();
      for (const auto& r : t.relations) {
        if (!is_relation(r)) throw SchemaError("unknown relation '" + r + "'");
      }
    }
    if (j.contains("exclusions")) {
      t.exclusions.clear();
      for (const auto& e : j.at("exclusions")) {
        t.exclusions.emplace_back(e.at(0).get<std::string>(),
                                  e.at(1).get<std::string>());
      }
    }
    if (j.contains("ratios")) {
      t.ratios.clear();
      for (const auto& r : j.at("ratios")) {
        t.ratios.push_back({r.at("target").get<std::string>(),
                            r.at("target_param").get<std::string>(),
                            r.at("source").get<std::string>(),
                            r.at("source_param").get<std::string>(),
                            r.at("factor").get<long long>(),
                            r.value("relation_aware", false)});
      }
    }
    if (j.contains("three_way")) {
      const Json& tw = j.at("three_way");
      if (tw.is_null()) {
        t.three_way.reset();
      } else {
        ThreeWayRule rule;
        rule.words_class = tw.value("words", rule.words_class);
        rule.sentences_class = tw.value("sentences", rule.sentences_class);
        rule.sentence_length_class =
            tw.value("sentence_length", rule.sentence_length_class);
        rule.offset = tw.value("offset", rule.offset);
        t.three_way = rule;
      }
    }
    t.keyword_disjointness = j.value("keyword_disjointness", t.keyword_disjointness);
    t.forced_text_rules = j.value("forced_text_rules", t.forced_text_rules);
    if (j.contains("start_phrases")) {
      t.start_phrases = j.at("start_phrases").get<std::vector<std::string>>();
    }
    if (j.contains("end_phrases")) {
      t.end_phrases = j.at("end_phrases").get<std::vector<std::string>>();
    }
    t.keywords_per_list = j.value("keywords_per_list", t.keywords_per_list);
    t.max_rejections = j.value("max_rejections", t.max_rejections);
    t.param_attempts = j.value("param_attempts", t.param_attempts);
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("constraint table: ") + e.what());
  }
  for (const auto& [a, b] : t.exclusions) {
    registry().at(a);
    registry().at(b);
  }
  return t;
}

ConstraintTable ConstraintTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open constraint table " + path.string());
  try {
    return from_json(Json::parse(in));
  } catch (const Json::parse_error& e) {
    throw SchemaError("constraint table " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Keyword providers

WordlistKeywordProvider::WordlistKeywordProvider(std::vector<std::string> words) {
  std::set<std::string> seen;
  for (auto& w : words) {
    std::string key = word_key(w);
    if (key.empty() || key.find_first_of(" \t\n") != std::string::npos) continue;
    if (seen.insert(key).second) words_.push_back(key);
  }
}

WordlistKeywordProvider WordlistKeywordProvider::builtin() {
  return WordlistKeywordProvider({
      "river",   "mountain", "garden",  "window",   "bridge",  "candle",
      "forest",  "harbor",   "letter",  "market",   "engine",  "planet",
      "silver",  "thunder",  "meadow",  "lantern",  "compass", "village",
      "ocean",   "desert",   "castle",  "pencil",   "mirror",  "festival",
      "journey", "kitchen",  "library", "orchard",  "island",  "winter",
      "summer",  "autumn",   "spring",  "feather",  "shadow",  "marble",
      "canvas",  "rhythm",   "anchor",  "blanket",  "cottage", "diamond",
      "echo",    "falcon",   "glacier", "horizon",  "ivory",   "jungle",
      "kettle",  "ladder",   "meteor",  "nectar",   "oasis",   "pepper",
      "quartz",  "ribbon",   "saddle",  "tunnel",   "umbrella", "velvet",
      "walnut",  "yarn",     "zephyr",  "balcony",  "cabin",   "dolphin",
      "ember",   "fountain", "granite", "hammock",  "insect",  "jacket",
      "kingdom", "lemon",    "magnet",  "needle",   "opera",   "parrot",
      "quilt",   "rocket",   "sparrow", "teapot",   "unicorn", "violin",
      "whistle", "harvest",  "beacon",  "crystal",  "dragon",  "emerald",
  });
}

WordlistKeywordProvider WordlistKeywordProvider::from_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open word list " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (!t.empty() && t.front() != '#') words.emplace_back(t);
  }
  return WordlistKeywordProvider(std::move(words));
}

std::vector<std::string> WordlistKeywordProvider::keywords(
    std::string_view, std::size_t count, const std::set<std::string>& excluded,
    Rng& rng) {
  std::vector<std::string> pool;
  for (const auto& w : words_) {
    if (!excluded.count(w)) pool.push_back(w);
  }
  std::vector<std::string> out;
  while (out.size() < count && !pool.empty()) {
    std::size_t k = uniform_index(rng, pool.size());
    out.push_back(pool[k]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

ModelKeywordProvider::ModelKeywordProvider(Gateway& gateway, std::size_t pool_size)
    : gateway_(gateway), pool_size_(std::max<std::size_t>(1, pool_size)) {}

std::vector<std::string> ModelKeywordProvider::parse_reply(std::string_view reply) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::string token;
  auto flush = [&] {
    std::string key = word_key(token);
    token.clear();
    if (key.empty()) return;
    // Skip list numbering such as "1." or "2)".
    if (std::all_of(key.begin(), key.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      return;
    }
    if (seen.insert(key).second) out.push_back(key);
  };
  for (char c : reply) {
    if (is_space(c) || c == ',' || c == ';') {
      flush();
    } else {
      token += c;
    }
  }
  flush();
  return out;
}

const std::vector<std::string>& ModelKeywordProvider::pool_for(std::string_view query) {
  std::lock_guard lock(mu_);
  auto it = cache_.find(query);
  if (it != cache_.end()) return it->second;
  GenerationRequest req;
  req.user = templates::render(templates::kKeywordSuggestion,
                               {{"query", std::string(query)},
                                {"count", std::to_string(pool_size_)}});
  req.temperature = 0.0;
  req.max_tokens = 256;
  req.role = "keywords";
  GenerationResult res = gateway_.generate(req);
  return cache_.emplace(std::string(query), parse_reply(res.texts.at(0))).first->second;
}

std::vector<std::string> ModelKeywordProvider::keywords(
    std::string_view query, std::size_t count, const std::set<std::string>& excluded,
    Rng& rng) {
  return WordlistKeywordProvider(pool_for(query)).keywords(query, count, excluded, rng);
}

// ---------------------------------------------------------------------------
// Constraint computation

std::vector<Constraint> compute_constraints(const std::vector<Instruction>& chosen,
                                            std::string_view candidate_class,
                                            const ConstraintTable& table) {
  std::vector<Constraint> out;
  const std::string cc(candidate_class);

  for (const Instruction& e : chosen) {
    if (table.excluded(e.class_id, cc)) {
      Constraint c;
      c.kind = ConstraintKind::Exclusion;
      c.subject = {e.class_id, cc};
      c.description = e.class_id + " and " + cc + " cannot both be satisfied";
      c.holds = [](const Instruction&) { return false; };
      out.push_back(std::move(c));
    }

    for (const RatioRule& r : table.ratios) {
      if (e.class_id == r.source && cc == r.target) {
        const long long src = int_param(e, r.source_param);
        const long long need = r.factor * src;
        Constraint c;
        c.kind = ConstraintKind::NumericBound;
        c.subject = {e.class_id, cc};
        c.description = qualified(r.target, r.target_param) +
                        (r.relation_aware ? " (admitted count)" : "") +
                        " >= " + std::to_string(r.factor) + " * " +
                        qualified(r.source, r.source_param) + " = " +
                        std::to_string(need);
        c.param = r.target_param;
        if (!r.relation_aware) c.min = need;
        c.holds = [r, need](const Instruction& cand) {
          return target_value(cand, r) >= need;
        };
        c.explain = [r, need, d = c.description](const Instruction& cand) {
          return d + " (got " + std::to_string(target_value(cand, r)) + " < " +
                 std::to_string(need) + ")";
        };
        out.push_back(std::move(c));
      } else if (e.class_id == r.target && cc == r.source) {
        const long long tv = target_value(e, r);
        Constraint c;
        c.kind = ConstraintKind::NumericBound;
        c.subject = {e.class_id, cc};
        c.description = qualified(r.target, r.target_param) + " (" +
                        std::to_string(tv) + ") >= " + std::to_string(r.factor) +
                        " * " + qualified(r.source, r.source_param);
        c.param = r.source_param;
        if (tv != LLONG_MAX) c.max = tv / r.factor;
        c.holds = [r, tv](const Instruction& cand) {
          return tv == LLONG_MAX || tv >= r.factor * int_param(cand, r.source_param);
        };
        c.explain = [r, d = c.description](const Instruction& cand) {
          return d + " (got " + std::to_string(r.factor * int_param(cand, r.source_param)) + ")";
        };
        out.push_back(std::move(c));
      }
    }

    if (table.keyword_disjointness && is_keyword_class(e.class_id) &&
        is_keyword_class(cc)) {
      Constraint c;
      c.kind = ConstraintKind::KeywordDisjointness;
      c.subject = {e.class_id, cc};
      for (const auto& w : keyword_words(e)) c.excluded_words.insert(word_key(w));
      c.description = "keywords of " + cc + " must be disjoint from " + e.class_id;
      c.holds = [ex = c.excluded_words](const Instruction& cand) {
        for (const auto& w : keyword_words(cand)) {
          if (ex.count(word_key(w))) return false;
        }
        return true;
      };
      c.explain = [ex = c.excluded_words, d = c.description](const Instruction& cand) {
        std::string shared;
        for (const auto& w : keyword_words(cand)) {
          if (ex.count(word_key(w))) shared += (shared.empty() ? "" : ", ") + w;
        }
        return d + " (shared: " + shared + ")";
      };
      out.push_back(std::move(c));
    }

    if (table.forced_text_rules &&
        ((e.class_id == kRepeat && repeat_pairs_with(cc)) ||
         (cc == kRepeat && repeat_pairs_with(e.class_id)))) {
      Constraint c;
      c.kind = ConstraintKind::ForcedText;
      c.subject = {e.class_id, cc};
      c.description = "repeated query must be compatible with " +
                      (e.class_id == kRepeat ? cc : e.class_id);
      c.holds = [e](const Instruction& cand) {
        return e.class_id == kRepeat ? !repeat_rule(e, cand)
                                     : !repeat_rule(cand, e);
      };
      c.explain = [e](const Instruction& cand) {
        auto m = e.class_id == kRepeat ? repeat_rule(e, cand) : repeat_rule(cand, e);
        return m.value_or("");
      };
      out.push_back(std::move(c));
    }
  }

  if (table.three_way) {
    const ThreeWayRule tw = *table.three_way;
    const Instruction* w = find_class(chosen, tw.words_class);
    const Instruction* s = find_class(chosen, tw.sentences_class);
    const Instruction* l = find_class(chosen, tw.sentence_length_class);
    const long long off = tw.offset;
    auto make = [&](std::string param, long long lo, long long hi,
                    std::function<bool(const Instruction&)> holds) {
      Constraint c;
      c.kind = ConstraintKind::ThreeWayLength;
      c.subject = {tw.words_class, tw.sentences_class, tw.sentence_length_class};
      c.description = "num_words >= (num_sentences + " + std::to_string(off) +
                      ") * (max_words + " + std::to_string(off) + ")";
      c.param = std::move(param);
      c.min = lo;
      c.max = hi;
      c.holds = std::move(holds);
      out.push_back(std::move(c));
    };
    if (cc == tw.words_class && s && l) {
      const long long need = (int_param(*s, "num_sentences") + off) *
                             (int_param(*l, "max_words") + off);
      make("num_words", need, LLONG_MAX, [need](const Instruction& cand) {
        return int_param(cand, "num_words") >= need;
      });
    } else if (cc == tw.sentences_class && w && l) {
      const long long words = int_param(*w, "num_words");
      const long long sl = int_param(*l, "max_words");
      make("num_sentences", LLONG_MIN, words / (sl + off) - off,
           [=](const Instruction& cand) {
             return words >= (int_param(cand, "num_sentences") + off) * (sl + off);
           });
    } else if (cc == tw.sentence_length_class && w && s) {
      const long long words = int_param(*w, "num_words");
      const long long ns = int_param(*s, "num_sentences");
      make("max_words", LLONG_MIN, words / (ns + off) - off,
           [=](const Instruction& cand) {
             return words >= (ns + off) * (int_param(cand, "max_words") + off);
           });
    }
  }

  if (table.forced_text_rules) {
    bool chosen_forces = std::any_of(chosen.begin(), chosen.end(),
                                     [](const Instruction& i) {
                                       return may_force_text(i.class_id);
                                     });
    for (const NamedSetRule& r : kSetRules) {
      bool relevant = (cc == r.bounded_class && chosen_forces) ||
                      (may_force_text(cc) && find_class(chosen, r.bounded_class));
      if (!relevant) continue;
      Constraint c;
      c.kind = ConstraintKind::ForcedText;
      c.subject = {std::string(r.bounded_class), cc};
      c.description = "text required by other instructions must fit " +
                      std::string(r.bounded_class);
      auto rule = r.rule;
      c.holds = [chosen, rule](const Instruction& cand) {
        auto set = chosen;
        set.push_back(cand);
        return !rule(set);
      };
      c.explain = [chosen, rule](const Instruction& cand) {
        auto set = chosen;
        set.push_back(cand);
        return rule(set).value_or("");
      };
      out.push_back(std::move(c));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameter sampling

namespace {

struct Bounds {
  long long lo;
  long long hi;
  std::string blocked_by;
};

Bounds bounded_range(std::string_view class_id, const std::string& param,
                     const std::vector<Constraint>& constraints,
                     const ConstraintTable& table) {
  IntRange r = table.range(class_id, param);
  Bounds b{r.lo, r.hi, {}};
  for (const auto& c : constraints) {
    if (c.param != param) continue;
    if (c.min > b.lo) b.lo = c.min;
    if (c.max < b.hi) b.hi = c.max;
    if (b.lo > b.hi && b.blocked_by.empty()) b.blocked_by = c.description;
  }
  return b;
}

std::set<std::string> excluded_keywords(const std::vector<Constraint>& constraints) {
  std::set<std::string> out;
  for (const auto& c : constraints) out.insert(c.excluded_words.begin(), c.excluded_words.end());
  return out;
}

}  // namespace

ParameterDraw sample_parameters(std::string_view class_id,
                                const std::vector<Constraint>& constraints,
                                std::string_view query, Rng& rng,
                                KeywordProvider* keywords,
                                const ConstraintTable& table) {
  const ClassEntry& entry = registry().at(class_id);
  for (const auto& c : constraints) {
    if (c.kind == ConstraintKind::Exclusion) return {std::nullopt, c.description};
  }

  std::string last_failure;
  for (std::size_t attempt = 0; attempt < std::max<std::size_t>(1, table.param_attempts);
       ++attempt) {
    Json params = Json::object();
    std::string rejection;
    std::set<std::string> exclude = excluded_keywords(constraints);

    for (const ParamSpec& spec : entry.params) {
      switch (spec.type) {
        case ParamType::Integer: {
          // The paragraph index is bounded by the paragraph count drawn just before it.
          const Bounds b = class_id == kNthParagraph && spec.name == "nth_paragraph"
                               ? Bounds{1, params.at("num_paragraphs").get<long long>(), {}}
                               : bounded_range(class_id, spec.name, constraints, table);
          if (b.lo > b.hi) {
            rejection = "no value of " + qualified(class_id, spec.name) +
                        " satisfies: " + b.blocked_by;
            break;
          }
          params[spec.name] = uniform_int(rng, b.lo, b.hi);
          break;
        }
        case ParamType::Relation: {
          if (table.relations.empty()) {
            rejection = "no relations configured";
            break;
          }
          params[spec.name] = table.relations[uniform_index(rng, table.relations.size())];
          break;
        }
        case ParamType::Word:
        case ParamType::WordList: {
          if (!keywords) {
            rejection = "no keyword provider for " + std::string(class_id);
            break;
          }
          const std::size_t want =
              spec.type == ParamType::Word ? 1 : std::max<std::size_t>(1, table.keywords_per_list);
          auto words = keywords->keywords(query, want, exclude, rng);
          if (words.size() < want) {
            rejection = "keyword provider exhausted for " + std::string(class_id);
            break;
          }
          for (const auto& w : words) exclude.insert(word_key(w));
          if (spec.type == ParamType::Word) {
            params[spec.name] = words.front();
          } else {
            params[spec.name] = words;
          }
          break;
        }
        case ParamType::Letter:
          params[spec.name] = std::string(1, static_cast<char>('a' + uniform_index(rng, 26)));
          break;
        case ParamType::Choice:
          params[spec.name] = spec.choices[uniform_index(rng, spec.choices.size())];
          break;
        case ParamType::Text: {
          const std::vector<std::string>* pool = nullptr;
          if (spec.name == "start_phrase") pool = &table.start_phrases;
          if (spec.name == "end_phrase") pool = &table.end_phrases;
          if (spec.name == "prompt_to_repeat") {
            if (trim(query).empty()) {
              rejection = "empty query cannot be repeated";
              break;
            }
            params[spec.name] = std::string(trim(query));
          } else if (pool && !pool->empty()) {
            params[spec.name] = (*pool)[uniform_index(rng, pool->size())];
          } else {
            rejection = "no value source for " + qualified(class_id, spec.name);
          }
          break;
        }
      }
      if (!rejection.empty()) break;
    }

    if (rejection.empty()) {
      Instruction cand;
      cand.class_id = std::string(class_id);
      cand.parameters = params;
      for (const auto& c : constraints) {
        if (!c.holds(cand)) {
          rejection = c.explain ? c.explain(cand) : c.description;
          break;
        }
      }
      if (rejection.empty()) return {std::move(params), {}};
    }
    last_failure = rejection;
    // Keyword exhaustion and empty ranges do not change between attempts.
    if (last_failure.starts_with("no value of") ||
        last_failure.starts_with("keyword provider exhausted") ||
        last_failure.starts_with("no keyword provider") ||
        last_failure.starts_with("empty query")) {
      break;
    }
  }
  return {std::nullopt, last_failure};
}

std::vector<Instruction> sample_instruction_set(std::string_view query,
                                                std::size_t n,
                                                std::uint64_t seed,
                                                KeywordProvider* keywords,
                                                const ConstraintTable& table) {
  const auto& reg = registry();
  const auto all = reg.class_ids();
  if (n < 1 || n > all.size()) {
    throw SchemaError("instruction count " + std::to_string(n) +
                      " outside 1.." + std::to_string(all.size()));
  }
  Rng rng(seed);
  std::vector<std::string> pool = all;
  std::vector<Instruction> chosen;
  std::vector<std::string> rejections;
  std::size_t rejected_this_slot = 0;

  while (chosen.size() < n) {
    if (pool.empty() || rejected_this_slot > table.max_rejections) {
      std::ostringstream os;
      os << "could not fill instruction " << chosen.size() + 1 << " of " << n
         << " after " << rejections.size() << " rejection(s)";
      for (const auto& r : rejections) os << "\n  - " << r;
      throw SamplingExhausted(os.str());
    }
    const std::size_t k = uniform_index(rng, pool.size());
    const std::string cls = pool[k];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));

    auto constraints = compute_constraints(chosen, cls, table);
    ParameterDraw draw = sample_parameters(cls, constraints, query, rng, keywords, table);
    if (!draw.parameters) {
      rejections.push_back(cls + ": " + draw.rejection);
      ++rejected_this_slot;
      continue;
    }
    chosen.push_back(reg.make(cls, std::move(*draw.parameters)));
    rejected_this_slot = 0;
  }
  return chosen;
}

std::vector<Constraint> audit_set(const std::vector<Instruction>& instructions,
                                  const ConstraintTable& table) {
  std::vector<Constraint> violated;
  std::set<std::string> seen;
  std::vector<Instruction> prefix;
  for (const Instruction& cand : instructions) {
    for (auto& c : compute_constraints(prefix, cand.class_id, table)) {
      if (c.holds(cand)) continue;
      if (c.explain) c.description = c.explain(cand);
      if (seen.insert(c.description).second) violated.push_back(std::move(c));
    }
    prefix.push_back(cand);
  }
  return violated;
}

}  // namespace ifboost
