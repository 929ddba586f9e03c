#include "ifboost/verifiers.hpp"

#include <algorithm>
#include <regex>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace ifboost {

bool is_relation(std::string_view r) {
  return std::find(std::begin(kRelations), std::end(kRelations), r) !=
         std::end(kRelations);
}

bool compare(std::string_view relation, long long measured, long long bound) {
  if (relation == "at least") return measured >= bound;
  if (relation == "less than") return measured < bound;
  if (relation == "exactly") return measured == bound;
  if (relation == "at most") return measured <= bound;
  throw SchemaError("unknown relation '" + std::string(relation) + "'");
}

double followed_fraction(std::span<const Verdict> verdicts) {
  if (verdicts.empty()) return 0.0;
  auto n = std::count_if(verdicts.begin(), verdicts.end(),
                         [](const Verdict& v) { return v.followed; });
  return static_cast<double>(n) / static_cast<double>(verdicts.size());
}

namespace {

long long int_of(const Json& p, const char* name) {
  return p.at(name).get<long long>();
}
std::string str_of(const Json& p, const char* name) {
  return p.at(name).get<std::string>();
}
std::vector<std::string> list_of(const Json& p, const char* name) {
  return p.at(name).get<std::vector<std::string>>();
}

std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

Verdict outcome(bool ok, std::string detail) {
  Verdict v;
  v.followed = ok;
  v.detail = std::move(detail);
  return v;
}

Verdict counted(std::string_view what, std::string_view relation,
                long long measured, long long bound) {
  std::ostringstream os;
  os << what << ": measured " << measured << ", required " << relation << ' '
     << bound;
  return outcome(compare(relation, measured, bound), os.str());
}

std::size_t regex_count(const std::string& s, const std::regex& re) {
  return static_cast<std::size_t>(std::distance(
      std::sregex_iterator(s.begin(), s.end(), re), std::sregex_iterator()));
}

std::vector<std::string> regex_split(const std::string& s, const std::regex& re) {
  std::vector<std::string> parts;
  std::sregex_token_iterator it(s.begin(), s.end(), re, -1), end;
  for (; it != end; ++it) parts.push_back(*it);
  // std::regex drops a trailing empty field that Python's re.split keeps.
  std::string::const_iterator last_end = s.begin();
  bool any = false;
  for (std::sregex_iterator m_it(s.begin(), s.end(), re), m_end; m_it != m_end;
       ++m_it) {
    last_end = s.begin() + (m_it->position(0) + m_it->length(0));
    any = true;
  }
  if (parts.empty()) parts.emplace_back();
  if (any && last_end == s.end()) parts.emplace_back();
  return parts;
}

std::string strip_fences(std::string_view text,
                         std::initializer_list<std::string_view> openers) {
  std::string_view v = trim(text);
  for (std::string_view o : openers) {
    if (v.starts_with(o)) v.remove_prefix(o.size());
  }
  if (v.starts_with("```")) v.remove_prefix(3);
  if (v.ends_with("```")) v.remove_suffix(3);
  return std::string(trim(v));
}

bool is_upper_word(std::string_view token) {
  bool letter = false;
  for (char c : token) {
    if (c >= 'a' && c <= 'z') return false;
    if (c >= 'A' && c <= 'Z') letter = true;
  }
  return letter;
}

const char* kConstrainedOptions[] = {"My answer is yes.", "My answer is no.",
                                     "My answer is maybe."};

// ---------------------------------------------------------------------------
// Check procedures. Each receives validated parameters.

Verdict check_sentence_length(const Json& p, const SegmentedText& t) {
  const long long max_words = int_of(p, "max_words");
  for (std::size_t i = 0; i < t.sentences.size(); ++i) {
    auto n = static_cast<long long>(t.words_in(t.sentences[i]));
    if (n > max_words) {
      return outcome(false, "sentence " + std::to_string(i + 1) + " has " +
                                std::to_string(n) + " words, limit " +
                                std::to_string(max_words));
    }
  }
  return outcome(true, "all " + std::to_string(t.sentences.size()) +
                           " sentences within " + std::to_string(max_words) +
                           " words");
}

Verdict check_number_sentences(const Json& p, const SegmentedText& t) {
  return counted("sentences", str_of(p, "relation"),
                 static_cast<long long>(t.num_sentences()),
                 int_of(p, "num_sentences"));
}

Verdict check_number_words(const Json& p, const SegmentedText& t) {
  return counted("words", str_of(p, "relation"),
                 static_cast<long long>(t.num_words()), int_of(p, "num_words"));
}

Verdict check_number_paragraphs(const Json& p, const SegmentedText& t) {
  static const std::regex divider(R"(\s?\*\*\*\s?)");
  const long long want = int_of(p, "num_paragraphs");
  auto parts = regex_split(t.raw, divider);
  long long count = static_cast<long long>(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (trim(parts[i]).empty()) {
      if (i == 0 || i + 1 == parts.size()) {
        --count;
      } else {
        return outcome(false, "empty paragraph between *** dividers");
      }
    }
  }
  return counted("***-separated paragraphs", "exactly", count, want);
}

Verdict check_nth_paragraph_first_word(const Json& p, const SegmentedText& t) {
  const long long want = int_of(p, "num_paragraphs");
  const long long nth = int_of(p, "nth_paragraph");
  const std::string first = to_lower(str_of(p, "first_word"));
  const auto have = static_cast<long long>(t.num_paragraphs());
  if (have != want) {
    return outcome(false, "paragraphs: measured " + std::to_string(have) +
                              ", required exactly " + std::to_string(want));
  }
  std::string_view para = trim(t.view(t.paragraphs[nth - 1]));
  std::string_view word = para.substr(0, std::min(para.size(),
      static_cast<std::size_t>(std::find_if(para.begin(), para.end(), is_space) -
                               para.begin())));
  while (!word.empty() && (word.front() == '\'' || word.front() == '"')) {
    word.remove_prefix(1);
  }
  std::string got;
  for (char c : word) {
    if (c == '.' || c == ',' || c == '?' || c == '!' || c == '\'' || c == '"') {
      break;
    }
    got += c;
  }
  got = to_lower(got);
  if (got != first) {
    return outcome(false, "paragraph " + std::to_string(nth) +
                              " starts with '" + got + "', required '" + first +
                              "'");
  }
  return outcome(true, "paragraph " + std::to_string(nth) + " starts with '" +
                           first + "'");
}

Verdict check_number_bullet_lists(const Json& p, const SegmentedText& t) {
  long long bullets = 0;
  std::istringstream in(t.raw);
  std::string line;
  while (std::getline(in, line)) {
    std::string_view l = line;
    while (!l.empty() && is_space(l.front())) l.remove_prefix(1);
    if (l.size() >= 2 && l[0] == '*' && l[1] != '*') ++bullets;
    else if (!l.empty() && l[0] == '-') ++bullets;
  }
  return counted("bullet points", "exactly", bullets, int_of(p, "num_bullets"));
}

Verdict check_constrained_response(const Json&, const SegmentedText& t) {
  std::string_view v = trim(t.raw);
  for (const char* option : kConstrainedOptions) {
    if (v.find(option) != std::string_view::npos) {
      return outcome(true, std::string("contains '") + option + "'");
    }
  }
  return outcome(false, "none of the fixed answer options present");
}

Verdict check_number_highlighted_sections(const Json& p,
                                          const SegmentedText& t) {
  static const std::regex single(R"(\*[^\n\*]*\*)");
  static const std::regex dbl(R"(\*\*[^\n\*]*\*\*)");
  long long count = 0;
  for (std::sregex_iterator it(t.raw.begin(), t.raw.end(), single), end;
       it != end; ++it) {
    std::string_view s = it->str(0);
    while (!s.empty() && s.front() == '*') s.remove_prefix(1);
    while (!s.empty() && s.back() == '*') s.remove_suffix(1);
    if (!trim(s).empty()) ++count;
  }
  for (std::sregex_iterator it(t.raw.begin(), t.raw.end(), dbl), end;
       it != end; ++it) {
    std::string s = it->str(0);
    if (!trim(std::string_view(s).substr(2, s.size() - 4)).empty()) ++count;
  }
  return counted("highlighted sections", "at least", count,
                 int_of(p, "num_highlights"));
}

Verdict check_title(const Json&, const SegmentedText& t) {
  static const std::regex title(R"(<<[^\n]+>>)");
  for (std::sregex_iterator it(t.raw.begin(), t.raw.end(), title), end;
       it != end; ++it) {
    std::string_view s = it->str(0);
    while (!s.empty() && s.front() == '<') s.remove_prefix(1);
    while (!s.empty() && s.back() == '>') s.remove_suffix(1);
    if (!trim(s).empty()) {
      return outcome(true, "title <<" + std::string(trim(s)) + ">>");
    }
  }
  return outcome(false, "no <<title>> found");
}

Verdict check_multiple_sections(const Json& p, const SegmentedText& t) {
  const std::string splitter = str_of(p, "section_spliter");
  const std::regex re("\\s?" + splitter + "\\s?\\d+\\s?");
  auto parts = regex_split(t.raw, re);
  return counted(splitter + " sections", "at least",
                 static_cast<long long>(parts.size()) - 1,
                 int_of(p, "num_sections"));
}

Verdict check_json_format(const Json&, const SegmentedText& t) {
  std::string body = strip_fences(t.raw, {"```json", "```Json", "```JSON"});
  try {
    [[maybe_unused]] const Json parsed = Json::parse(body);
  } catch (const Json::parse_error& e) {
    return outcome(false, std::string("not valid JSON: ") + e.what());
  }
  return outcome(true, "valid JSON");
}

Verdict check_yaml_format(const Json&, const SegmentedText& t) {
  std::string body =
      strip_fences(t.raw, {"```yaml", "```Yaml", "```YAML", "```yml"});
  try {
    auto docs = YAML::LoadAll(body);
    if (docs.size() != 1) {
      return outcome(false, "expected one YAML document, found " +
                                std::to_string(docs.size()));
    }
    if (!docs[0].IsMap() || docs[0].size() == 0) {
      return outcome(false, "YAML document is not a non-empty mapping");
    }
  } catch (const YAML::Exception& e) {
    return outcome(false, std::string("not valid YAML: ") + e.what());
  }
  return outcome(true, "valid YAML mapping");
}

Verdict check_number_placeholders(const Json& p, const SegmentedText& t) {
  static const std::regex placeholder(R"(\[.*?\])");
  return counted("placeholders", "at least",
                 static_cast<long long>(regex_count(t.raw, placeholder)),
                 int_of(p, "num_placeholders"));
}

Verdict check_postscript(const Json& p, const SegmentedText& t) {
  const std::string marker = str_of(p, "postscript_marker");
  static const std::regex ps(R"(p\.\s?s\.)");
  static const std::regex pps(R"(p\.\s?p\.\s?s)");
  const std::regex& re = marker == "P.P.S" ? pps : ps;
  std::string lower = to_lower(t.raw);
  if (std::regex_search(lower, re)) return outcome(true, marker + " present");
  return outcome(false, "no postscript starting with " + marker);
}

Verdict check_no_comma(const Json&, const SegmentedText& t) {
  auto n = std::count(t.raw.begin(), t.raw.end(), ',');
  if (n == 0) return outcome(true, "no commas");
  return outcome(false, std::to_string(n) + " comma(s) found");
}

Verdict check_forbidden_words(const Json& p, const SegmentedText& t) {
  std::vector<std::string> found;
  for (const auto& w : list_of(p, "forbidden_words")) {
    if (count_keyword(t, w) > 0) found.push_back(w);
  }
  if (found.empty()) return outcome(true, "no forbidden words");
  return outcome(false, "forbidden words present: " + join(found, ", "));
}

Verdict check_frequency(const Json& p, const SegmentedText& t) {
  const std::string kw = str_of(p, "keyword");
  return counted("occurrences of '" + kw + "'", str_of(p, "relation"),
                 static_cast<long long>(count_keyword(t, kw)),
                 int_of(p, "frequency"));
}

Verdict check_letter_frequency(const Json& p, const SegmentedText& t) {
  const std::string letter = to_lower(str_of(p, "letter"));
  long long n = 0;
  for (char c : t.raw) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if (c == letter[0]) ++n;
  }
  return counted("letter '" + letter + "'", str_of(p, "let_relation"), n,
                 int_of(p, "let_frequency"));
}

Verdict check_existence(const Json& p, const SegmentedText& t) {
  std::vector<std::string> missing;
  for (const auto& w : list_of(p, "keywords")) {
    if (count_keyword(t, w) == 0) missing.push_back(w);
  }
  if (missing.empty()) return outcome(true, "all keywords present");
  return outcome(false, "missing keywords: " + join(missing, ", "));
}

Verdict check_repeat_prompt(const Json& p, const SegmentedText& t) {
  std::string prompt(trim(str_of(p, "prompt_to_repeat")));
  std::string_view v = t.raw;
  while (!v.empty() && is_space(v.front())) v.remove_prefix(1);
  if (v.starts_with(prompt)) return outcome(true, "response begins with query");
  return outcome(false, "response does not begin with an exact copy of the query");
}

Verdict check_multiple_responses(const Json&, const SegmentedText& t) {
  std::vector<std::string> parts;
  std::string_view raw = t.raw;
  for (;;) {
    auto pos = raw.find("******");
    if (pos == std::string_view::npos) {
      parts.emplace_back(raw);
      break;
    }
    parts.emplace_back(raw.substr(0, pos));
    raw.remove_prefix(pos + 6);
  }
  std::vector<std::string_view> valid;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (trim(parts[i]).empty()) {
      if (i != 0 && i + 1 != parts.size()) {
        return outcome(false, "empty response between ****** separators");
      }
    } else {
      valid.push_back(parts[i]);
    }
  }
  if (valid.size() != 2) {
    return outcome(false, "found " + std::to_string(valid.size()) +
                              " responses, required 2");
  }
  if (trim(valid[0]) == trim(valid[1])) {
    return outcome(false, "the two responses are identical");
  }
  return outcome(true, "two distinct responses");
}

Verdict check_capital_word_frequency(const Json& p, const SegmentedText& t) {
  long long n = 0;
  for (const Span& w : t.words) {
    if (is_upper_word(t.view(w))) ++n;
  }
  return counted("all-capital words", str_of(p, "capital_relation"), n,
                 int_of(p, "capital_frequency"));
}

Verdict check_lowercase_sentences(const Json&, const SegmentedText& t) {
  for (std::size_t i = 0; i < t.sentences.size(); ++i) {
    for (char c : t.view(t.sentences[i])) {
      if (c >= 'a' && c <= 'z') break;
      if (c >= 'A' && c <= 'Z') {
        return outcome(false, "sentence " + std::to_string(i + 1) +
                                  " begins with an uppercase letter");
      }
    }
  }
  return outcome(true, "every sentence begins lowercase");
}

Verdict check_quotation(const Json&, const SegmentedText& t) {
  std::string_view v = trim(t.raw);
  if (v.size() > 1 && v.front() == '"' && v.back() == '"') {
    return outcome(true, "wrapped in double quotes");
  }
  return outcome(false, "response is not wrapped in double quotes");
}

Verdict check_start_checker(const Json& p, const SegmentedText& t) {
  std::string phrase = to_lower(trim(str_of(p, "start_phrase")));
  std::string_view v = t.raw;
  while (!v.empty() && is_space(v.front())) v.remove_prefix(1);
  if (to_lower(v).starts_with(phrase)) return outcome(true, "starts with phrase");
  return outcome(false, "response does not start with '" + phrase + "'");
}

Verdict check_end_checker(const Json& p, const SegmentedText& t) {
  std::string phrase = to_lower(trim(str_of(p, "end_phrase")));
  std::string_view v = trim(t.raw);
  while (!v.empty() && v.front() == '"') v.remove_prefix(1);
  while (!v.empty() && v.back() == '"') v.remove_suffix(1);
  if (to_lower(v).ends_with(phrase)) return outcome(true, "ends with phrase");
  return outcome(false, "response does not end with '" + phrase + "'");
}

// ---------------------------------------------------------------------------

ParamSpec integer(std::string name, long long min, long long max = 0) {
  return {std::move(name), ParamType::Integer, min, max, {}};
}
ParamSpec relation(std::string name) {
  return {std::move(name), ParamType::Relation, 0, 0, {}};
}
ParamSpec of_type(std::string name, ParamType type, long long min = 0) {
  return {std::move(name), type, min, 0, {}};
}
ParamSpec choice(std::string name, std::vector<std::string> options) {
  return {std::move(name), ParamType::Choice, 0, 0, std::move(options)};
}

std::string num(const Json& p, const char* name) {
  return std::to_string(int_of(p, name));
}

std::vector<ClassEntry> build_entries() {
  std::vector<ClassEntry> e;
  auto add = [&](std::string id, std::vector<ParamSpec> params,
                 DescribeFn describe, CheckFn check) {
    e.push_back({std::move(id), std::move(params), std::move(describe),
                 std::move(check), {}});
  };

  add("length_constraints:sentence_length", {integer("max_words", 1)},
      [](const Json& p) {
        return "Each sentence in your response must contain at most " +
               num(p, "max_words") + " words.";
      },
      check_sentence_length);
  add("length_constraints:number_sentences",
      {relation("relation"), integer("num_sentences", 1)},
      [](const Json& p) {
        return "Your response should contain " + str_of(p, "relation") + " " +
               num(p, "num_sentences") + " sentences.";
      },
      check_number_sentences);
  add("length_constraints:number_words",
      {relation("relation"), integer("num_words", 1)},
      [](const Json& p) {
        return "Answer with " + str_of(p, "relation") + " " +
               num(p, "num_words") + " words.";
      },
      check_number_words);
  add("length_constraints:number_paragraphs", {integer("num_paragraphs", 1)},
      [](const Json& p) {
        return "There should be " + num(p, "num_paragraphs") +
               " paragraphs. Paragraphs are separated with the markdown "
               "divider: ***";
      },
      check_number_paragraphs);
  add("length_constraints:nth_paragraph_first_word",
      {integer("num_paragraphs", 1), integer("nth_paragraph", 1),
       of_type("first_word", ParamType::Word)},
      [](const Json& p) {
        return "There should be " + num(p, "num_paragraphs") +
               " paragraphs. Paragraphs and only paragraphs are separated "
               "with each other by two new lines. Paragraph " +
               num(p, "nth_paragraph") + " must start with word " +
               str_of(p, "first_word") + ".";
      },
      check_nth_paragraph_first_word);
  e.back().validate_extra = [](const Json& p) {
    if (int_of(p, "nth_paragraph") > int_of(p, "num_paragraphs")) {
      throw SchemaError("nth_paragraph exceeds num_paragraphs");
    }
  };

  add("detectable_format:number_bullet_lists", {integer("num_bullets", 1)},
      [](const Json& p) {
        return "Your answer must contain exactly " + num(p, "num_bullets") +
               " bullet points. Use the markdown bullet points such as: * "
               "This is a point.";
      },
      check_number_bullet_lists);
  add("detectable_format:constrained_response", {},
      [](const Json&) {
        return std::string(
            "Answer with one of the following options: (\"My answer is "
            "yes.\", \"My answer is no.\", \"My answer is maybe.\")");
      },
      check_constrained_response);
  add("detectable_format:number_highlighted_sections",
      {integer("num_highlights", 1)},
      [](const Json& p) {
        return "Highlight at least " + num(p, "num_highlights") +
               " sections in your answer with markdown, i.e. *highlighted "
               "section*.";
      },
      check_number_highlighted_sections);
  add("detectable_format:title", {},
      [](const Json&) {
        return std::string(
            "Your answer must contain a title, wrapped in double angular "
            "brackets, such as <<poem of joy>>.");
      },
      check_title);
  add("detectable_format:multiple_sections",
      {choice("section_spliter", {"Section", "SECTION"}),
       integer("num_sections", 1)},
      [](const Json& p) {
        const std::string s = str_of(p, "section_spliter");
        return "Your response must have " + num(p, "num_sections") +
               " sections. Mark the beginning of each section with " + s +
               " X, such as: " + s + " 1";
      },
      check_multiple_sections);
  add("detectable_format:json_format", {},
      [](const Json&) {
        return std::string(
            "Entire output should be wrapped in JSON format. You can use "
            "markdown ticks such as ```.");
      },
      check_json_format);
  add("detectable_format:yaml_format", {},
      [](const Json&) {
        return std::string(
            "Entire output should be a YAML document whose top level is a "
            "mapping with at least one key. You can use markdown ticks such "
            "as ```.");
      },
      check_yaml_format);

  add("detectable_content:number_placeholders",
      {integer("num_placeholders", 1)},
      [](const Json& p) {
        return "The response must contain at least " +
               num(p, "num_placeholders") +
               " placeholders represented by square brackets, such as "
               "[address].";
      },
      check_number_placeholders);
  add("detectable_content:postscript",
      {choice("postscript_marker", {"P.S.", "P.P.S"})},
      [](const Json& p) {
        return "At the end of your response, please explicitly add a "
               "postscript starting with " +
               str_of(p, "postscript_marker");
      },
      check_postscript);

  add("punctuation:no_comma", {},
      [](const Json&) {
        return std::string(
            "In your entire response, refrain from the use of any commas.");
      },
      check_no_comma);

  add("keywords:forbidden_words",
      {of_type("forbidden_words", ParamType::WordList, 1)},
      [](const Json& p) {
        return "Do not include keywords " + join(list_of(p, "forbidden_words"), ", ") +
               " in the response.";
      },
      check_forbidden_words);
  add("keywords:frequency",
      {of_type("keyword", ParamType::Word), relation("relation"),
       integer("frequency", 1)},
      [](const Json& p) {
        return "In your response, the word " + str_of(p, "keyword") +
               " should appear " + str_of(p, "relation") + " " +
               num(p, "frequency") + " times.";
      },
      check_frequency);
  add("keywords:letter_frequency",
      {of_type("letter", ParamType::Letter), relation("let_relation"),
       integer("let_frequency", 1)},
      [](const Json& p) {
        return "In your response, the letter " + str_of(p, "letter") +
               " should appear " + str_of(p, "let_relation") + " " +
               num(p, "let_frequency") + " times.";
      },
      check_letter_frequency);
  add("keywords:existence", {of_type("keywords", ParamType::WordList, 1)},
      [](const Json& p) {
        return "Include keywords " + join(list_of(p, "keywords"), ", ") +
               " in the response.";
      },
      check_existence);

  add("combination:repeat_prompt",
      {of_type("prompt_to_repeat", ParamType::Text)},
      [](const Json&) {
        return std::string(
            "First repeat the request word for word without change, then "
            "give your answer (1. do not say any words or characters before "
            "repeating the request; 2. the request you need to repeat does "
            "not include this sentence)");
      },
      check_repeat_prompt);
  add("combination:multiple_responses", {},
      [](const Json&) {
        return std::string(
            "Give two different responses. Responses and only responses "
            "should be separated by 6 asterisk symbols: ******.");
      },
      check_multiple_responses);

  add("change_case:capital_word_frequency",
      {relation("capital_relation"), integer("capital_frequency", 1)},
      [](const Json& p) {
        return "In your response, words with all capital letters should "
               "appear " +
               str_of(p, "capital_relation") + " " +
               num(p, "capital_frequency") + " times.";
      },
      check_capital_word_frequency);
  add("change_case:lowercase_sentences", {},
      [](const Json&) {
        return std::string(
            "Every sentence in your response must begin with a lowercase "
            "letter.");
      },
      check_lowercase_sentences);

  add("startend:quotation", {},
      [](const Json&) {
        return std::string(
            "Wrap your entire response with double quotation marks.");
      },
      check_quotation);
  add("startend:start_checker", {of_type("start_phrase", ParamType::Text)},
      [](const Json& p) {
        return "Start your response with the exact phrase '" +
               str_of(p, "start_phrase") +
               "'. No other words should come before this phrase.";
      },
      check_start_checker);
  add("startend:end_checker", {of_type("end_phrase", ParamType::Text)},
      [](const Json& p) {
        return "Finish your response with this exact phrase " +
               str_of(p, "end_phrase") +
               ". No other words should follow this phrase.";
      },
      check_end_checker);
  return e;
}

bool is_single_word(const std::string& s) {
  return !s.empty() &&
         std::none_of(s.begin(), s.end(), [](char c) { return is_space(c); }) &&
         std::any_of(s.begin(), s.end(), is_word_char);
}

void validate_param(std::string_view class_id, const ParamSpec& spec,
                    const Json& value) {
  auto fail = [&](const std::string& why) {
    throw SchemaError(std::string(class_id) + ": parameter '" + spec.name +
                      "' " + why);
  };
  switch (spec.type) {
    case ParamType::Integer: {
      if (!value.is_number_integer()) fail("must be an integer");
      auto v = value.get<long long>();
      if (v < spec.min) fail("must be >= " + std::to_string(spec.min));
      if (spec.max != 0 && v > spec.max) {
        fail("must be <= " + std::to_string(spec.max));
      }
      break;
    }
    case ParamType::Relation:
      if (!value.is_string() || !is_relation(value.get<std::string>())) {
        fail("must be one of: at least, less than, exactly, at most");
      }
      break;
    case ParamType::Word:
      if (!value.is_string() || !is_single_word(value.get<std::string>())) {
        fail("must be a single word");
      }
      break;
    case ParamType::Text:
      if (!value.is_string() || trim(value.get<std::string>()).empty()) {
        fail("must be non-empty text");
      }
      break;
    case ParamType::WordList: {
      if (!value.is_array()) fail("must be a list of words");
      if (static_cast<long long>(value.size()) < spec.min) {
        fail("must hold at least " + std::to_string(spec.min) + " word(s)");
      }
      std::set<std::string> seen;
      for (const auto& w : value) {
        if (!w.is_string() || !is_single_word(w.get<std::string>())) {
          fail("must contain single words only");
        }
        if (!seen.insert(word_key(w.get<std::string>())).second) {
          fail("contains duplicate words");
        }
      }
      break;
    }
    case ParamType::Letter: {
      if (!value.is_string()) fail("must be a single letter");
      auto s = value.get<std::string>();
      if (s.size() != 1 || s[0] < 'a' || s[0] > 'z') {
        fail("must be a single lowercase letter a-z");
      }
      break;
    }
    case ParamType::Choice:
      if (!value.is_string() ||
          std::find(spec.choices.begin(), spec.choices.end(),
                    value.get<std::string>()) == spec.choices.end()) {
        fail("has an unsupported value");
      }
      break;
  }
}

}  // namespace

VerifierRegistry::VerifierRegistry() : entries_(build_entries()) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    index_.emplace(entries_[i].class_id, i);
  }
}

const VerifierRegistry& VerifierRegistry::instance() {
  static const VerifierRegistry r;
  return r;
}

const VerifierRegistry& registry() { return VerifierRegistry::instance(); }

std::vector<std::string> VerifierRegistry::class_ids() const {
  std::vector<std::string> ids;
  for (const auto& e : entries_) ids.push_back(e.class_id);
  return ids;
}

const ClassEntry* VerifierRegistry::find(std::string_view class_id) const {
  auto it = index_.find(class_id);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

const ClassEntry& VerifierRegistry::at(std::string_view class_id) const {
  const ClassEntry* e = find(class_id);
  if (!e) {
    throw SchemaError("unknown instruction class '" + std::string(class_id) +
                      "'");
  }
  return *e;
}

void VerifierRegistry::validate_parameters(std::string_view class_id,
                                           const Json& params) const {
  const ClassEntry& e = at(class_id);
  if (!params.is_object()) {
    throw SchemaError(std::string(class_id) + ": parameters must be an object");
  }
  for (const auto& spec : e.params) {
    if (!params.contains(spec.name)) {
      throw SchemaError(std::string(class_id) + ": missing parameter '" +
                        spec.name + "'");
    }
    validate_param(class_id, spec, params.at(spec.name));
  }
  for (const auto& [key, value] : params.items()) {
    bool known = std::any_of(e.params.begin(), e.params.end(),
                             [&](const ParamSpec& s) { return s.name == key; });
    if (!known) {
      throw SchemaError(std::string(class_id) + ": unexpected parameter '" +
                        key + "'");
    }
  }
  if (e.validate_extra) e.validate_extra(params);
}

void VerifierRegistry::validate(const Instruction& instruction) const {
  validate_parameters(instruction.class_id, instruction.parameters);
  if (trim(instruction.description).empty()) {
    throw SchemaError(instruction.class_id + ": empty description");
  }
}

std::string VerifierRegistry::describe(std::string_view class_id,
                                       const Json& params) const {
  validate_parameters(class_id, params);
  return at(class_id).describe(params);
}

Instruction VerifierRegistry::make(std::string class_id, Json params) const {
  Instruction i;
  i.description = describe(class_id, params);
  i.class_id = std::move(class_id);
  i.parameters = std::move(params);
  return i;
}

Verdict verify(const Instruction& instruction, const SegmentedText& text) {
  const auto& reg = registry();
  reg.validate_parameters(instruction.class_id, instruction.parameters);
  Verdict v = reg.at(instruction.class_id).check(instruction.parameters, text);
  v.class_id = instruction.class_id;
  return v;
}

Verdict verify(const Instruction& instruction, std::string_view text) {
  return verify(instruction, segment(text));
}

std::vector<Verdict> verify_all(const Sample& sample, std::string_view text) {
  const SegmentedText seg = segment(text);
  std::vector<Verdict> out;
  out.reserve(sample.instructions.size());
  for (const auto& i : sample.instructions) out.push_back(verify(i, seg));
  return out;
}

}  // namespace ifboost
