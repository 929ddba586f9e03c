#include "support.hpp"

#include <atomic>
#include <map>
#include <mutex>
#include <set>
#include <numeric>
#include <fstream>
#include <random>
#include <sstream>

#include "ifboost/sampler.hpp"
#include "ifboost/text.hpp"
#include "ifboost/verifiers.hpp"

namespace ifboost::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<unsigned> counter{0};
  std::random_device rd;
  path_ = fs::temp_directory_path() /
          ("ifboost-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Sample make_sample(const std::string& id, const std::string& query,
                   const std::vector<Spec>& specs) {
  Sample s;
  s.id = id;
  s.query = query;
  for (const auto& [cls, params] : specs) s.instructions.push_back(registry().make(cls, params));
  return s;
}

namespace {

std::vector<GoldenCase> build_golden() {
  std::vector<GoldenCase> g;
  auto add = [&](const std::string& cls, Json params, std::vector<std::string> pass,
                 std::vector<std::string> fail) {
    for (auto& t : pass) g.push_back({cls, params, std::move(t), true});
    for (auto& t : fail) g.push_back({cls, params, std::move(t), false});
  };

  add("length_constraints:sentence_length", {{"max_words", 5}},
      {"Short one here. Another short one.", "Tiny.", "Cats sleep a lot! Dogs bark loudly?"},
      {"This sentence clearly has more than five words.",
       "Fine. But this second sentence is definitely far too long.",
       "one two three four five six"});

  add("length_constraints:number_sentences", {{"relation", "at least"}, {"num_sentences", 3}},
      {"One. Two. Three.", "First point! Second point? Third point.", "One\n\nTwo\n\nThree"},
      {"Only one sentence here.", "Two. Sentences.", ""});
  add("length_constraints:number_sentences", {{"relation", "less than"}, {"num_sentences", 2}},
      {"Just one.", "No terminator at all", "Still one sentence, with a comma."},
      {"One. Two.", "A! B? C.", "Para one\n\nPara two"});

  add("length_constraints:number_words", {{"relation", "less than"}, {"num_words", 5}},
      {"one two three four", "Hi!", "a - b c"},
      {"one two three four five", "This has six words in it.", "1 2 3 4 5 6 7"});
  add("length_constraints:number_words", {{"relation", "at least"}, {"num_words", 10}},
      {"one two three four five six seven eight nine ten",
       "This response is long enough to clear the ten word floor easily.",
       "a b c d e f g h i j k"},
      {"too short", "one two three four five six seven eight nine", "- - - - - - - - - - - -"});

  add("length_constraints:number_paragraphs", {{"num_paragraphs", 3}},
      {"A\n***\nB\n***\nC", "Para one. *** Para two. *** Para three.", "***\nA\n***\nB\n***\nC"},
      {"A\n***\nB", "A\n***\n\n***\nB\n***\nC", "A\n\nB\n\nC"});

  add("length_constraints:nth_paragraph_first_word",
      {{"num_paragraphs", 3}, {"nth_paragraph", 2}, {"first_word", "apple"}},
      {"Intro.\n\nApple trees grow.\n\nEnd.", "x\n\n\"apple,\" she said.\n\ny", "a\n\napple\n\nb"},
      {"Intro.\n\nBanana.\n\nEnd.", "Intro.\n\nApple.", "a\n\napplesauce is good\n\nb"});

  add("detectable_format:number_bullet_lists", {{"num_bullets", 2}},
      {"* a\n* b", "- one\n- two", "Intro\n  * a\n  - b"},
      {"* a", "* a\n* b\n* c", "**bold**\n**bold**"});

  add("detectable_format:constrained_response", Json::object(),
      {"My answer is yes.", "  My answer is no.  ", "Thinking it over. My answer is maybe."},
      {"Yes.", "my answer is yes.", "My answer is perhaps."});

  add("detectable_format:number_highlighted_sections", {{"num_highlights", 2}},
      {"*a* and *b*", "**bold** and *it*", "*x* *y* *z*"},
      {"*a* only", "no highlights", "* * alone"});

  add("detectable_format:title", Json::object(),
      {"<<My Title>>\nbody", "Text <<A>> more", "<<Poem of Joy>>"},
      {"<My Title>", "<< >>", "no title"});

  add("detectable_format:multiple_sections", {{"section_spliter", "Section"}, {"num_sections", 2}},
      {"Section 1\nA\nSection 2\nB", "Section 1 a Section 2 b Section 3 c",
       "Intro Section 1 x Section 2 y"},
      {"Section 1 only", "SECTION 1 a SECTION 2 b", "Section A x Section B y"});

  add("detectable_format:json_format", Json::object(),
      {"{\"a\":1}", "```json\n{\"a\": [1,2]}\n```", "[1, 2, 3]"},
      {"{a:1}", "Here is JSON: {\"a\":1}", "```json\n{\"a\":\n```"});

  add("detectable_format:yaml_format", Json::object(),
      {"a: 1\nb: two", "```yaml\nkey: value\n```", "list:\n  - x\n  - y"},
      {"just a sentence", "a: 1\n---\nb: 2", "- x\n- y", "key: [unclosed"});

  add("detectable_content:number_placeholders", {{"num_placeholders", 2}},
      {"[name] at [address]", "[a][b][c]", "Dear [x],\nfrom [y]"},
      {"[one]", "none", "(a) (b)"});

  add("detectable_content:postscript", {{"postscript_marker", "P.S."}},
      {"Body.\nP.S. hi", "body p.s. lower", "P. S. spaced"},
      {"PS no dots", "Body only", "P.P.S"});
  add("detectable_content:postscript", {{"postscript_marker", "P.P.S"}},
      {"P.P.S later", "p. p. s", "Body\nP.P.S. more"},
      {"P.S. only", "none", "PPS"});

  add("punctuation:no_comma", Json::object(),
      {"No commas here.", "", "Semi; colons: fine"},
      {"a, b", ",", "one,two"});

  add("keywords:forbidden_words", {{"forbidden_words", {"apple", "pie"}}},
      {"I like pears.", "Pineapple is fine.", "applesauce pies"},
      {"An apple a day.", "APPLE!", "Cherry pie."});

  add("keywords:frequency", {{"keyword", "cat"}, {"relation", "at least"}, {"frequency", 2}},
      {"cat cat", "The Cat saw a cat.", "cat, cat, cat"},
      {"cat", "cats cats", "none"});
  add("keywords:frequency", {{"keyword", "cat"}, {"relation", "less than"}, {"frequency", 2}},
      {"one cat", "no felines", "cats and a cat"},
      {"cat cat", "Cat. CAT. cat.", "cat! cat?"});

  add("keywords:letter_frequency", {{"letter", "z"}, {"let_relation", "less than"}, {"let_frequency", 3}},
      {"zz", "no such letter", "Zoo zebra"},
      {"zzz", "Zigzag zone", "ZZZZ"});

  add("keywords:existence", {{"keywords", {"sun", "moon"}}},
      {"The sun and the moon.", "MOON sun", "sun. moon."},
      {"Only the sun.", "sunny moonlight", ""});

  add("combination:repeat_prompt", {{"prompt_to_repeat", "Write a poem."}},
      {"Write a poem. Roses are red.", "  Write a poem.\nHere it is.", "Write a poem."},
      {"write a poem. lowercase", "Here: Write a poem.", "Write a poem"});

  add("combination:multiple_responses", Json::object(),
      {"A\n******\nB", "First answer ****** Second answer", "******\nA\n******\nB"},
      {"A ****** A", "Only one", "A ****** B ****** C", "A ****** ****** B"});

  add("change_case:capital_word_frequency", {{"capital_relation", "at least"}, {"capital_frequency", 2}},
      {"HELLO WORLD", "NASA and FBI", "I AM here"},
      {"Hello World", "ONE only", ""});
  add("change_case:capital_word_frequency", {{"capital_relation", "less than"}, {"capital_frequency", 2}},
      {"Hello World", "only ONE", "nothing shouted"},
      {"BIG LOUD", "A B C", "USA, UK and EU"});

  add("change_case:lowercase_sentences", Json::object(),
      {"all lower. still lower.", "123 then lower.", "x! y? z."},
      {"Capital start.", "fine. Not fine.", "ok\n\nBad para"});

  add("startend:quotation", Json::object(),
      {"\"quoted\"", "  \"multi\nline\"  ", "\"\""},
      {"unquoted", "\"half", "'single'"});

  add("startend:start_checker", {{"start_phrase", "Once upon a time"}},
      {"Once upon a time there was a fox.", "  once upon a time", "ONCE UPON A TIME!"},
      {"There once upon a time", "Once upon", ""});

  add("startend:end_checker", {{"end_phrase", "Is there anything else I can help with?"}},
      {"Done. Is there anything else I can help with?",
       "\"Text. is there anything else i can help with?\"",
       "x Is there anything else I can help with?  \n"},
      {"Is there anything else I can help with? Bye.", "Is there anything else I can help with",
       "nothing"});
  return g;
}

}  // namespace

const std::vector<GoldenCase>& golden_cases() {
  static const std::vector<GoldenCase> cases = build_golden();
  return cases;
}

const std::vector<std::string>& fixture_queries() {
  static const std::vector<std::string> q = {
      "Write a short story about a lighthouse keeper.",
      "Explain how vaccines train the immune system.",
      "Draft an email asking a landlord to fix the heating.",
      "Describe the water cycle for a ten year old.",
      "Give advice on preparing for a job interview.",
      "Summarize the causes of the French Revolution.",
      "Write a product description for a solar lantern.",
      "Explain the rules of chess to a beginner.",
      "Compose a poem about autumn in the city.",
      "Write a review of a fictional Italian restaurant.",
      "Explain what a hash table is.",
      "Plan a three day trip to Kyoto.",
      "Argue for more bike lanes in small towns.",
      "Write a cover letter for a junior data analyst role.",
      "Describe how bread rises.",
      "Write a dialogue between a cat and a dog.",
      "Explain compound interest with an example.",
      "Give tips for growing tomatoes on a balcony.",
      "Write a eulogy for a beloved family pet.",
      "Explain why the sky is blue.",
  };
  return q;
}

const std::vector<std::string>& response_pool() {
  static const std::vector<std::string> pool = [] {
    std::string long_text;
    for (int i = 0; i < 30; ++i) long_text += "the river keeps moving past the old stone mill. ";
    return std::vector<std::string>{
        "a short lowercase reply without commas.",
        "\"My answer is yes. P.S. see [note] and [link] with *one* and *two* highlights.\"",
        "<<Title>>\n\n* first point\n* second point\n\nSection 1 alpha Section 2 beta\n\nP.P.S more",
        "Plain text, with commas, and SOME Capitals.",
        long_text,
        "{\"answer\": \"structured\", \"items\": [1, 2, 3]}",
    };
  }();
  return pool;
}

std::string judge_reply(const std::vector<std::string>& answers) {
  Json a = Json::array();
  for (std::size_t i = 0; i < answers.size(); ++i) {
    a.push_back({{"policy", "policy " + std::to_string(i + 1)},
                 {"answer", answers[i]},
                 {"explanation", "checked item " + std::to_string(i + 1)}});
  }
  return a.dump();
}

Dataset sampled_dataset(std::size_t samples, std::size_t k, std::uint64_t seed) {
  auto provider = WordlistKeywordProvider::builtin();
  Dataset d;
  const auto& queries = fixture_queries();
  for (std::size_t i = 0; i < samples; ++i) {
    Sample s;
    s.id = generated_sample_id(i);
    s.query = queries[i % queries.size()];
    s.instructions = sample_instruction_set(s.query, k, derive_seed(seed, i), &provider);
    d.samples.push_back(std::move(s));
  }
  d.meta.instructions_per_sample = k;
  d.meta.seed = seed;
  return d;
}

Json pipeline_script(std::size_t k) {
  auto tagged = [](std::string_view open, std::string_view close) {
    Json out = Json::array();
    for (const auto& r : response_pool()) {
      out.push_back("Sure.\n" + std::string(open) + "\n" + r + "\n" + std::string(close));
    }
    return out;
  };
  std::vector<std::string> yes(k, "yes"), alternating(k, "yes"), mostly_no(k, "no");
  for (std::size_t i = 0; i < k; i += 2) alternating[i] = "no";
  mostly_no[0] = "yes";
  Json judges = {judge_reply(alternating), judge_reply(yes), judge_reply(mostly_no)};
  return Json{
      {"id", "pipeline-mock"},
      {"rules",
       {{{"match", {{"role", "initial"}}}, {"completions", response_pool()}},
        {{"match", {{"role", "adherence"}}}, {"completions", {"yes", "yes", "no", "yes"}}},
        {{"match", {{"role", "judge"}}}, {"completions", judges}},
        {{"match", {{"role", "repair"}}}, {"completions", tagged("<START_OF_REWRITE>", "<END_OF_REWRITE>")}},
        {{"match", {{"role", "rewrite"}}}, {"completions", tagged("<START_OF_REWRITE>", "<END_OF_REWRITE>")}},
        {{"match", {{"role", "map"}}}, {"completions", tagged("<START_OF_REWRITE>", "<END_OF_REWRITE>")}},
        {{"match", {{"role", "reduce"}}}, {"completions", tagged("<START_OF_REWRITE>", "<END_OF_REWRITE>")}},
        {{"match", {{"role", "generate"}}}, {"completions", tagged("<START_OF_RESPONSE>", "<END_OF_RESPONSE>")}},
        {{"match", {{"role", "conflict"}}}, {"completions", response_pool()}},
        {{"match", {{"role", "keywords"}}}, {"completions", {"harbor, lantern, meadow, copper, violin, glacier"}}}}}};
}

namespace {

const Instruction* find(const std::vector<Instruction>& set, const std::string& cls) {
  for (const auto& i : set) {
    if (i.class_id == cls) return &i;
  }
  return nullptr;
}

long long num(const Instruction* i, const char* p) { return i->parameters.at(p).get<long long>(); }

std::vector<std::string> words_of(const Instruction& i) {
  const Json& p = i.parameters;
  if (i.class_id == "keywords:existence") return p.at("keywords").get<std::vector<std::string>>();
  if (i.class_id == "keywords:forbidden_words")
    return p.at("forbidden_words").get<std::vector<std::string>>();
  if (i.class_id == "keywords:frequency") return {p.at("keyword").get<std::string>()};
  if (i.class_id == "length_constraints:nth_paragraph_first_word")
    return {p.at("first_word").get<std::string>()};
  return {};
}

// Independent restatement of the hard-conflict rules, evaluated directly on
// the parameters of a finished set.
}  // namespace

std::vector<std::string> oracle_conflicts(const std::vector<Instruction>& set) {
  std::vector<std::string> problems;
  const auto table = ConstraintTable::defaults();
  for (std::size_t a = 0; a < set.size(); ++a) {
    for (std::size_t b = a + 1; b < set.size(); ++b) {
      if (table.excluded(set[a].class_id, set[b].class_id)) {
        problems.push_back("excluded pair " + set[a].class_id + " / " + set[b].class_id);
      }
    }
  }
  const Instruction* words = find(set, "length_constraints:number_words");
  const Instruction* paragraphs = find(set, "length_constraints:number_paragraphs");
  const Instruction* nth = find(set, "length_constraints:nth_paragraph_first_word");
  const Instruction* sections = find(set, "detectable_format:multiple_sections");
  const Instruction* sentences = find(set, "length_constraints:number_sentences");
  const Instruction* length = find(set, "length_constraints:sentence_length");
  if (words) {
    const long long w = num(words, "num_words");
    if (paragraphs && w < 10 * num(paragraphs, "num_paragraphs")) problems.push_back("words < 10 x paragraphs");
    if (nth && w < 10 * num(nth, "num_paragraphs")) problems.push_back("words < 10 x nth paragraphs");
    if (sections && w < 10 * num(sections, "num_sections")) problems.push_back("words < 10 x sections");
    if (sentences && w < 3 * num(sentences, "num_sentences")) problems.push_back("words < 3 x sentences");
    if (sentences && length &&
        w < (num(sentences, "num_sentences") + 3) * (num(length, "max_words") + 3)) {
      problems.push_back("three-way length");
    }
  }
  std::vector<std::set<std::string>> keyword_sets;
  for (const auto& i : set) {
    std::set<std::string> ws;
    for (const auto& w : words_of(i)) ws.insert(word_key(w));
    if (!ws.empty()) keyword_sets.push_back(ws);
  }
  for (std::size_t a = 0; a < keyword_sets.size(); ++a) {
    for (std::size_t b = a + 1; b < keyword_sets.size(); ++b) {
      for (const auto& w : keyword_sets[a]) {
        if (keyword_sets[b].count(w)) problems.push_back("shared keyword " + w);
      }
    }
  }
  return problems;
}


std::vector<JudgeFixture> judge_fixtures() {
  const std::string three = judge_reply({"yes", "no", "yes"});
  return {
      {"bare array", three, 3, ParseFailure::None},
      {"fenced", "```json\n" + three + "\n```", 3, ParseFailure::None},
      {"prose wrapped", "Here is my assessment:\n" + three + "\nLet me know.", 3, ParseFailure::None},
      {"bracket in prose before array", "Policies [see above] were checked. " + three, 3,
       ParseFailure::None},
      {"brackets inside strings",
       R"([{"policy": "use [brackets]", "answer": "YES ", "explanation": "a ] b"}])", 1,
       ParseFailure::None},
      {"wrong length short", judge_reply({"yes", "no"}), 3, ParseFailure::BadLength},
      {"wrong length long", judge_reply({"yes", "no", "yes", "no"}), 3, ParseFailure::BadLength},
      {"bad vocabulary", judge_reply({"yes", "maybe", "no"}), 3, ParseFailure::BadAnswer},
      {"empty answer", judge_reply({"yes", "", "no"}), 3, ParseFailure::BadAnswer},
      {"no array", "All policies are followed.", 3, ParseFailure::NoArray},
      {"empty reply", "", 1, ParseFailure::NoArray},
      {"truncated", three.substr(0, three.size() - 5), 3, ParseFailure::Malformed},
      {"non-object elements", R"(["yes", "no", "yes"])", 3, ParseFailure::Malformed},
      {"answer not a string", R"([{"policy": "p", "answer": true}])", 1, ParseFailure::Malformed},
  };
}

ConflictOracleRun run_conflict_oracle_fixture() {
  Dataset d;
  const auto& queries = fixture_queries();
  auto provider = WordlistKeywordProvider::builtin();
  for (std::size_t i = 0; i < 5; ++i) {
    Sample s;
    s.id = "eq-" + std::to_string(i);
    s.query = queries[i];
    s.instructions = sample_instruction_set(s.query, 4, 1000 + i, &provider);
    d.samples.push_back(std::move(s));
  }
  d.meta.instructions_per_sample = 4;

  // Responses are a pure function of the prompt; every reply is recorded.
  std::mutex mu;
  std::vector<std::pair<std::string, std::vector<std::string>>> log;
  auto fn = [&](const GenerationRequest& req) {
    GenerationResult r;
    const auto& pool = response_pool();
    const std::uint64_t h = fnv1a64(req.user);
    for (int t = 0; t < req.n; ++t) {
      r.texts.push_back(pool[(h >> (t * 3)) % pool.size()]);
    }
    r.completion_tokens = req.n;
    std::lock_guard lock(mu);
    log.emplace_back(req.user, r.texts);
    return r;
  };
  Gateway gw(std::make_unique<FunctionBackend>("recording", fn), RetryPolicy{}, 2);
  ConflictOptions opts;
  opts.r = 5;

  ConflictOracleRun run;
  run.report = run_conflict(gw, d, opts, {}, 0.1);
  if (run.report.scores.size() != d.samples.size()) {
    run.mismatches.push_back("expected a score for every sample");
    return run;
  }

  auto responses_for = [&](const Sample& s, const Instruction& a,
                           const Instruction& b) -> const std::vector<std::string>* {
    const std::vector<std::string>* found = nullptr;
    int hits = 0;
    for (const auto& [prompt, texts] : log) {
      if (prompt.find(s.query) != std::string::npos &&
          prompt.find(a.description) != std::string::npos &&
          prompt.find(b.description) != std::string::npos) {
        found = &texts;
        ++hits;
      }
    }
    return hits == 1 ? found : nullptr;
  };

  for (std::size_t si = 0; si < d.samples.size(); ++si) {
    const Sample& s = d.samples[si];
    const long long k = static_cast<long long>(s.instructions.size());
    long long ordered_sum = 0;
    for (long long i = 0; i < k; ++i) {
      for (long long j = 0; j < k; ++j) {
        if (i == j) continue;
        const Instruction& a = s.instructions[static_cast<std::size_t>(i)];
        const Instruction& b = s.instructions[static_cast<std::size_t>(j)];
        const auto* texts = responses_for(s, a, b);
        if (!texts) {
          run.mismatches.push_back(s.id + ": no unique recorded reply for a pair");
          continue;
        }
        for (const auto& t : *texts) {
          ordered_sum += !verify(a, t).followed || !verify(b, t).followed;
        }
      }
    }
    // Reduced fraction ordered_sum / k against the reported score.
    const long long g = std::gcd(ordered_sum, k);
    const long long num = ordered_sum / g, den = k / g;
    const ConflictScore& got = run.report.scores[si];
    ++run.checked;
    if (got.sample_id != s.id || got.k != k ||
        got.score * static_cast<double>(den) != static_cast<double>(num) ||
        2 * got.unordered_sum != ordered_sum) {
      run.mismatches.push_back(s.id + ": expected " + std::to_string(num) + "/" +
                               std::to_string(den) + ", got " + std::to_string(got.score));
    }
  }
  return run;
}

}  // namespace ifboost::testing
