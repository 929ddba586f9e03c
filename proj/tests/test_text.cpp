#include <doctest.h>

#include "ifboost/text.hpp"

using namespace ifboost;

namespace {

std::vector<std::string> views(const SegmentedText& t, const std::vector<Span>& spans) {
  std::vector<std::string> out;
  for (const Span& s : spans) out.emplace_back(trim(t.view(s)));
  return out;
}

}  // namespace

TEST_CASE("words are whitespace tokens with an alphanumeric character") {
  auto t = segment("Hello, world -- it's 2024 !");
  CHECK(views(t, t.words) == std::vector<std::string>{"Hello,", "world", "it's", "2024"});
  CHECK(segment("").num_words() == 0);
  CHECK(segment("   \n\t ").num_words() == 0);
  CHECK(segment("caf\xC3\xA9 ol\xC3\xA9").num_words() == 2);
}

TEST_CASE("sentences end at terminators followed by space or end of text") {
  auto t = segment("First one. Second one! Third? version 2.5 stays whole.");
  CHECK(views(t, t.sentences) ==
        std::vector<std::string>{"First one.", "Second one!", "Third?", "version 2.5 stays whole."});
  CHECK(segment("no terminator").num_sentences() == 1);
  CHECK(segment("... !!!").num_sentences() == 0);
}

TEST_CASE("paragraph breaks also end sentences") {
  auto t = segment("Heading\n\nBody text here. More body");
  CHECK(views(t, t.sentences) == std::vector<std::string>{"Heading", "Body text here.", "More body"});
}

TEST_CASE("paragraphs are separated by blank lines") {
  auto t = segment("\n\nOne\nstill one\n\n  \n\nTwo\r\n\r\nThree\n\n");
  CHECK(views(t, t.paragraphs) == std::vector<std::string>{"One\nstill one", "Two", "Three"});
  CHECK(segment("single").num_paragraphs() == 1);
  CHECK(segment("").num_paragraphs() == 0);
}

TEST_CASE("words_in counts words inside a span") {
  auto t = segment("a b c. d e.");
  REQUIRE(t.num_sentences() == 2);
  CHECK(t.words_in(t.sentences[0]) == 3);
  CHECK(t.words_in(t.sentences[1]) == 2);
}

TEST_CASE("keyword matching is whole-word and case-insensitive") {
  auto t = segment("The cat, the CAT and cats; \"cat\" concatenate.");
  CHECK(count_keyword(t, "cat") == 3);
  CHECK(count_keyword(t, "Cats") == 1);
  CHECK(count_keyword(t, "dog") == 0);
  CHECK(count_keyword(t, "!!") == 0);
  CHECK(word_key("\"Hello!\"") == "hello");
}

TEST_CASE("trim and to_lower") {
  CHECK(trim("  a b \n") == "a b");
  CHECK(trim("   ").empty());
  CHECK(to_lower("MiXeD 1") == "mixed 1");
}
