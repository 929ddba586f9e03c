#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace ifboost {

/// Byte range [begin, end) into SegmentedText::raw.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const Span&) const = default;
};

/// Word, sentence and paragraph structure of a response.
///
/// Words are whitespace-separated tokens with at least one alphanumeric
/// character. A sentence ends at `.`, `!` or `?` followed by whitespace or end
/// of text, and at every paragraph break; spans without a word are dropped.
/// Paragraphs are separated by whitespace runs holding two or more newlines.
/// Bytes >= 0x80 (UTF-8 continuation/lead bytes) count as alphanumeric.
struct SegmentedText {
  std::string raw;
  std::vector<Span> words;
  std::vector<Span> sentences;
  std::vector<Span> paragraphs;

  std::string_view view(Span s) const {
    return std::string_view(raw).substr(s.begin, s.size());
  }
  std::size_t num_words() const { return words.size(); }
  std::size_t num_sentences() const { return sentences.size(); }
  std::size_t num_paragraphs() const { return paragraphs.size(); }

  /// Number of words whose span lies inside `s`.
  std::size_t words_in(Span s) const;
};

SegmentedText segment(std::string_view text);

bool is_space(char c);
bool is_word_char(char c);
std::string to_lower(std::string_view s);
std::string_view trim(std::string_view s);

/// Lower-cased token with leading/trailing non-alphanumeric bytes removed;
/// the key used for whole-word keyword matching.
std::string word_key(std::string_view token);

/// Whole-word, case-insensitive occurrences of `keyword` in `text`.
std::size_t count_keyword(const SegmentedText& text, std::string_view keyword);

}  // namespace ifboost
