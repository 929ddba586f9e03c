#include "ifboost/text.hpp"

#include <algorithm>

namespace ifboost {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

bool is_word_char(char c) {
  auto u = static_cast<unsigned char>(c);
  return (u >= '0' && u <= '9') || (u >= 'a' && u <= 'z') ||
         (u >= 'A' && u <= 'Z') || u >= 0x80;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string word_key(std::string_view token) {
  while (!token.empty() && !is_word_char(token.front())) token.remove_prefix(1);
  while (!token.empty() && !is_word_char(token.back())) token.remove_suffix(1);
  return to_lower(token);
}

std::size_t SegmentedText::words_in(Span s) const {
  auto first = std::lower_bound(
      words.begin(), words.end(), s.begin,
      [](const Span& w, std::size_t pos) { return w.begin < pos; });
  std::size_t n = 0;
  for (auto it = first; it != words.end() && it->end <= s.end; ++it) ++n;
  return n;
}

std::size_t count_keyword(const SegmentedText& text, std::string_view keyword) {
  const std::string key = word_key(keyword);
  if (key.empty()) return 0;
  std::size_t n = 0;
  for (const Span& w : text.words) {
    if (word_key(text.view(w)) == key) ++n;
  }
  return n;
}

namespace {

bool has_word_char(std::string_view s) {
  return std::any_of(s.begin(), s.end(), is_word_char);
}

// Paragraph separators: whitespace runs with at least two newlines.
std::vector<Span> paragraph_separators(std::string_view raw) {
  std::vector<Span> seps;
  std::size_t i = 0;
  while (i < raw.size()) {
    if (!is_space(raw[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    std::size_t newlines = 0;
    while (j < raw.size() && is_space(raw[j])) {
      if (raw[j] == '\n') ++newlines;
      ++j;
    }
    if (newlines >= 2) seps.push_back({i, j});
    i = j;
  }
  return seps;
}

}  // namespace

SegmentedText segment(std::string_view text) {
  SegmentedText out;
  out.raw = std::string(text);
  std::string_view raw = out.raw;

  for (std::size_t i = 0; i < raw.size();) {
    if (is_space(raw[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < raw.size() && !is_space(raw[j])) ++j;
    if (has_word_char(raw.substr(i, j - i))) out.words.push_back({i, j});
    i = j;
  }

  const auto seps = paragraph_separators(raw);
  {
    std::size_t start = 0;
    auto emit = [&](std::size_t end) {
      if (!trim(raw.substr(start, end - start)).empty()) {
        out.paragraphs.push_back({start, end});
      }
    };
    for (const Span& sep : seps) {
      emit(sep.begin);
      start = sep.end;
    }
    emit(raw.size());
  }

  // Sentence boundaries: terminator followed by whitespace/end, or a
  // paragraph separator.
  std::vector<std::size_t> cuts;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    char c = raw[i];
    if ((c == '.' || c == '!' || c == '?') &&
        (i + 1 == raw.size() || is_space(raw[i + 1]))) {
      cuts.push_back(i + 1);
    }
  }
  for (const Span& sep : seps) cuts.push_back(sep.begin);
  cuts.push_back(raw.size());
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::size_t start = 0;
  for (std::size_t cut : cuts) {
    if (cut <= start) continue;
    std::string_view piece = raw.substr(start, cut - start);
    if (has_word_char(piece)) {
      std::size_t b = start;
      while (b < cut && is_space(raw[b])) ++b;
      out.sentences.push_back({b, cut});
    }
    start = cut;
  }
  return out;
}

}  // namespace ifboost
