// Copyright 2026 The zhprobe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstddef>
#include <istream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "zhprobe/error.hpp"
#include "zhprobe/text.hpp"

namespace zhprobe {

struct WordSpan {
  std::size_t start;
  std::size_t length;

  friend bool operator==(const WordSpan&, const WordSpan&) = default;
};

/// Word boundaries; a valid value tiles [0, n) exactly.
using WordSpans = std::vector<WordSpan>;

inline bool tiles(const WordSpans& spans, std::size_t n) noexcept {
  std::size_t cursor = 0;
  for (const auto& s : spans) {
    if (s.start != cursor || s.length == 0) return false;
    cursor += s.length;
  }
  return cursor == n;
}

inline WordSpans singleton_spans(std::size_t n) {
  WordSpans out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {i, 1};
  return out;
}

class Lexicon {
 public:
  Lexicon() = default;

  template <typename Range>
  explicit Lexicon(const Range& words) {
    for (const auto& w : words) add(std::u32string(w));
  }

  void add(std::u32string word) {
    if (word.empty()) throw ContractError("lexicon words must be non-empty");
    max_word_len_ = std::max(max_word_len_, word.size());
    words_.insert(std::move(word));
  }

  /// One word per line; blank lines and lines starting with '#' are skipped.
  static Lexicon load(std::istream& in) {
    Lexicon lex;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.front() == '#') continue;
      try {
        lex.add(decode_utf8(line));
      } catch (const DecodeError& e) {
        throw RecordError(lineno, e.what());
      }
    }
    return lex;
  }

  bool contains(std::u32string_view w) const { return words_.count(std::u32string(w)) > 0; }
  std::size_t size() const noexcept { return words_.size(); }
  bool empty() const noexcept { return words_.empty(); }
  std::size_t max_word_len() const noexcept { return max_word_len_; }

 private:
  std::unordered_set<std::u32string> words_;
  std::size_t max_word_len_ = 0;
};

/// Forward maximum matching: at each cursor take the longest lexicon word
/// starting there, or a single character when none matches.
inline WordSpans segment_fmm(std::u32string_view s, const Lexicon& lex) {
  WordSpans out;
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t len = 1;
    for (std::size_t cand = std::min(lex.max_word_len(), s.size() - i); cand > 1; --cand) {
      if (lex.contains(s.substr(i, cand))) {
        len = cand;
        break;
      }
    }
    out.push_back({i, len});
    i += len;
  }
  return out;
}

inline WordSpans segment_fmm(const Sentence& s, const Lexicon& lex) {
  return segment_fmm(s.chars(), lex);
}

/// Reads a line of words separated by single spaces.
inline std::pair<Sentence, WordSpans> parse_presegmented(std::string_view line,
                                                         std::string id = {}) {
  std::u32string chars;
  WordSpans spans;
  std::size_t byte = 0;
  for (;;) {
    const auto sp = line.find(' ', byte);
    const std::string_view word = line.substr(byte, sp == std::string_view::npos ? sp : sp - byte);
    if (word.empty()) throw FormatError("empty word at byte " + std::to_string(byte));
    const std::u32string w = decode_utf8(word);
    spans.push_back({chars.size(), w.size()});
    chars += w;
    if (sp == std::string_view::npos) break;
    byte = sp + 1;
  }
  return {Sentence(std::move(chars), std::move(id)), std::move(spans)};
}

inline std::string format_segmented(std::u32string_view s, const WordSpans& spans) {
  std::string out;
  for (const auto& w : spans) {
    if (!out.empty()) out.push_back(' ');
    out += to_utf8(s.substr(w.start, w.length));
  }
  return out;
}

}  // namespace zhprobe
