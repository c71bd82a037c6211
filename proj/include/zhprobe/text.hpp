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

// Characters, sentences, vocabularies and span-length buckets.
//
// A character is one Unicode scalar value. Positions are 0-indexed. A gap
// index g in [0, n] names the boundary before character g, so "insert after
// the 5th character" (1-indexed prose) is gap 5.

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "zhprobe/error.hpp"

namespace zhprobe {

inline bool is_scalar_value(char32_t c) noexcept {
  return c <= 0x10FFFF && (c < 0xD800 || c > 0xDFFF);
}

inline void append_utf8(std::string& out, char32_t c) {
  if (!is_scalar_value(c)) throw ContractError("not a Unicode scalar value");
  if (c < 0x80) {
    out.push_back(static_cast<char>(c));
  } else if (c < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (c >> 6)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else if (c < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (c >> 12)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (c >> 18)));
    out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  }
}

inline std::string to_utf8(char32_t c) {
  std::string out;
  append_utf8(out, c);
  return out;
}

inline std::string to_utf8(std::u32string_view s) {
  std::string out;
  out.reserve(s.size() * 3);
  for (char32_t c : s) append_utf8(out, c);
  return out;
}

/// Strict UTF-8 decoder: rejects overlong forms, surrogates and values above
/// U+10FFFF. Throws DecodeError with the offset of the offending sequence.
inline std::u32string decode_utf8(std::string_view bytes) {
  std::u32string out;
  out.reserve(bytes.size());
  std::size_t i = 0;
  const std::size_t n = bytes.size();
  while (i < n) {
    const auto b0 = static_cast<unsigned char>(bytes[i]);
    if (b0 < 0x80) {
      out.push_back(b0);
      ++i;
      continue;
    }
    std::size_t len;
    char32_t cp;
    char32_t min;
    if ((b0 & 0xE0) == 0xC0) {
      len = 2, cp = b0 & 0x1F, min = 0x80;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3, cp = b0 & 0x0F, min = 0x800;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4, cp = b0 & 0x07, min = 0x10000;
    } else {
      throw DecodeError(i, "invalid lead byte");
    }
    if (i + len > n) throw DecodeError(i, "truncated sequence");
    for (std::size_t j = 1; j < len; ++j) {
      const auto b = static_cast<unsigned char>(bytes[i + j]);
      if ((b & 0xC0) != 0x80) throw DecodeError(i, "invalid continuation byte");
      cp = (cp << 6) | (b & 0x3F);
    }
    if (cp < min) throw DecodeError(i, "overlong encoding");
    if (!is_scalar_value(cp)) throw DecodeError(i, "not a scalar value");
    out.push_back(cp);
    i += len;
  }
  return out;
}

/// Immutable, non-empty sequence of characters with an opaque identifier.
class Sentence {
 public:
  explicit Sentence(std::u32string chars, std::string id = {})
      : chars_(std::move(chars)), id_(std::move(id)) {
    if (chars_.empty()) throw EmptySentenceError();
    for (char32_t c : chars_) {
      if (!is_scalar_value(c)) throw ContractError("sentence holds a non-scalar code point");
    }
  }

  const std::u32string& chars() const noexcept { return chars_; }
  const std::string& id() const noexcept { return id_; }
  std::size_t size() const noexcept { return chars_.size(); }
  char32_t operator[](std::size_t i) const { return chars_.at(i); }
  std::string utf8() const { return to_utf8(chars_); }

  friend bool operator==(const Sentence&, const Sentence&) = default;

 private:
  std::u32string chars_;
  std::string id_;
};

inline Sentence decode_sentence(std::string_view bytes, std::string id = {}) {
  if (bytes.empty()) throw EmptySentenceError();
  return Sentence(decode_utf8(bytes), std::move(id));
}

// ---------------------------------------------------------------------------
// Length buckets

enum class LengthBucket { One, Two, ThreeOrMore };

inline constexpr std::array<LengthBucket, 3> kAllBuckets = {
    LengthBucket::One, LengthBucket::Two, LengthBucket::ThreeOrMore};

inline LengthBucket bucket_of(std::size_t k) {
  if (k == 0) throw DomainError("span length must be >= 1");
  if (k == 1) return LengthBucket::One;
  if (k == 2) return LengthBucket::Two;
  return LengthBucket::ThreeOrMore;
}

inline std::size_t bucket_index(LengthBucket b) noexcept { return static_cast<std::size_t>(b); }

/// Short machine label: "1", "2", ">=3".
inline std::string_view bucket_label(LengthBucket b) noexcept {
  switch (b) {
    case LengthBucket::One: return "1";
    case LengthBucket::Two: return "2";
    case LengthBucket::ThreeOrMore: return ">=3";
  }
  return "?";
}

inline LengthBucket parse_bucket(std::string_view s) {
  if (s == "1") return LengthBucket::One;
  if (s == "2") return LengthBucket::Two;
  if (s == ">=3") return LengthBucket::ThreeOrMore;
  throw FormatError("unknown length bucket '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Vocabulary

/// Token inventory. The five special tokens always occupy indices 0..4 in the
/// order PAD, UNK, CLS, SEP, MASK; character tokens follow.
class Vocab {
 public:
  static constexpr std::string_view kPad = "[PAD]";
  static constexpr std::string_view kUnk = "[UNK]";
  static constexpr std::string_view kCls = "[CLS]";
  static constexpr std::string_view kSep = "[SEP]";
  static constexpr std::string_view kMask = "[MASK]";
  static constexpr std::array<std::string_view, 5> kSpecials = {kPad, kUnk, kCls, kSep, kMask};
  static constexpr std::size_t kNumSpecials = kSpecials.size();

  Vocab() {
    for (auto s : kSpecials) add(std::string(s));
  }

  /// Specials followed by the distinct characters in ascending code point order.
  template <typename Range>
  static Vocab from_characters(const Range& chars) {
    std::vector<char32_t> sorted(std::begin(chars), std::end(chars));
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    Vocab v;
    for (char32_t c : sorted) v.add(to_utf8(c));
    return v;
  }

  /// Reads one token per line. The first five lines must be the specials.
  static Vocab load(std::istream& in) {
    Vocab v;
    v.entries_.clear();
    v.index_.clear();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) throw RecordError(lineno, "empty vocabulary entry");
      decode_utf8(line);
      if (lineno <= kNumSpecials && line != kSpecials[lineno - 1]) {
        throw RecordError(lineno, "expected special token " + std::string(kSpecials[lineno - 1]));
      }
      if (v.index_.count(line)) throw RecordError(lineno, "duplicate entry '" + line + "'");
      v.add(line);
    }
    if (v.entries_.size() < kNumSpecials) throw FormatError("vocabulary lacks special tokens");
    return v;
  }

  void save(std::ostream& out) const {
    for (const auto& e : entries_) out << e << '\n';
  }

  std::size_t size() const noexcept { return entries_.size(); }
  const std::string& token(std::size_t index) const { return entries_.at(index); }

  std::optional<std::size_t> lookup(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(char32_t c) const { return lookup(to_utf8(c)).has_value(); }

  static bool is_special(std::string_view token) noexcept {
    return std::find(kSpecials.begin(), kSpecials.end(), token) != kSpecials.end();
  }

  static bool is_special_index(std::size_t index) noexcept { return index < kNumSpecials; }

  /// Non-special entries that are single characters, in vocabulary order.
  std::vector<char32_t> characters() const {
    std::vector<char32_t> out;
    for (std::size_t i = kNumSpecials; i < entries_.size(); ++i) {
      auto cs = decode_utf8(entries_[i]);
      if (cs.size() == 1) out.push_back(cs[0]);
    }
    return out;
  }

 private:
  void add(std::string token) {
    index_.emplace(token, entries_.size());
    entries_.push_back(std::move(token));
  }

  std::vector<std::string> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace zhprobe
