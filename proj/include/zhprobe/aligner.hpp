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

// Character alignment of an erroneous sentence against its correction.
//
// align_chars runs a restricted Damerau-Levenshtein (optimal string
// alignment) program with unit costs. The table is filled over suffixes so
// the traceback walks left to right; at every cell the first optimal move in
// the order Match, Transpose, Substitute, Delete, Insert is taken. This makes
// ties resolve towards the earliest position in the sentence.
//
// merge_edits folds the op list into classified span edits: runs of one op
// kind become one span, and runs of different kinds are never merged.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "zhprobe/error.hpp"
#include "zhprobe/text.hpp"

namespace zhprobe {

enum class EditKind : std::uint8_t { Match, Substitute, Insert, Delete, Transpose };

/// One step of an alignment.
///
/// Match/Substitute: src_pos and tgt_pos are character indices.
/// Insert: src_pos is a source gap, tgt_pos the inserted target index.
/// Delete: src_pos is the deleted source index, tgt_pos a target gap.
/// Transpose: covers src_pos, src_pos+1 and tgt_pos, tgt_pos+1;
///   src_char = src[src_pos] = tgt[tgt_pos+1], tgt_char = tgt[tgt_pos] = src[src_pos+1].
struct EditOp {
  EditKind kind;
  std::size_t src_pos;
  std::size_t tgt_pos;
  char32_t src_char = 0;  // 0 for Insert
  char32_t tgt_char = 0;  // 0 for Delete

  friend bool operator==(const EditOp&, const EditOp&) = default;
};

enum class SpanType : std::uint8_t { Insertion, Replacement, Redundant, Ordering };

inline std::string_view span_type_name(SpanType t) noexcept {
  switch (t) {
    case SpanType::Insertion: return "insertion";
    case SpanType::Replacement: return "replacement";
    case SpanType::Redundant: return "redundant";
    case SpanType::Ordering: return "ordering";
  }
  return "?";
}

struct SpanEdit {
  SpanType type;
  std::size_t src_start;  // index, or gap index for Insertion
  std::size_t tgt_start;  // index in the corrected sentence, or gap for Redundant
  std::u32string src_chars;
  std::u32string tgt_chars;

  std::size_t length() const noexcept {
    return type == SpanType::Insertion ? tgt_chars.size() : src_chars.size();
  }

  friend bool operator==(const SpanEdit&, const SpanEdit&) = default;
};

namespace detail {

inline bool can_transpose(std::u32string_view src, std::u32string_view tgt, std::size_t i,
                          std::size_t j) noexcept {
  return i + 1 < src.size() && j + 1 < tgt.size() && src[i] != src[i + 1] &&
         src[i] == tgt[j + 1] && src[i + 1] == tgt[j];
}

/// Suffix cost table: cell (i, j) = cost of turning src[i..] into tgt[j..].
class SuffixTable {
 public:
  SuffixTable(std::u32string_view src, std::u32string_view tgt)
      : rows_(src.size() + 1), cols_(tgt.size() + 1), cells_(rows_ * cols_) {
    const std::size_t n = src.size();
    const std::size_t m = tgt.size();
    for (std::size_t i = n + 1; i-- > 0;) {
      for (std::size_t j = m + 1; j-- > 0;) {
        std::uint32_t best;
        if (i == n) {
          best = static_cast<std::uint32_t>(m - j);
        } else if (j == m) {
          best = static_cast<std::uint32_t>(n - i);
        } else {
          best = at(i + 1, j + 1) + (src[i] == tgt[j] ? 0 : 1);
          best = std::min(best, at(i + 1, j) + 1);
          best = std::min(best, at(i, j + 1) + 1);
          if (can_transpose(src, tgt, i, j)) best = std::min(best, at(i + 2, j + 2) + 1);
        }
        cells_[i * cols_ + j] = best;
      }
    }
  }

  std::uint32_t at(std::size_t i, std::size_t j) const { return cells_[i * cols_ + j]; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<std::uint32_t> cells_;
};

}  // namespace detail

/// Minimal unit-cost edit distance with adjacent transpositions.
inline std::size_t alignment_cost(std::u32string_view src, std::u32string_view tgt) {
  return detail::SuffixTable(src, tgt).at(0, 0);
}

inline std::vector<EditOp> align_chars(std::u32string_view src, std::u32string_view tgt) {
  if (src.empty() || tgt.empty()) throw ContractError("align_chars requires non-empty inputs");
  const detail::SuffixTable table(src, tgt);
  const std::size_t n = src.size();
  const std::size_t m = tgt.size();

  std::vector<EditOp> ops;
  ops.reserve(std::max(n, m));
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < n || j < m) {
    const std::uint32_t here = table.at(i, j);
    if (i < n && j < m && src[i] == tgt[j] && table.at(i + 1, j + 1) == here) {
      ops.push_back({EditKind::Match, i, j, src[i], tgt[j]});
      ++i, ++j;
    } else if (detail::can_transpose(src, tgt, i, j) && table.at(i + 2, j + 2) + 1 == here) {
      ops.push_back({EditKind::Transpose, i, j, src[i], tgt[j]});
      i += 2, j += 2;
    } else if (i < n && j < m && src[i] != tgt[j] && table.at(i + 1, j + 1) + 1 == here) {
      ops.push_back({EditKind::Substitute, i, j, src[i], tgt[j]});
      ++i, ++j;
    } else if (i < n && table.at(i + 1, j) + 1 == here) {
      ops.push_back({EditKind::Delete, i, j, src[i], 0});
      ++i;
    } else {
      ops.push_back({EditKind::Insert, i, j, 0, tgt[j]});
      ++j;
    }
  }
  return ops;
}

inline std::vector<EditOp> align_chars(const Sentence& src, const Sentence& tgt) {
  return align_chars(src.chars(), tgt.chars());
}

/// Number of non-Match ops, which is the script cost under unit costs.
inline std::size_t script_cost(const std::vector<EditOp>& ops) noexcept {
  return static_cast<std::size_t>(std::count_if(
      ops.begin(), ops.end(), [](const EditOp& op) { return op.kind != EditKind::Match; }));
}

inline std::vector<SpanEdit> merge_edits(const std::vector<EditOp>& ops) {
  std::vector<SpanEdit> spans;
  std::size_t i = 0;
  std::size_t j = 0;
  const EditOp* prev = nullptr;
  for (const EditOp& op : ops) {
    if (op.src_pos != i || op.tgt_pos != j) {
      throw ContractError("edit ops do not replay contiguously at (" + std::to_string(i) + ", " +
                          std::to_string(j) + ")");
    }
    const bool extends = prev != nullptr && prev->kind == op.kind && op.kind != EditKind::Match;
    SpanEdit* open = extends ? &spans.back() : nullptr;
    switch (op.kind) {
      case EditKind::Match:
        if (op.src_char != op.tgt_char) throw ContractError("Match op with differing characters");
        ++i, ++j;
        break;
      case EditKind::Substitute:
        if (op.src_char == op.tgt_char) throw ContractError("Substitute op with equal characters");
        if (!open) open = &spans.emplace_back(SpanEdit{SpanType::Replacement, i, j, {}, {}});
        open->src_chars.push_back(op.src_char);
        open->tgt_chars.push_back(op.tgt_char);
        ++i, ++j;
        break;
      case EditKind::Insert:
        if (!open) open = &spans.emplace_back(SpanEdit{SpanType::Insertion, i, j, {}, {}});
        open->tgt_chars.push_back(op.tgt_char);
        ++j;
        break;
      case EditKind::Delete:
        if (!open) open = &spans.emplace_back(SpanEdit{SpanType::Redundant, i, j, {}, {}});
        open->src_chars.push_back(op.src_char);
        ++i;
        break;
      case EditKind::Transpose:
        if (op.src_char == op.tgt_char) throw ContractError("Transpose op of equal characters");
        if (!open) open = &spans.emplace_back(SpanEdit{SpanType::Ordering, i, j, {}, {}});
        open->src_chars.push_back(op.src_char);
        open->src_chars.push_back(op.tgt_char);
        open->tgt_chars.push_back(op.tgt_char);
        open->tgt_chars.push_back(op.src_char);
        i += 2, j += 2;
        break;
    }
    prev = &op;
  }
  return spans;
}

inline std::vector<SpanEdit> align_pair(std::u32string_view src, std::u32string_view tgt) {
  return merge_edits(align_chars(src, tgt));
}

inline std::vector<SpanEdit> align_pair(const Sentence& src, const Sentence& tgt) {
  return align_pair(src.chars(), tgt.chars());
}

/// Applies span edits (sorted by src_start, non-overlapping) to `src`.
/// Each span's src_chars must match the source text it covers.
inline std::u32string apply_edits(std::u32string_view src, const std::vector<SpanEdit>& spans) {
  std::u32string out;
  out.reserve(src.size() + 8);
  std::size_t cursor = 0;
  for (const SpanEdit& s : spans) {
    if (s.src_start < cursor || s.src_start + s.src_chars.size() > src.size()) {
      throw ContractError("span edits overlap or run past the source");
    }
    if (src.substr(s.src_start, s.src_chars.size()) != s.src_chars) {
      throw ContractError("span edit does not match the source text");
    }
    out.append(src.substr(cursor, s.src_start - cursor));
    out.append(s.tgt_chars);
    cursor = s.src_start + s.src_chars.size();
  }
  out.append(src.substr(cursor));
  return out;
}

}  // namespace zhprobe
