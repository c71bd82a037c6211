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

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "support/oracles.hpp"
#include "zhprobe/aligner.hpp"

namespace zhprobe {
namespace {

using testing::min_script_costs;
using testing::SmallStrings;

std::vector<EditKind> kinds(const std::vector<EditOp>& ops) {
  std::vector<EditKind> out;
  for (const auto& op : ops) out.push_back(op.kind);
  return out;
}

TEST(AlignChars, IdenticalStringsAreAllMatches) {
  const auto ops = align_chars(std::u32string_view(U"天气好"), U"天气好");
  EXPECT_EQ(kinds(ops), (std::vector<EditKind>{EditKind::Match, EditKind::Match, EditKind::Match}));
}

TEST(AlignChars, MissingCharacterIsOneInsertAtGapFive) {
  const auto ops = align_chars(std::u32string_view(U"人类是最重的因素"), U"人类是最重要的因素");
  ASSERT_EQ(ops.size(), 9u);
  std::size_t inserts = 0;
  for (const auto& op : ops) {
    if (op.kind == EditKind::Insert) {
      ++inserts;
      EXPECT_EQ(op.src_pos, 5u);
      EXPECT_EQ(op.tgt_char, U'要');
    } else {
      EXPECT_EQ(op.kind, EditKind::Match);
    }
  }
  EXPECT_EQ(inserts, 1u);
}

TEST(AlignChars, AdjacentSwapIsOneTranspose) {
  const std::u32string src = U"我饭吃了";
  const std::u32string tgt = U"我吃饭了";
  const auto ops = align_chars(src, tgt);
  EXPECT_EQ(kinds(ops), (std::vector<EditKind>{EditKind::Match, EditKind::Transpose, EditKind::Match}));
  EXPECT_EQ(ops[1].src_pos, 1u);
  EXPECT_EQ(ops[1].tgt_pos, 1u);

  // The exhaustive script search agrees that one edit is the minimum.
  const SmallStrings space(U"我饭吃了", 6);
  EXPECT_EQ(min_script_costs(space, src)[space.encode(tgt)], 1u);
  EXPECT_EQ(script_cost(ops), 1u);
}

TEST(AlignChars, EmptyInputIsAContractError) {
  EXPECT_THROW(align_chars(std::u32string_view(U""), U"a"), ContractError);
  EXPECT_THROW(align_chars(std::u32string_view(U"a"), U""), ContractError);
}

TEST(MergeEdits, SingleSubstitutionBecomesReplacement) {
  std::vector<EditOp> ops;
  const std::u32string src = U"这些都是我的主意";
  const std::u32string tgt = U"这些都是我的注意";
  for (std::size_t i = 0; i < 6; ++i) ops.push_back({EditKind::Match, i, i, src[i], tgt[i]});
  ops.push_back({EditKind::Substitute, 6, 6, U'主', U'注'});
  ops.push_back({EditKind::Match, 7, 7, U'意', U'意'});
  const auto spans = merge_edits(ops);
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_EQ(spans[0].type, SpanType::Replacement);
  EXPECT_EQ(spans[0].src_start, 6u);
  EXPECT_EQ(spans[0].length(), 1u);
  EXPECT_EQ(spans[0].src_chars, U"主");
  EXPECT_EQ(spans[0].tgt_chars, U"注");
  EXPECT_EQ(align_pair(src, tgt), spans);
}

TEST(MergeEdits, SubstitutionRunIsOneSpan) {
  std::vector<EditOp> ops = {{EditKind::Match, 0, 0, U'a', U'a'}, {EditKind::Match, 1, 1, U'b', U'b'},
                             {EditKind::Match, 2, 2, U'c', U'c'}, {EditKind::Substitute, 3, 3, U'x', U'p'},
                             {EditKind::Substitute, 4, 4, U'y', U'q'}};
  const auto spans = merge_edits(ops);
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_EQ(spans[0].type, SpanType::Replacement);
  EXPECT_EQ(spans[0].src_start, 3u);
  EXPECT_EQ(spans[0].length(), 2u);
}

TEST(MergeEdits, KindsAreNeverMerged) {
  std::vector<EditOp> ops = {{EditKind::Match, 0, 0, U'a', U'a'}, {EditKind::Match, 1, 1, U'b', U'b'},
                             {EditKind::Substitute, 2, 2, U'x', U'p'}, {EditKind::Insert, 3, 3, 0, U'q'}};
  const auto spans = merge_edits(ops);
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(spans[0].type, SpanType::Replacement);
  EXPECT_EQ(spans[0].length(), 1u);
  EXPECT_EQ(spans[1].type, SpanType::Insertion);
  EXPECT_EQ(spans[1].src_start, 3u);
  EXPECT_EQ(spans[1].length(), 1u);
}

TEST(MergeEdits, AdjacentTransposesFormOneOrderingSpan) {
  std::vector<EditOp> ops = {{EditKind::Transpose, 0, 0, U'a', U'b'},
                             {EditKind::Transpose, 2, 2, U'c', U'd'}};
  const auto spans = merge_edits(ops);
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_EQ(spans[0].type, SpanType::Ordering);
  EXPECT_EQ(spans[0].src_chars, U"abcd");
  EXPECT_EQ(spans[0].tgt_chars, U"badc");
}

TEST(MergeEdits, MalformedSequencesAreRejected) {
  // Gap in the replay.
  EXPECT_THROW(merge_edits({{EditKind::Match, 1, 0, U'a', U'a'}}), ContractError);
  // Match with differing characters.
  EXPECT_THROW(merge_edits({{EditKind::Match, 0, 0, U'a', U'b'}}), ContractError);
  // Substitute with equal characters.
  EXPECT_THROW(merge_edits({{EditKind::Substitute, 0, 0, U'a', U'a'}}), ContractError);
}

TEST(AlignPair, IdenticalPairHasNoEdits) {
  EXPECT_TRUE(align_pair(std::u32string_view(U"天气好"), U"天气好").empty());
}

TEST(AlignPair, MissingCharacterIsOneInsertionSpan) {
  const auto spans = align_pair(std::u32string_view(U"人类是最重的因素"), U"人类是最重要的因素");
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_EQ(spans[0].type, SpanType::Insertion);
  EXPECT_EQ(spans[0].src_start, 5u);
  EXPECT_EQ(spans[0].tgt_chars, U"要");
  EXPECT_TRUE(spans[0].src_chars.empty());
}

TEST(AlignPair, TieBreakPrefersEarlySubstitution) {
  const std::u32string src = U"ABXYC";
  const std::u32string tgt = U"ABZC";
  const SmallStrings space(U"ABXYZC", 5);
  ASSERT_EQ(min_script_costs(space, src)[space.encode(tgt)], 2u);  // oracle minimum

  const auto spans = align_pair(src, tgt);
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(spans[0], (SpanEdit{SpanType::Replacement, 2, 2, U"X", U"Z"}));
  EXPECT_EQ(spans[1], (SpanEdit{SpanType::Redundant, 3, 3, U"Y", U""}));
  EXPECT_EQ(script_cost(align_chars(src, tgt)), 2u);
}

// Optimality against the exhaustive script search, lengths up to 6 over a
// 4-character alphabet, plus replay soundness on the same pairs.
TEST(AlignPairProperty, OptimalAndSoundUpToLengthSix) {
  const SmallStrings space(U"天气好坏", 6);
  const auto strings = space.enumerate(1);
  std::mt19937_64 rng(2024);
  for (int iter = 0; iter < 400; ++iter) {
    const auto& src = strings[rng() % strings.size()];
    const auto costs = min_script_costs(space, src);
    for (int t = 0; t < 25; ++t) {
      const auto& tgt = strings[rng() % strings.size()];
      const auto ops = align_chars(src, tgt);
      ASSERT_EQ(script_cost(ops), costs[space.encode(tgt)]) << "pair " << src.size() << "/" << tgt.size();
      ASSERT_EQ(alignment_cost(src, tgt), script_cost(ops));
      ASSERT_EQ(apply_edits(src, merge_edits(ops)), tgt);
    }
  }
}

TEST(AlignPairProperty, SpansAreSortedNonOverlappingAndWellFormed) {
  const SmallStrings space(U"abcd", 6);
  const auto strings = space.enumerate(1);
  std::mt19937_64 rng(99);
  for (int iter = 0; iter < 20000; ++iter) {
    const auto& src = strings[rng() % strings.size()];
    const auto& tgt = strings[rng() % strings.size()];
    const auto spans = align_pair(src, tgt);
    std::size_t cursor = 0;
    for (const auto& s : spans) {
      ASSERT_GE(s.src_start, cursor);
      cursor = s.src_start + s.src_chars.size();
      ASSERT_GE(s.length(), 1u);
      switch (s.type) {
        case SpanType::Replacement:
          ASSERT_EQ(s.src_chars.size(), s.tgt_chars.size());
          break;
        case SpanType::Insertion:
          ASSERT_TRUE(s.src_chars.empty());
          break;
        case SpanType::Redundant:
          ASSERT_TRUE(s.tgt_chars.empty());
          break;
        case SpanType::Ordering: {
          ASSERT_GE(s.src_chars.size(), 2u);
          auto a = s.src_chars;
          auto b = s.tgt_chars;
          std::sort(a.begin(), a.end());
          std::sort(b.begin(), b.end());
          ASSERT_EQ(a, b);
          break;
        }
      }
    }
    ASSERT_EQ(align_pair(src, tgt), spans);  // deterministic
  }
}

// An insertion of (a -> b) shows up as a redundant span of (b -> a) covering
// the same characters of b.
// Tie-breaking is left-biased in both directions, so the spans themselves need
// not mirror each other; the cost and the span length totals do.
TEST(AlignPairProperty, ReversalPreservesCostAndSwapsInsertionWithRedundant) {
  const SmallStrings space(U"abcd", 6);
  const auto strings = space.enumerate(1);
  std::mt19937_64 rng(5);
  auto total = [](const std::vector<SpanEdit>& spans, SpanType t) {
    std::size_t n = 0;
    for (const auto& s : spans) {
      if (s.type == t) n += s.length();
    }
    return n;
  };
  for (int iter = 0; iter < 20000; ++iter) {
    const auto& a = strings[rng() % strings.size()];
    const auto& b = strings[rng() % strings.size()];
    ASSERT_EQ(alignment_cost(a, b), alignment_cost(b, a));
    const auto forward = align_pair(a, b);
    const auto backward = align_pair(b, a);
    ASSERT_EQ(apply_edits(a, forward), b);
    ASSERT_EQ(apply_edits(b, backward), a);
    const auto net = static_cast<long>(b.size()) - static_cast<long>(a.size());
    ASSERT_EQ(static_cast<long>(total(forward, SpanType::Insertion)) -
                  static_cast<long>(total(forward, SpanType::Redundant)),
              net);
    ASSERT_EQ(static_cast<long>(total(backward, SpanType::Insertion)) -
                  static_cast<long>(total(backward, SpanType::Redundant)),
              -net);
  }
}

}  // namespace
}  // namespace zhprobe
