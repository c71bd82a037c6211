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
#include <sstream>
#include <string>
#include <vector>

#include "support/synthetic.hpp"
#include "zhprobe/dataset.hpp"

namespace zhprobe {
namespace {

SentencePair make_pair(const std::string& id, std::string_view err, std::string_view cor) {
  return {id, decode_sentence(err, id), decode_sentence(cor, id)};
}

TEST(ParsePairs, ReadsOneRecord) {
  std::istringstream in("p1\t人类是最重的因素\t人类是最重要的因素\n");
  const auto parsed = parse_pairs(in);
  ASSERT_EQ(parsed.pairs.size(), 1u);
  EXPECT_TRUE(parsed.rejects.empty());
  EXPECT_EQ(parsed.pairs[0].id, "p1");
  EXPECT_EQ(parsed.pairs[0].erroneous.size(), 8u);
  EXPECT_EQ(parsed.pairs[0].corrected.size(), 9u);
}

TEST(ParsePairs, EmptyStreamGivesNothing) {
  std::istringstream in("");
  const auto parsed = parse_pairs(in);
  EXPECT_TRUE(parsed.pairs.empty());
  EXPECT_TRUE(parsed.rejects.empty());
}

TEST(ParsePairs, BlankLinesAndCarriageReturnsAreTolerated) {
  std::istringstream in("\np1\t甲乙\t甲丙\r\n\n");
  const auto parsed = parse_pairs(in);
  ASSERT_EQ(parsed.pairs.size(), 1u);
  EXPECT_EQ(parsed.pairs[0].corrected.utf8(), "甲丙");
}

TEST(ParsePairs, WrongColumnCountIsRejectedWithLine) {
  std::istringstream in("p2\tonly-two-fields\n");
  const auto parsed = parse_pairs(in);
  EXPECT_TRUE(parsed.pairs.empty());
  ASSERT_EQ(parsed.rejects.size(), 1u);
  EXPECT_EQ(parsed.rejects[0].line, 1u);
  EXPECT_EQ(parsed.rejects[0].pair_id, "p2");

  std::istringstream strict("p2\tonly-two-fields\n");
  try {
    parse_pairs_strict(strict);
    FAIL() << "expected RecordError";
  } catch (const RecordError& e) {
    EXPECT_EQ(e.line(), 1u);
  }
}

TEST(ParsePairs, EmptyFieldAndBadUtf8AreRejected) {
  std::istringstream in("a\t\t甲\nb\t\xFF\t甲\nc\t甲\t乙\n");
  const auto parsed = parse_pairs(in);
  ASSERT_EQ(parsed.pairs.size(), 1u);
  EXPECT_EQ(parsed.pairs[0].id, "c");
  ASSERT_EQ(parsed.rejects.size(), 2u);
  EXPECT_EQ(parsed.rejects[0].line, 1u);
  EXPECT_EQ(parsed.rejects[1].line, 2u);
}

TEST(BuildInstances, MissingCharacterBecomesInsertion) {
  const auto r = build_instances({make_pair("p1", "人类是最重的因素", "人类是最重要的因素")});
  ASSERT_EQ(r.instances.size(), 1u);
  const auto& inst = r.instances[0];
  EXPECT_EQ(inst.id, "p1#0");
  EXPECT_EQ(inst.pair_id, "p1");
  EXPECT_EQ(inst.task, Task::Insertion);
  EXPECT_EQ(inst.position, 5u);
  EXPECT_EQ(inst.gold, U"要");
  EXPECT_EQ(inst.bucket(), LengthBucket::One);
  EXPECT_EQ(replay_instance(inst), U"人类是最重要的因素");
}

TEST(BuildInstances, WrongCharacterBecomesReplacement) {
  const auto r = build_instances({make_pair("p", "这些都是我的主意", "这些都是我的注意")});
  ASSERT_EQ(r.instances.size(), 1u);
  EXPECT_EQ(r.instances[0].task, Task::Replacement);
  EXPECT_EQ(r.instances[0].position, 6u);
  EXPECT_EQ(r.instances[0].gold, U"注");
}

TEST(BuildInstances, TransposeOnlyPairYieldsNoInstances) {
  const auto r = build_instances({make_pair("t", "我饭吃了", "我吃饭了")});
  EXPECT_TRUE(r.instances.empty());
  EXPECT_EQ(r.rejects.count("ordering"), 1u);
  EXPECT_EQ(r.spans_found, 1u);
}

TEST(BuildInstances, RedundantSpanIsRejected) {
  const auto r = build_instances({make_pair("r", "我我们走", "我们走")});
  EXPECT_TRUE(r.instances.empty());
  EXPECT_EQ(r.rejects.count("redundant"), 1u);
  std::ostringstream out;
  r.rejects.write_tsv(out);
  EXPECT_EQ(out.str(), "pair_id\ttype\tcount\nr\tredundant\t1\n");
}

TEST(BuildInstances, IdenticalPairYieldsNothing) {
  const auto r = build_instances({make_pair("same", "你好", "你好")});
  EXPECT_TRUE(r.instances.empty());
  EXPECT_EQ(r.spans_found, 0u);
}

TEST(BuildInstances, VerbatimModeKeepsOtherErrors) {
  // Two independent errors: a wrong character and a missing one.
  const auto pair = make_pair("m", "甲乙丙丁戊己", "甲X丙丁戊Y己");
  const auto verbatim = build_instances({pair});
  ASSERT_EQ(verbatim.instances.size(), 2u);
  for (const auto& inst : verbatim.instances) EXPECT_EQ(inst.sentence.chars(), pair.erroneous.chars());

  const auto applied = build_instances({pair}, BuildOptions{true});
  ASSERT_EQ(applied.instances.size(), 2u);
  for (const auto& inst : applied.instances) {
    EXPECT_EQ(replay_instance(inst), pair.corrected.chars()) << inst.id;
  }
  EXPECT_EQ(applied.instances[0].sentence.utf8(), "甲乙丙丁戊Y己");
  EXPECT_EQ(applied.instances[1].sentence.utf8(), "甲X丙丁戊己");
  EXPECT_EQ(applied.instances[1].position, 5u);
}

TEST(BuildInstances, ApplyOtherEditsReplaysSyntheticPairs) {
  const auto pairs = testing::synthetic_pairs(500, 3);
  const auto r = build_instances(pairs, BuildOptions{true});
  EXPECT_TRUE(r.errors.empty());
  std::size_t by_pair = 0;
  for (const auto& inst : r.instances) {
    const auto& pair = pairs[std::stoul(inst.pair_id.substr(1))];
    ASSERT_EQ(replay_instance(inst), pair.corrected.chars()) << inst.id;
    ++by_pair;
  }
  EXPECT_EQ(by_pair, r.instances.size());
}

TEST(DatasetStats, BucketsPartitionTheSpans) {
  const auto r = build_instances(testing::synthetic_pairs(2000, 11));
  const auto& s = r.stats;
  for (Task t : kAllTasks) {
    std::size_t sum = 0;
    for (LengthBucket b : kAllBuckets) sum += s.spans(t, b);
    EXPECT_EQ(sum, s.spans(t));
    // A span of length k contributes k characters, and every bucket beyond the
    // first has length at least 2 or 3.
    EXPECT_GE(s.chars(t), s.spans(t, LengthBucket::One) + 2 * s.spans(t, LengthBucket::Two) +
                              3 * s.spans(t, LengthBucket::ThreeOrMore));
  }
  EXPECT_EQ(s.total_spans(), r.instances.size());
  std::size_t chars = 0;
  for (const auto& inst : r.instances) chars += inst.k();
  EXPECT_EQ(s.total_chars(), chars);
  EXPECT_LE(s.total_sentences(), s.sentences(Task::Replacement) + s.sentences(Task::Insertion));
  EXPECT_GE(s.total_sentences(),
            std::max(s.sentences(Task::Replacement), s.sentences(Task::Insertion)));
}

TEST(DatasetStats, PermutationInvariantAndMergeable) {
  auto instances = build_instances(testing::synthetic_pairs(800, 4)).instances;
  const auto whole = compute_stats(instances);
  std::mt19937_64 rng(9);
  std::shuffle(instances.begin(), instances.end(), rng);
  EXPECT_EQ(compute_stats(instances), whole);

  const std::size_t cut = instances.size() / 3;
  const auto a = compute_stats(std::vector(instances.begin(), instances.begin() + cut));
  const auto b = compute_stats(std::vector(instances.begin() + cut, instances.end()));
  DatasetStats ab = a;
  ab.merge(b);
  DatasetStats ba = b;
  ba.merge(a);
  EXPECT_EQ(ab, whole);
  EXPECT_EQ(ba, whole);
}

TEST(DatasetStats, TsvLayout) {
  const auto r = build_instances({make_pair("p1", "人类是最重的因素", "人类是最重要的因素"),
                                  make_pair("p2", "这些都是我的主意", "这些都是我的注意")});
  std::ostringstream out;
  write_stats_tsv(out, r.stats);
  EXPECT_EQ(out.str(),
            "\tReplacement\tInsertion\tTotal\n"
            "Length = 1\t1\t1\t2\n"
            "Length = 2\t0\t0\t0\n"
            "Length >= 3\t0\t0\t0\n"
            "No. sentences\t1\t1\t2\n"
            "No. spans\t1\t1\t2\n"
            "No. chars\t1\t1\t2\n");
}

TEST(InstanceJson, RoundTrip) {
  const auto r = build_instances(testing::synthetic_pairs(200, 8));
  std::stringstream io;
  write_instances(io, r.instances);
  const auto back = read_instances(io);
  ASSERT_EQ(back.size(), r.instances.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].id, r.instances[i].id);
    EXPECT_EQ(back[i].pair_id, r.instances[i].pair_id);
    EXPECT_EQ(back[i].sentence.chars(), r.instances[i].sentence.chars());
    EXPECT_EQ(back[i].task, r.instances[i].task);
    EXPECT_EQ(back[i].position, r.instances[i].position);
    EXPECT_EQ(back[i].gold, r.instances[i].gold);
  }
}

TEST(InstanceJson, PairIdDefaultsToIdPrefix) {
  const auto inst = instance_from_json(nlohmann::json::parse(
      R"({"id":"x7#2","sentence":"甲乙","task":"insertion","position":1,"k":1,"gold":"丙"})"));
  EXPECT_EQ(inst.pair_id, "x7");
}

TEST(InstanceJson, BadRecordsReportTheLine) {
  std::istringstream in(
      "{\"id\":\"a\",\"sentence\":\"甲\",\"task\":\"insertion\",\"position\":0,\"k\":1,\"gold\":\"乙\"}\n"
      "{\"id\":\"b\",\"sentence\":\"甲\",\"task\":\"insertion\",\"position\":5,\"k\":1,\"gold\":\"乙\"}\n");
  try {
    read_instances(in);
    FAIL() << "expected RecordError";
  } catch (const RecordError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(InstanceValidation, ReplacementGoldMustDiffer) {
  ProbingInstance inst{"i", "p", decode_sentence("甲乙"), Task::Replacement, 0, U"甲"};
  EXPECT_THROW(validate_instance(inst), ContractError);
  inst.gold = U"丙";
  EXPECT_NO_THROW(validate_instance(inst));
  inst.position = 2;
  EXPECT_THROW(validate_instance(inst), ContractError);
}

}  // namespace
}  // namespace zhprobe
