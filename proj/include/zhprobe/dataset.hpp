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

// Probing dataset construction from erroneous/corrected sentence pairs.
//
// Input is a three-column TSV (id, erroneous, corrected). Every pair is
// aligned; each Insertion and Replacement span becomes one ProbingInstance,
// while Redundant and Ordering spans are counted as rejects.

#pragma once

#include <array>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "zhprobe/aligner.hpp"
#include "zhprobe/error.hpp"
#include "zhprobe/text.hpp"

namespace zhprobe {

struct SentencePair {
  std::string id;
  Sentence erroneous;
  Sentence corrected;
};

enum class Task { Replacement, Insertion };

inline constexpr std::array<Task, 2> kAllTasks = {Task::Replacement, Task::Insertion};

inline std::size_t task_index(Task t) noexcept { return static_cast<std::size_t>(t); }

inline std::string_view task_name(Task t) noexcept {
  return t == Task::Replacement ? "replacement" : "insertion";
}

inline Task parse_task(std::string_view s) {
  if (s == "replacement") return Task::Replacement;
  if (s == "insertion") return Task::Insertion;
  throw FormatError("unknown task '" + std::string(s) + "'");
}

/// One evaluable unit. `position` is a character index for Replacement and a
/// gap index for Insertion; `gold` holds the k characters to predict.
struct ProbingInstance {
  std::string id;
  std::string pair_id;
  Sentence sentence;
  Task task;
  std::size_t position;
  std::u32string gold;

  std::size_t k() const noexcept { return gold.size(); }
  LengthBucket bucket() const { return bucket_of(gold.size()); }
};

inline void validate_instance(const ProbingInstance& inst) {
  const std::size_t n = inst.sentence.size();
  if (inst.gold.empty()) throw ContractError(inst.id + ": empty gold span");
  if (inst.task == Task::Replacement) {
    if (inst.position + inst.k() > n) throw ContractError(inst.id + ": replacement span out of range");
    if (inst.sentence.chars().compare(inst.position, inst.k(), inst.gold) == 0) {
      throw ContractError(inst.id + ": replacement gold equals the source span");
    }
  } else if (inst.position > n) {
    throw ContractError(inst.id + ": insertion gap out of range");
  }
}

/// The sentence with the gold span put in place.
inline std::u32string replay_instance(const ProbingInstance& inst) {
  std::u32string out = inst.sentence.chars();
  if (inst.task == Task::Replacement) {
    out.replace(inst.position, inst.k(), inst.gold);
  } else {
    out.insert(inst.position, inst.gold);
  }
  return out;
}

// ---------------------------------------------------------------------------
// TSV ingestion

struct RejectedRecord {
  std::size_t line;
  std::string pair_id;
  std::string reason;
};

struct ParsedPairs {
  std::vector<SentencePair> pairs;
  std::vector<RejectedRecord> rejects;
};

/// Parses `id \t erroneous \t corrected` records. Blank lines are ignored;
/// malformed records are skipped and listed in `rejects`.
inline ParsedPairs parse_pairs(std::istream& in) {
  ParsedPairs out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> cols;
    std::string_view rest(line);
    for (;;) {
      auto tab = rest.find('\t');
      cols.push_back(rest.substr(0, tab));
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    std::string id = cols.empty() ? std::string{} : std::string(cols[0]);
    if (cols.size() != 3) {
      out.rejects.push_back({lineno, id, "expected 3 columns, got " + std::to_string(cols.size())});
      continue;
    }
    try {
      out.pairs.push_back(
          {id, decode_sentence(cols[1], id + "/err"), decode_sentence(cols[2], id + "/cor")});
    } catch (const EmptySentenceError&) {
      out.rejects.push_back({lineno, id, "empty sentence field"});
    } catch (const DecodeError& e) {
      out.rejects.push_back({lineno, id, e.what()});
    }
  }
  return out;
}

/// Like parse_pairs but throws RecordError on the first malformed record.
inline std::vector<SentencePair> parse_pairs_strict(std::istream& in) {
  auto parsed = parse_pairs(in);
  if (!parsed.rejects.empty()) {
    const auto& r = parsed.rejects.front();
    throw RecordError(r.line, r.reason);
  }
  return std::move(parsed.pairs);
}

// ---------------------------------------------------------------------------
// Statistics

/// Span, character and sentence counts per task and bucket. Merging is
/// commutative and associative, so sharded aggregation is order-free.
class DatasetStats {
 public:
  void add(const ProbingInstance& inst) {
    auto& t = tasks_[task_index(inst.task)];
    t.spans[bucket_index(inst.bucket())] += 1;
    t.chars += inst.k();
    t.sentences.insert(inst.pair_id);
  }

  void merge(const DatasetStats& other) {
    for (std::size_t ti = 0; ti < tasks_.size(); ++ti) {
      for (std::size_t b = 0; b < 3; ++b) tasks_[ti].spans[b] += other.tasks_[ti].spans[b];
      tasks_[ti].chars += other.tasks_[ti].chars;
      tasks_[ti].sentences.insert(other.tasks_[ti].sentences.begin(),
                                  other.tasks_[ti].sentences.end());
    }
  }

  std::size_t spans(Task t, LengthBucket b) const {
    return tasks_[task_index(t)].spans[bucket_index(b)];
  }
  std::size_t spans(Task t) const {
    const auto& s = tasks_[task_index(t)].spans;
    return s[0] + s[1] + s[2];
  }
  std::size_t chars(Task t) const { return tasks_[task_index(t)].chars; }
  std::size_t sentences(Task t) const { return tasks_[task_index(t)].sentences.size(); }

  std::size_t total_spans(LengthBucket b) const {
    return spans(Task::Replacement, b) + spans(Task::Insertion, b);
  }
  std::size_t total_spans() const { return spans(Task::Replacement) + spans(Task::Insertion); }
  std::size_t total_chars() const { return chars(Task::Replacement) + chars(Task::Insertion); }

  /// Distinct sentences contributing at least one instance of either task.
  std::size_t total_sentences() const {
    std::set<std::string> all = tasks_[0].sentences;
    all.insert(tasks_[1].sentences.begin(), tasks_[1].sentences.end());
    return all.size();
  }

  friend bool operator==(const DatasetStats&, const DatasetStats&) = default;

 private:
  struct PerTask {
    std::array<std::size_t, 3> spans{};
    std::size_t chars = 0;
    std::set<std::string> sentences;
    friend bool operator==(const PerTask&, const PerTask&) = default;
  };
  std::array<PerTask, 2> tasks_{};
};

template <typename Range>
DatasetStats compute_stats(const Range& instances) {
  DatasetStats stats;
  for (const ProbingInstance& inst : instances) stats.add(inst);
  return stats;
}

/// Statistics table with Replacement, Insertion and Total columns.
inline void write_stats_tsv(std::ostream& out, const DatasetStats& s) {
  using T = Task;
  using B = LengthBucket;
  out << "\tReplacement\tInsertion\tTotal\n";
  const std::array<std::pair<const char*, B>, 3> rows = {
      std::pair{"Length = 1", B::One}, {"Length = 2", B::Two}, {"Length >= 3", B::ThreeOrMore}};
  for (const auto& [label, b] : rows) {
    out << label << '\t' << s.spans(T::Replacement, b) << '\t' << s.spans(T::Insertion, b) << '\t'
        << s.total_spans(b) << '\n';
  }
  out << "No. sentences\t" << s.sentences(T::Replacement) << '\t' << s.sentences(T::Insertion)
      << '\t' << s.total_sentences() << '\n';
  out << "No. spans\t" << s.spans(T::Replacement) << '\t' << s.spans(T::Insertion) << '\t'
      << s.total_spans() << '\n';
  out << "No. chars\t" << s.chars(T::Replacement) << '\t' << s.chars(T::Insertion) << '\t'
      << s.total_chars() << '\n';
}

// ---------------------------------------------------------------------------
// Building

struct BuildOptions {
  /// Apply every other edit of the pair to the probing sentence, so that
  /// the only remaining error is the probed one. Off by default: the
  /// erroneous sentence is kept verbatim.
  bool apply_other_edits = false;
};

/// Per-pair reject counts keyed by (pair id, reason). Reasons are the span
/// type names "redundant" and "ordering", plus "degenerate" and
/// "alignment-error".
class RejectsReport {
 public:
  void add(const std::string& pair_id, std::string_view reason, std::size_t count = 1) {
    counts_[{pair_id, std::string(reason)}] += count;
  }

  std::size_t count(std::string_view reason) const {
    std::size_t n = 0;
    for (const auto& [key, c] : counts_) {
      if (key.second == reason) n += c;
    }
    return n;
  }

  const std::map<std::pair<std::string, std::string>, std::size_t>& entries() const noexcept {
    return counts_;
  }

  void write_tsv(std::ostream& out) const {
    out << "pair_id\ttype\tcount\n";
    for (const auto& [key, c] : counts_) out << key.first << '\t' << key.second << '\t' << c << '\n';
  }

 private:
  std::map<std::pair<std::string, std::string>, std::size_t> counts_;
};

struct BuildResult {
  std::vector<ProbingInstance> instances;
  DatasetStats stats;
  RejectsReport rejects;
  std::size_t spans_found = 0;
  std::vector<std::pair<std::string, std::string>> errors;  // (pair id, message)
};

inline void build_pair(const SentencePair& pair, const BuildOptions& opts, BuildResult& out) {
  const std::u32string& src = pair.erroneous.chars();
  const std::u32string& tgt = pair.corrected.chars();
  const std::vector<SpanEdit> spans = align_pair(src, tgt);
  out.spans_found += spans.size();

  // Net length change contributed by spans before the current one, used to
  // shift positions when the other edits are applied.
  std::ptrdiff_t shift = 0;
  for (std::size_t si = 0; si < spans.size(); ++si) {
    const SpanEdit& span = spans[si];
    const std::ptrdiff_t delta = static_cast<std::ptrdiff_t>(span.tgt_chars.size()) -
                                 static_cast<std::ptrdiff_t>(span.src_chars.size());
    const auto advance = [&] { shift += delta; };

    if (span.type == SpanType::Redundant || span.type == SpanType::Ordering) {
      out.rejects.add(pair.id, span_type_name(span.type));
      advance();
      continue;
    }
    if (span.type == SpanType::Replacement && span.src_chars == span.tgt_chars) {
      out.rejects.add(pair.id, "degenerate");
      advance();
      continue;
    }

    const Task task = span.type == SpanType::Replacement ? Task::Replacement : Task::Insertion;
    std::u32string text = src;
    std::size_t position = span.src_start;
    if (opts.apply_other_edits) {
      std::vector<SpanEdit> others;
      for (std::size_t oj = 0; oj < spans.size(); ++oj) {
        if (oj != si) others.push_back(spans[oj]);
      }
      text = apply_edits(src, others);
      position = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(span.src_start) + shift);
    }
    ProbingInstance inst{pair.id + "#" + std::to_string(si),
                         pair.id,
                         Sentence(std::move(text), pair.erroneous.id()),
                         task,
                         position,
                         span.tgt_chars};
    validate_instance(inst);

    // The gold span must be exactly what the corrected sentence holds there;
    // with all other edits applied the replay must reproduce it entirely.
    if (tgt.compare(span.tgt_start, span.tgt_chars.size(), inst.gold) != 0) {
      throw ContractError(inst.id + ": gold span not found in the corrected sentence");
    }
    if (opts.apply_other_edits && replay_instance(inst) != tgt) {
      throw ContractError(inst.id + ": replay does not reproduce the corrected sentence");
    }
    out.stats.add(inst);
    out.instances.push_back(std::move(inst));
    advance();
  }
}

inline BuildResult build_instances(const std::vector<SentencePair>& pairs,
                                   const BuildOptions& opts = {}) {
  BuildResult out;
  for (const SentencePair& pair : pairs) {
    try {
      build_pair(pair, opts, out);
    } catch (const Error& e) {
      out.rejects.add(pair.id, "alignment-error");
      out.errors.emplace_back(pair.id, e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON lines

inline nlohmann::ordered_json instance_to_json(const ProbingInstance& inst) {
  return nlohmann::ordered_json{{"id", inst.id},
                                {"sentence", inst.sentence.utf8()},
                                {"task", task_name(inst.task)},
                                {"position", inst.position},
                                {"k", inst.k()},
                                {"gold", to_utf8(inst.gold)},
                                {"pair_id", inst.pair_id}};
}

inline ProbingInstance instance_from_json(const nlohmann::json& j) {
  try {
    const std::string id = j.at("id").get<std::string>();
    std::string pair_id = j.contains("pair_id") ? j["pair_id"].get<std::string>() : id;
    if (!j.contains("pair_id")) {
      if (auto hash = pair_id.rfind('#'); hash != std::string::npos) pair_id.resize(hash);
    }
    ProbingInstance inst{id,
                         pair_id,
                         decode_sentence(j.at("sentence").get<std::string>(), id),
                         parse_task(j.at("task").get<std::string>()),
                         j.at("position").get<std::size_t>(),
                         decode_utf8(j.at("gold").get<std::string>())};
    if (j.at("k").get<std::size_t>() != inst.k()) throw FormatError(id + ": k disagrees with gold");
    validate_instance(inst);
    return inst;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad instance record: ") + e.what());
  }
}

inline void write_instances(std::ostream& out, const std::vector<ProbingInstance>& instances) {
  for (const auto& inst : instances) out << instance_to_json(inst).dump() << '\n';
}

inline std::vector<ProbingInstance> read_instances(std::istream& in) {
  std::vector<ProbingInstance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(instance_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw RecordError(lineno, e.what());
    } catch (const Error& e) {
      throw RecordError(lineno, e.what());
    }
  }
  return out;
}

}  // namespace zhprobe
