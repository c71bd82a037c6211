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

// Probing: instances become masked queries, responses become per-position
// hit records, and records aggregate into P@1 / P@10 tables per task and
// span-length bucket.
//
// Counts are kept as exact integers; percentages and the one-decimal
// half-up rounding only appear at presentation time.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "zhprobe/dataset.hpp"
#include "zhprobe/error.hpp"
#include "zhprobe/protocol.hpp"
#include "zhprobe/text.hpp"

namespace zhprobe {

// ---------------------------------------------------------------------------
// Queries

/// Masks the instance's span: Replacement overwrites the k characters with
/// MASK, Insertion inserts k MASKs at the gap. The sequence is framed with
/// CLS/SEP, so masked positions are offset by one. Returns nullopt when the
/// framed sequence exceeds max_seq_len. Characters missing from `vocab`
/// (when given) are sent as UNK.
inline std::optional<ProbeQuery> build_query(const ProbingInstance& inst, std::size_t top_k,
                                             std::size_t max_seq_len = 512,
                                             const Vocab* vocab = nullptr) {
  if (top_k == 0) throw ContractError("top-k must be positive");
  validate_instance(inst);
  const auto& chars = inst.sentence.chars();
  const std::size_t k = inst.k();
  const std::size_t body = inst.task == Task::Replacement ? chars.size() : chars.size() + k;
  if (body + 2 > max_seq_len) return std::nullopt;

  ProbeQuery q;
  q.id = inst.id;
  q.k = top_k;
  q.tokens.reserve(body + 2);
  q.tokens.emplace_back(Vocab::kCls);
  auto push_char = [&](char32_t c) {
    if (vocab && !vocab->contains(c)) {
      q.tokens.emplace_back(Vocab::kUnk);
    } else {
      q.tokens.push_back(to_utf8(c));
    }
  };
  for (std::size_t i = 0; i <= chars.size(); ++i) {
    if (i == inst.position) {
      for (std::size_t m = 0; m < k; ++m) {
        q.masked_positions.push_back(q.tokens.size());
        q.tokens.emplace_back(Vocab::kMask);
      }
      if (inst.task == Task::Replacement) i += k;
    }
    if (i < chars.size()) push_char(chars[i]);
  }
  q.tokens.emplace_back(Vocab::kSep);
  return q;
}

// ---------------------------------------------------------------------------
// Scoring

struct HitRecord {
  std::string instance_id;
  Task task;
  LengthBucket bucket;
  std::size_t ordinal;              // position within the span
  bool hit1 = false;
  bool hit10 = false;
  std::optional<std::size_t> rank;  // 1-based rank of gold among the returned candidates

  friend bool operator==(const HitRecord&, const HitRecord&) = default;
};

/// One record per span position; hit@j holds when the gold character is
/// among the first j candidates for that position.
inline std::vector<HitRecord> score(const ProbingInstance& inst, const ProbeResponse& resp) {
  if (resp.predictions.size() != inst.k()) {
    throw ProtocolError(inst.id, "response covers " + std::to_string(resp.predictions.size()) +
                                     " positions, span has " + std::to_string(inst.k()));
  }
  std::vector<HitRecord> out;
  out.reserve(inst.k());
  for (std::size_t i = 0; i < inst.k(); ++i) {
    HitRecord rec{inst.id, inst.task, inst.bucket(), i, false, false, std::nullopt};
    const std::string gold = to_utf8(inst.gold[i]);
    const auto& list = resp.predictions[i];
    for (std::size_t r = 0; r < list.size(); ++r) {
      if (list[r].token == gold) {
        rec.rank = r + 1;
        break;
      }
    }
    rec.hit1 = rec.rank && *rec.rank <= 1;
    rec.hit10 = rec.rank && *rec.rank <= 10;
    out.push_back(std::move(rec));
  }
  return out;
}

inline nlohmann::ordered_json record_to_json(const HitRecord& r) {
  nlohmann::ordered_json j{{"id", r.instance_id},
                           {"task", task_name(r.task)},
                           {"bucket", bucket_label(r.bucket)},
                           {"ordinal", r.ordinal},
                           {"hit1", r.hit1},
                           {"hit10", r.hit10}};
  j["rank"] = r.rank ? nlohmann::ordered_json(*r.rank) : nlohmann::ordered_json(nullptr);
  return j;
}

inline HitRecord record_from_json(const nlohmann::json& j) {
  try {
    HitRecord r{j.at("id").get<std::string>(),
                parse_task(j.at("task").get<std::string>()),
                parse_bucket(j.at("bucket").get<std::string>()),
                j.at("ordinal").get<std::size_t>(),
                j.at("hit1").get<bool>(),
                j.at("hit10").get<bool>(),
                std::nullopt};
    if (j.contains("rank") && !j["rank"].is_null()) r.rank = j["rank"].get<std::size_t>();
    if (r.hit1 && !r.hit10) throw FormatError(r.instance_id + ": hit@1 without hit@10");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad hit record: ") + e.what());
  }
}

inline std::vector<HitRecord> read_records(std::istream& in) {
  std::vector<HitRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw RecordError(lineno, e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation

/// Half-up rounding to one decimal. The epsilon keeps values such as 42.45
/// that are stored fractionally below the tie from rounding down.
inline double round_half_up_1dp(double v) { return std::floor(v * 10.0 + 0.5 + 1e-9) / 10.0; }

inline std::string format_1dp(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", round_half_up_1dp(v));
  return buf;
}

/// Unweighted mean of bucket values.
inline double macro_average(std::span<const double> values) {
  if (values.empty()) throw DomainError("macro average of no values");
  double sum = 0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

enum class Metric { P1, P10 };

inline std::string_view metric_name(Metric m) noexcept { return m == Metric::P1 ? "p@1" : "p@10"; }

enum class Granularity { PerPosition, PerSpan };

class MetricTable {
 public:
  struct Cell {
    std::size_t hits1 = 0;
    std::size_t hits10 = 0;
    std::size_t total = 0;

    friend bool operator==(const Cell&, const Cell&) = default;
  };

  void add(Task t, LengthBucket b, bool hit1, bool hit10) {
    Cell& c = cells_[task_index(t)][bucket_index(b)];
    c.hits1 += hit1 ? 1 : 0;
    c.hits10 += hit10 ? 1 : 0;
    c.total += 1;
  }

  void merge(const MetricTable& other) {
    for (std::size_t t = 0; t < 2; ++t) {
      for (std::size_t b = 0; b < 3; ++b) {
        cells_[t][b].hits1 += other.cells_[t][b].hits1;
        cells_[t][b].hits10 += other.cells_[t][b].hits10;
        cells_[t][b].total += other.cells_[t][b].total;
      }
    }
  }

  const Cell& cell(Task t, LengthBucket b) const { return cells_[task_index(t)][bucket_index(b)]; }

  /// Percentage in [0, 100], or nullopt for an empty cell.
  std::optional<double> value(Task t, LengthBucket b, Metric m) const {
    const Cell& c = cell(t, b);
    if (c.total == 0) return std::nullopt;
    const std::size_t hits = m == Metric::P1 ? c.hits1 : c.hits10;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(c.total);
  }

  /// Unweighted mean over the non-empty buckets of a task.
  std::optional<double> average(Task t, Metric m) const {
    std::vector<double> vals;
    for (auto b : kAllBuckets) {
      if (auto v = value(t, b, m)) vals.push_back(*v);
    }
    if (vals.empty()) return std::nullopt;
    return macro_average(vals);
  }

  bool empty() const {
    for (const auto& row : cells_) {
      for (const auto& c : row) {
        if (c.total) return false;
      }
    }
    return true;
  }

  friend bool operator==(const MetricTable&, const MetricTable&) = default;

 private:
  std::array<std::array<Cell, 3>, 2> cells_{};
};

inline MetricTable aggregate(std::span<const HitRecord> records,
                             Granularity granularity = Granularity::PerPosition) {
  MetricTable table;
  if (granularity == Granularity::PerPosition) {
    for (const auto& r : records) table.add(r.task, r.bucket, r.hit1, r.hit10);
    return table;
  }
  struct SpanHits {
    Task task;
    LengthBucket bucket;
    bool hit1 = true;
    bool hit10 = true;
  };
  std::map<std::string, SpanHits> spans;
  for (const auto& r : records) {
    auto [it, fresh] = spans.try_emplace(r.instance_id, SpanHits{r.task, r.bucket});
    it->second.hit1 = it->second.hit1 && r.hit1;
    it->second.hit10 = it->second.hit10 && r.hit10;
  }
  for (const auto& [id, s] : spans) table.add(s.task, s.bucket, s.hit1, s.hit10);
  return table;
}

// ---------------------------------------------------------------------------
// Running a probe

using QueryOutcome = std::variant<ProbeResponse, ProtocolError>;

/// Something that answers a batch of queries with exactly one outcome each,
/// in query order.
class QueryExecutor {
 public:
  virtual ~QueryExecutor() = default;
  virtual std::vector<QueryOutcome> exchange(const std::vector<ProbeQuery>& queries) = 0;
};

/// Runs an in-process Backend directly.
class LocalExecutor : public QueryExecutor {
 public:
  explicit LocalExecutor(const Backend& backend) : backend_(backend) {}

  std::vector<QueryOutcome> exchange(const std::vector<ProbeQuery>& queries) override {
    std::vector<QueryOutcome> out;
    out.reserve(queries.size());
    for (const auto& q : queries) {
      try {
        validate_query(q);
        ProbeResponse r = backend_.answer(q);
        validate_response(r, q);
        out.emplace_back(std::move(r));
      } catch (const ProtocolError& e) {
        out.emplace_back(e);
      } catch (const std::exception& e) {
        out.emplace_back(ProtocolError(q.id, e.what()));
      }
    }
    return out;
  }

 private:
  const Backend& backend_;
};

struct ProbeOptions {
  std::size_t top_k = 10;
  std::size_t max_seq_len = 512;
  std::size_t batch = 4096;
  const Vocab* vocab = nullptr;
  bool keep_predictions = false;
};

/// Per-position top predictions kept for inspection.
struct PredictionRecord {
  std::string instance_id;
  std::size_t ordinal;
  std::string gold;
  std::vector<Candidate> top;
};

struct ProbeRun {
  MetricTable table;
  std::vector<HitRecord> records;
  std::vector<std::pair<std::string, std::string>> skipped;  // (instance id, reason)
  std::vector<std::pair<std::string, std::string>> errors;   // (instance id, message)
  std::vector<PredictionRecord> predictions;
};

inline ProbeRun run_probe(const std::vector<ProbingInstance>& instances, QueryExecutor& executor,
                          const ProbeOptions& opts = {}) {
  ProbeRun run;
  std::vector<ProbeQuery> queries;
  std::vector<const ProbingInstance*> owners;
  auto flush = [&] {
    if (queries.empty()) return;
    auto outcomes = executor.exchange(queries);
    if (outcomes.size() != queries.size()) throw ContractError("executor returned wrong outcome count");
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const ProbingInstance& inst = *owners[i];
      if (auto* err = std::get_if<ProtocolError>(&outcomes[i])) {
        run.errors.emplace_back(inst.id, err->what());
        continue;
      }
      const auto& resp = std::get<ProbeResponse>(outcomes[i]);
      try {
        auto recs = score(inst, resp);
        for (auto& r : recs) {
          run.table.add(r.task, r.bucket, r.hit1, r.hit10);
          run.records.push_back(std::move(r));
        }
        if (opts.keep_predictions) {
          for (std::size_t p = 0; p < inst.k(); ++p) {
            run.predictions.push_back({inst.id, p, to_utf8(inst.gold[p]), resp.predictions[p]});
          }
        }
      } catch (const ProtocolError& e) {
        run.errors.emplace_back(inst.id, e.what());
      }
    }
    queries.clear();
    owners.clear();
  };
  for (const auto& inst : instances) {
    auto q = build_query(inst, opts.top_k, opts.max_seq_len, opts.vocab);
    if (!q) {
      run.skipped.emplace_back(inst.id, "framed length exceeds max_seq_len");
      continue;
    }
    queries.push_back(std::move(*q));
    owners.push_back(&inst);
    if (queries.size() >= opts.batch) flush();
  }
  flush();
  return run;
}

// ---------------------------------------------------------------------------
// Reports

namespace detail {

inline std::string cell_text(const std::optional<double>& v) { return v ? format_1dp(*v) : "-"; }

/// RFC 4180 quoting for fields holding commas, quotes or line breaks.
inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

/// Long TSV: one row per task and bucket, plus the task average.
inline void write_table_tsv(std::ostream& out, const MetricTable& t) {
  out << "task\tbucket\tp@1\tp@10\tn\n";
  for (Task task : {Task::Insertion, Task::Replacement}) {
    for (auto b : kAllBuckets) {
      out << task_name(task) << '\t' << bucket_label(b) << '\t'
          << detail::cell_text(t.value(task, b, Metric::P1)) << '\t'
          << detail::cell_text(t.value(task, b, Metric::P10)) << '\t' << t.cell(task, b).total
          << '\n';
    }
    std::size_t n = 0;
    for (auto b : kAllBuckets) n += t.cell(task, b).total;
    out << task_name(task) << "\taverage\t" << detail::cell_text(t.average(task, Metric::P1)) << '\t'
        << detail::cell_text(t.average(task, Metric::P10)) << '\t' << n << '\n';
  }
}

/// Fixed-width table in the usual layout: one block per task, one row per
/// labelled model, P@1/P@10 per length bucket and the macro average.
inline void write_table_text(std::ostream& out,
                             const std::vector<std::pair<std::string, MetricTable>>& models) {
  std::size_t label_w = 12;
  for (const auto& [label, t] : models) label_w = std::max(label_w, label.size() + 1);
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  const std::array<const char*, 4> groups = {"Length = 1", "Length = 2", "Length >= 3", "Average"};
  std::string header = pad("", label_w);
  for (const char* g : groups) header += "| " + pad(g, 14);
  out << header << '\n' << std::string(header.size(), '-') << '\n';
  for (Task task : {Task::Insertion, Task::Replacement}) {
    std::string name(task_name(task));
    name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
    std::string sub = pad(name, label_w);
    for (std::size_t g = 0; g < groups.size(); ++g) sub += "| " + pad("p@1", 7) + pad("p@10", 7);
    out << sub << '\n';
    for (const auto& [label, t] : models) {
      std::string row = pad(label, label_w);
      for (auto b : kAllBuckets) {
        row += "| " + pad(detail::cell_text(t.value(task, b, Metric::P1)), 7) +
               pad(detail::cell_text(t.value(task, b, Metric::P10)), 7);
      }
      row += "| " + pad(detail::cell_text(t.average(task, Metric::P1)), 7) +
             pad(detail::cell_text(t.average(task, Metric::P10)), 7);
      out << row << '\n';
    }
    out << std::string(header.size(), '-') << '\n';
  }
}

struct CurveRow {
  std::string label;
  Task task;
  std::string bucket;  // "1", "2", ">=3" or "average"
  Metric metric;
  double value;
};

/// Long-format series over ordered checkpoints (or datasets). Empty cells
/// are omitted. Labels must be unique.
inline std::vector<CurveRow> curve_series(
    const std::vector<std::pair<std::string, MetricTable>>& points) {
  std::vector<CurveRow> rows;
  std::vector<std::string> seen;
  for (const auto& [label, t] : points) {
    if (std::find(seen.begin(), seen.end(), label) != seen.end()) {
      throw ContractError("duplicate checkpoint label '" + label + "'");
    }
    seen.push_back(label);
    for (Task task : {Task::Insertion, Task::Replacement}) {
      for (Metric m : {Metric::P1, Metric::P10}) {
        for (auto b : kAllBuckets) {
          if (auto v = t.value(task, b, m)) {
            rows.push_back({label, task, std::string(bucket_label(b)), m, *v});
          }
        }
        if (auto v = t.average(task, m)) rows.push_back({label, task, "average", m, *v});
      }
    }
  }
  return rows;
}

struct SeriesKey {
  Task task;
  std::string bucket;
  Metric metric;

  friend auto operator<=>(const SeriesKey&, const SeriesKey&) = default;
};

/// Series whose last value is below the first, i.e. performance that
/// degrades over training.
inline std::vector<SeriesKey> degraded_series(const std::vector<CurveRow>& rows) {
  std::map<SeriesKey, std::pair<double, double>> ends;
  for (const auto& r : rows) {
    SeriesKey key{r.task, r.bucket, r.metric};
    auto [it, fresh] = ends.try_emplace(key, r.value, r.value);
    if (!fresh) it->second.second = r.value;
  }
  std::vector<SeriesKey> out;
  for (const auto& [key, fl] : ends) {
    if (fl.second < fl.first) out.push_back(key);
  }
  return out;
}

inline void write_curve_csv(std::ostream& out, const std::vector<CurveRow>& rows) {
  out << "label,task,bucket,metric,value\n";
  for (const auto& r : rows) {
    out << detail::csv_field(r.label) << ',' << task_name(r.task) << ',' << r.bucket << ','
        << metric_name(r.metric) << ',' << format_1dp(r.value) << '\n';
  }
}

}  // namespace zhprobe
