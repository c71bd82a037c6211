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
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "zhprobe/error.hpp"
#include "zhprobe/protocol.hpp"
#include "zhprobe/text.hpp"

namespace zhprobe {

/// Character n-gram model with add-one smoothing over the observed
/// vocabulary plus one unit of unknown-character mass:
///
///   P(c | ctx) = (count(ctx, c) + 1) / (count(ctx) + |V| + 1)
///
/// Contexts are the order-1 preceding characters, left-padded with a
/// boundary marker. Immutable once trained.
class NgramPredictor : public Backend {
 public:
  /// Boundary marker; outside the scalar range so it never collides with text.
  static constexpr char32_t kBoundary = 0x110000;

  static NgramPredictor train(std::istream& corpus, int order) {
    if (order != 2 && order != 3) throw ContractError("n-gram order must be 2 or 3");
    NgramPredictor p(order);
    std::string line;
    std::size_t lineno = 0;
    std::vector<char32_t> vocab;
    while (std::getline(corpus, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::u32string chars;
      try {
        chars = decode_utf8(line);
      } catch (const DecodeError& e) {
        throw RecordError(lineno, e.what());
      }
      std::u32string ctx(static_cast<std::size_t>(order - 1), kBoundary);
      for (char32_t c : chars) {
        p.observe(ctx, c, 1);
        vocab.push_back(c);
        ctx.erase(0, 1);
        ctx.push_back(c);
      }
    }
    if (vocab.empty()) throw ContractError("cannot train an n-gram model on an empty corpus");
    std::sort(vocab.begin(), vocab.end());
    vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
    p.vocab_ = std::move(vocab);
    return p;
  }

  int order() const noexcept { return order_; }
  const std::vector<char32_t>& vocabulary() const noexcept { return vocab_; }

  std::uint64_t count(std::u32string_view ctx, char32_t c) const {
    auto it = counts_.find(std::u32string(ctx));
    if (it == counts_.end()) return 0;
    auto jt = it->second.next.find(c);
    return jt == it->second.next.end() ? 0 : jt->second;
  }

  double probability(std::u32string_view ctx, char32_t c) const {
    auto it = counts_.find(std::u32string(ctx));
    const std::uint64_t total = it == counts_.end() ? 0 : it->second.total;
    return static_cast<double>(count(ctx, c) + 1) /
           static_cast<double>(total + vocab_.size() + 1);
  }

  /// Context for the token at `pos`. Out-of-range, special and multi-character
  /// tokens (including other MASKs) contribute the boundary marker.
  std::u32string context_at(const std::vector<std::string>& tokens, std::size_t pos) const {
    std::u32string ctx;
    for (std::size_t back = static_cast<std::size_t>(order_ - 1); back >= 1; --back) {
      char32_t c = kBoundary;
      if (pos >= back) {
        const std::string& tok = tokens[pos - back];
        if (!Vocab::is_special(tok)) {
          const auto cs = decode_utf8(tok);
          if (cs.size() == 1) c = cs[0];
        }
      }
      ctx.push_back(c);
    }
    return ctx;
  }

  /// Top min(k, |V|) candidates per masked position, by probability then
  /// ascending code point.
  ProbeResponse predict(const ProbeQuery& q) const {
    ProbeResponse r{q.id, {}};
    for (std::size_t pos : q.masked_positions) {
      const std::u32string ctx = context_at(q.tokens, pos);
      std::vector<std::pair<double, char32_t>> scored;
      scored.reserve(vocab_.size());
      for (char32_t c : vocab_) scored.emplace_back(probability(ctx, c), c);
      const std::size_t keep = std::min(q.k, scored.size());
      std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep),
                        scored.end(), [](const auto& a, const auto& b) {
                          return a.first != b.first ? a.first > b.first : a.second < b.second;
                        });
      auto& list = r.predictions.emplace_back();
      for (std::size_t i = 0; i < keep; ++i) list.push_back({to_utf8(scored[i].second), scored[i].first});
    }
    return r;
  }

  /// Protocol entry point; a vocabulary smaller than k cannot fill a response.
  ProbeResponse answer(const ProbeQuery& q) const override {
    if (q.k > vocab_.size()) {
      throw ProtocolError(q.id, "k exceeds the model vocabulary (" + std::to_string(vocab_.size()) + ")");
    }
    return predict(q);
  }

  void save(std::ostream& out) const {
    nlohmann::ordered_json counts = nlohmann::ordered_json::array();
    std::map<std::u32string, const Row*> sorted;
    for (const auto& [ctx, row] : counts_) sorted.emplace(ctx, &row);
    for (const auto& [ctx, row] : sorted) {
      std::map<char32_t, std::uint64_t> next(row->next.begin(), row->next.end());
      for (const auto& [c, n] : next) counts.push_back({encode_context(ctx), to_utf8(c), n});
    }
    nlohmann::ordered_json j{{"order", order_}, {"counts", std::move(counts)}};
    out << j.dump() << '\n';
  }

  static NgramPredictor load(std::istream& in) {
    try {
      const auto j = nlohmann::json::parse(in);
      NgramPredictor p(j.at("order").get<int>());
      if (p.order_ != 2 && p.order_ != 3) throw FormatError("bad n-gram order");
      std::vector<char32_t> vocab;
      for (const auto& row : j.at("counts")) {
        const auto ctx = decode_context(row.at(0));
        const auto c = decode_utf8(row.at(1).get<std::string>());
        if (c.size() != 1 || ctx.size() != static_cast<std::size_t>(p.order_ - 1)) {
          throw FormatError("bad n-gram count row");
        }
        p.observe(ctx, c[0], row.at(2).get<std::uint64_t>());
        vocab.push_back(c[0]);
      }
      std::sort(vocab.begin(), vocab.end());
      vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
      p.vocab_ = std::move(vocab);
      if (p.vocab_.empty()) throw FormatError("n-gram model has no counts");
      return p;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad n-gram model: ") + e.what());
    }
  }

 private:
  explicit NgramPredictor(int order) : order_(order) {}

  struct Row {
    std::unordered_map<char32_t, std::uint64_t> next;
    std::uint64_t total = 0;
  };

  void observe(const std::u32string& ctx, char32_t c, std::uint64_t n) {
    auto& row = counts_[ctx];
    row.next[c] += n;
    row.total += n;
  }

  static nlohmann::json encode_context(const std::u32string& ctx) {
    auto arr = nlohmann::json::array();
    for (char32_t c : ctx) arr.push_back(c == kBoundary ? std::string("<s>") : to_utf8(c));
    return arr;
  }

  static std::u32string decode_context(const nlohmann::json& arr) {
    std::u32string ctx;
    for (const auto& e : arr) {
      const auto s = e.get<std::string>();
      if (s == "<s>") {
        ctx.push_back(kBoundary);
      } else {
        const auto cs = decode_utf8(s);
        if (cs.size() != 1) throw FormatError("bad n-gram context entry");
        ctx.push_back(cs[0]);
      }
    }
    return ctx;
  }

  int order_;
  std::unordered_map<std::u32string, Row> counts_;
  std::vector<char32_t> vocab_;
};

}  // namespace zhprobe
