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

// Reference backends for exercising the harness without a real model.

#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "zhprobe/dataset.hpp"
#include "zhprobe/error.hpp"
#include "zhprobe/protocol.hpp"
#include "zhprobe/rng.hpp"
#include "zhprobe/text.hpp"

namespace zhprobe {

/// FNV-1a, used where a hash must be stable across platforms.
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Reads gold answers from the dataset: rank 1 is always the gold character
/// (score 1), the rest of the list is filler (score 0).
class OracleBackend : public Backend {
 public:
  explicit OracleBackend(const std::vector<ProbingInstance>& instances) {
    for (const auto& inst : instances) gold_[inst.id] = inst.gold;
  }

  ProbeResponse answer(const ProbeQuery& q) const override {
    auto it = gold_.find(q.id);
    if (it == gold_.end()) throw ProtocolError(q.id, "oracle has no gold for this id");
    const std::u32string& gold = it->second;
    if (gold.size() != q.masked_positions.size()) {
      throw ProtocolError(q.id, "masked position count differs from the gold span");
    }
    ProbeResponse r{q.id, {}};
    for (char32_t g : gold) {
      auto& list = r.predictions.emplace_back();
      list.push_back({to_utf8(g), 1.0});
      for (char32_t c = 0x4E00; list.size() < q.k; ++c) {
        if (c != g) list.push_back({to_utf8(c), 0.0});
      }
    }
    return r;
  }

 private:
  std::unordered_map<std::string, std::u32string> gold_;
};

/// k distinct characters drawn uniformly from a fixed inventory. The draw is
/// seeded per query id so answers do not depend on arrival order.
class UniformRandomBackend : public Backend {
 public:
  UniformRandomBackend(std::vector<char32_t> inventory, std::uint64_t seed)
      : inventory_(std::move(inventory)), seed_(seed) {
    if (inventory_.empty()) throw ContractError("random backend needs a non-empty inventory");
  }

  /// `size` consecutive CJK ideographs starting at U+4E00.
  static std::vector<char32_t> cjk_inventory(std::size_t size) {
    std::vector<char32_t> v(size);
    for (std::size_t i = 0; i < size; ++i) v[i] = static_cast<char32_t>(0x4E00 + i);
    return v;
  }

  ProbeResponse answer(const ProbeQuery& q) const override {
    if (q.k > inventory_.size()) throw ProtocolError(q.id, "k exceeds the inventory size");
    Rng rng(sub_seed(seed_, fnv1a64(q.id)));
    const double score = 1.0 / static_cast<double>(inventory_.size());
    ProbeResponse r{q.id, {}};
    for (std::size_t m = 0; m < q.masked_positions.size(); ++m) {
      auto& list = r.predictions.emplace_back();
      std::unordered_set<std::size_t> taken;
      while (list.size() < q.k) {
        const auto idx = static_cast<std::size_t>(rng.below(inventory_.size()));
        if (taken.insert(idx).second) list.push_back({to_utf8(inventory_[idx]), score});
      }
    }
    return r;
  }

 private:
  std::vector<char32_t> inventory_;
  std::uint64_t seed_;
};

}  // namespace zhprobe
