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

// Masked-language-model corruption under character-level (CLM), whole-word
// (WWM) and mixed masking.
//
// Both selectors draw from the same partial Fisher-Yates shuffle, CLM over
// characters and WWM over words, so with an all-singleton segmentation WWM
// reproduces CLM selections draw for draw.
//
// Every sentence gets its own generator seeded with sub_seed(seed, ordinal),
// which is what makes multi-worker output identical to a single worker.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "zhprobe/error.hpp"
#include "zhprobe/rng.hpp"
#include "zhprobe/segmenter.hpp"
#include "zhprobe/text.hpp"

namespace zhprobe {

enum class Strategy { CLM, WWM, Mixed };

inline std::string_view strategy_name(Strategy s) noexcept {
  switch (s) {
    case Strategy::CLM: return "clm";
    case Strategy::WWM: return "wwm";
    case Strategy::Mixed: return "mixed";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view s) {
  if (s == "clm") return Strategy::CLM;
  if (s == "wwm") return Strategy::WWM;
  if (s == "mixed") return Strategy::Mixed;
  throw FormatError("unknown masking strategy '" + std::string(s) + "'");
}

struct MaskingConfig {
  Strategy strategy = Strategy::CLM;
  double mask_rate = 0.15;
  std::size_t max_seq_len = 512;
  double p_mask = 0.80;
  double p_random = 0.10;
  double p_keep = 0.10;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw ContractError("mask_rate must lie in (0, 1)");
    if (max_seq_len < 3) throw ContractError("max_seq_len must leave room for CLS/SEP");
    if (p_mask < 0 || p_random < 0 || p_keep < 0 ||
        std::abs(p_mask + p_random + p_keep - 1.0) > 1e-9) {
      throw ContractError("corruption split must be non-negative and sum to 1");
    }
  }
};

/// max(1, floor(rate * n)). The small epsilon absorbs binary rounding of the
/// rate (0.15 * 60 must give 9, not 8).
inline std::size_t mask_target(std::size_t n, double rate) {
  const auto t = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n) + 1e-9));
  return std::max<std::size_t>(1, t);
}

namespace detail {

/// Draws distinct units in shuffled order, handing each to `accept` until it
/// returns true (budget met) or the units run out.
template <typename Accept>
std::vector<std::size_t> draw_units(std::size_t units, Rng& rng, Accept accept) {
  std::vector<std::size_t> order(units);
  for (std::size_t i = 0; i < units; ++i) order[i] = i;
  std::size_t taken = 0;
  while (taken < units) {
    const std::size_t j = taken + static_cast<std::size_t>(rng.below(units - taken));
    std::swap(order[taken], order[j]);
    if (accept(order[taken++])) break;
  }
  order.resize(taken);
  return order;
}

}  // namespace detail

/// Exactly mask_target(n) distinct positions, sorted.
inline std::vector<std::size_t> select_clm(std::size_t n, const MaskingConfig& cfg, Rng& rng) {
  if (n == 0) throw ContractError("select_clm on an empty sentence");
  const std::size_t target = mask_target(n, cfg.mask_rate);
  std::size_t taken = 0;
  auto picked = detail::draw_units(n, rng, [&](std::size_t) { return ++taken >= target; });
  std::sort(picked.begin(), picked.end());
  return picked;
}

/// Whole words until at least mask_target(n) characters are covered.
/// Returns the sorted union of the chosen words' positions.
inline std::vector<std::size_t> select_wwm(std::size_t n, const WordSpans& words,
                                           const MaskingConfig& cfg, Rng& rng) {
  if (n == 0) throw ContractError("select_wwm on an empty sentence");
  if (!tiles(words, n)) throw ContractError("word spans do not tile the sentence");
  const std::size_t target = mask_target(n, cfg.mask_rate);
  std::size_t covered = 0;
  auto chosen = detail::draw_units(words.size(), rng, [&](std::size_t w) {
    covered += words[w].length;
    return covered >= target;
  });
  std::vector<std::size_t> positions;
  for (std::size_t w : chosen) {
    for (std::size_t p = 0; p < words[w].length; ++p) positions.push_back(words[w].start + p);
  }
  std::sort(positions.begin(), positions.end());
  return positions;
}

/// A corrupted training sequence. Token 0 is CLS and the last token SEP, so
/// label positions are character index + 1.
struct MaskedInstance {
  std::vector<std::string> tokens;
  std::map<std::size_t, char32_t> labels;
  Strategy strategy_used = Strategy::CLM;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json labels_json = nlohmann::ordered_json::object();
    for (const auto& [pos, c] : labels) labels_json[std::to_string(pos)] = to_utf8(c);
    return {{"tokens", tokens}, {"labels", labels_json}, {"strategy", strategy_name(strategy_used)}};
  }

  /// The original characters recovered from input tokens plus labels.
  std::u32string restore() const {
    std::u32string out;
    for (std::size_t i = 1; i + 1 < tokens.size(); ++i) {
      auto it = labels.find(i);
      if (it != labels.end()) {
        out.push_back(it->second);
      } else {
        auto cs = decode_utf8(tokens[i]);
        if (cs.size() != 1) throw ContractError("unlabeled special token inside the sequence");
        out.push_back(cs[0]);
      }
    }
    return out;
  }
};

/// Applies the mask/random/keep split independently to each selected
/// position. `random_pool` supplies replacement characters.
inline MaskedInstance corrupt(std::u32string_view chars, const std::vector<std::size_t>& positions,
                              const MaskingConfig& cfg, const std::vector<char32_t>& random_pool,
                              Rng& rng) {
  MaskedInstance inst;
  inst.tokens.reserve(chars.size() + 2);
  inst.tokens.emplace_back(Vocab::kCls);
  for (char32_t c : chars) inst.tokens.push_back(to_utf8(c));
  inst.tokens.emplace_back(Vocab::kSep);
  for (std::size_t p : positions) {
    if (p >= chars.size()) throw ContractError("masked position " + std::to_string(p) + " out of range");
    const double u = rng.unit();
    std::string& tok = inst.tokens[p + 1];
    if (u < cfg.p_mask) {
      tok = Vocab::kMask;
    } else if (u < cfg.p_mask + cfg.p_random) {
      if (random_pool.empty()) throw ContractError("random replacement needs a non-empty vocabulary");
      tok = to_utf8(random_pool[rng.below(random_pool.size())]);
    }
    inst.labels[p + 1] = chars[p];
  }
  return inst;
}

/// Masks one sentence with its own generator. `words` is required for WWM and
/// Mixed strategies.
inline MaskedInstance mask_sentence(std::u32string_view chars, const WordSpans* words,
                                    std::uint64_t ordinal, const MaskingConfig& cfg,
                                    const std::vector<char32_t>& random_pool) {
  Rng rng(sub_seed(cfg.seed, ordinal));
  Strategy used = cfg.strategy;
  if (used == Strategy::Mixed) used = rng.coin() ? Strategy::WWM : Strategy::CLM;
  std::vector<std::size_t> positions;
  if (used == Strategy::CLM) {
    positions = select_clm(chars.size(), cfg, rng);
  } else {
    if (!words) throw ContractError("whole word masking needs word spans");
    positions = select_wwm(chars.size(), *words, cfg, rng);
  }
  MaskedInstance inst = corrupt(chars, positions, cfg, random_pool, rng);
  inst.strategy_used = used;
  return inst;
}

// ---------------------------------------------------------------------------
// Corpus generation

enum class SegmentationSource { None, Lexicon, Presegmented };

struct CorpusOptions {
  SegmentationSource segmentation = SegmentationSource::None;
  const Lexicon* lexicon = nullptr;
  std::size_t workers = 1;
  std::size_t chunk = 4096;  // pieces per parallel batch
};

struct CorpusSummary {
  std::size_t lines = 0;
  std::size_t pieces = 0;
  std::size_t skipped_empty = 0;
  std::size_t split_lines = 0;
  std::size_t clm = 0;
  std::size_t wwm = 0;
};

/// A sentence piece ready for masking, with the ordinal that seeds it.
struct CorpusPiece {
  std::u32string chars;
  std::optional<WordSpans> words;
  std::uint64_t ordinal;
};

namespace detail {

/// Clips word spans to [begin, begin + len) and rebases them to 0.
inline WordSpans clip_words(const WordSpans& words, std::size_t begin, std::size_t len) {
  WordSpans out;
  const std::size_t end = begin + len;
  for (const auto& w : words) {
    const std::size_t s = std::max(w.start, begin);
    const std::size_t e = std::min(w.start + w.length, end);
    if (s < e) out.push_back({s - begin, e - s});
  }
  return out;
}

inline void parallel_for(std::size_t count, std::size_t workers,
                         const std::function<void(std::size_t)>& body) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += workers) body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

/// Streams one MaskedInstance JSON object per line from a corpus with one
/// sentence per line. Lines longer than max_seq_len - 2 characters are split
/// and each piece is masked independently. Output order follows input order
/// for any worker count.
class CorpusMasker {
 public:
  CorpusMasker(MaskingConfig cfg, CorpusOptions opts, std::vector<char32_t> random_pool)
      : cfg_(cfg), opts_(opts), pool_(std::move(random_pool)) {
    cfg_.validate();
    if (cfg_.strategy != Strategy::CLM && opts_.segmentation == SegmentationSource::Lexicon &&
        opts_.lexicon == nullptr) {
      throw ContractError("lexicon segmentation requested without a lexicon");
    }
  }

  /// Splits a raw line into pieces, appending them to `out`.
  void split_line(std::string_view line, std::vector<CorpusPiece>& out) {
    ++summary_.lines;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      ++summary_.skipped_empty;
      return;
    }
    std::u32string chars;
    std::optional<WordSpans> words;
    if (opts_.segmentation == SegmentationSource::Presegmented) {
      auto [sentence, spans] = parse_presegmented(line);
      chars = sentence.chars();
      words = std::move(spans);
    } else {
      chars = decode_utf8(line);
      if (opts_.segmentation == SegmentationSource::Lexicon && cfg_.strategy != Strategy::CLM) {
        words = segment_fmm(chars, *opts_.lexicon);
      } else if (cfg_.strategy != Strategy::CLM) {
        words = singleton_spans(chars.size());
      }
    }
    const std::size_t piece_len = cfg_.max_seq_len - 2;
    if (chars.size() > piece_len) ++summary_.split_lines;
    for (std::size_t begin = 0; begin < chars.size(); begin += piece_len) {
      const std::size_t len = std::min(piece_len, chars.size() - begin);
      CorpusPiece piece{chars.substr(begin, len), std::nullopt, next_ordinal_++};
      if (words) piece.words = detail::clip_words(*words, begin, len);
      out.push_back(std::move(piece));
    }
  }

  std::vector<MaskedInstance> mask_pieces(const std::vector<CorpusPiece>& pieces) {
    std::vector<MaskedInstance> out(pieces.size());
    detail::parallel_for(pieces.size(), opts_.workers, [&](std::size_t i) {
      const auto& p = pieces[i];
      out[i] = mask_sentence(p.chars, p.words ? &*p.words : nullptr, p.ordinal, cfg_, pool_);
    });
    for (const auto& inst : out) {
      ++summary_.pieces;
      (inst.strategy_used == Strategy::CLM ? summary_.clm : summary_.wwm) += 1;
    }
    return out;
  }

  CorpusSummary run(std::istream& in, std::ostream& out) {
    std::vector<CorpusPiece> pieces;
    std::string line;
    auto flush = [&] {
      for (const auto& inst : mask_pieces(pieces)) out << inst.to_json().dump() << '\n';
      pieces.clear();
    };
    while (std::getline(in, line)) {
      split_line(line, pieces);
      if (pieces.size() >= opts_.chunk) flush();
    }
    flush();
    return summary_;
  }

  const CorpusSummary& summary() const noexcept { return summary_; }

 private:
  MaskingConfig cfg_;
  CorpusOptions opts_;
  std::vector<char32_t> pool_;
  CorpusSummary summary_;
  std::uint64_t next_ordinal_ = 0;
};

inline CorpusSummary generate_corpus(std::istream& in, std::ostream& out, const MaskingConfig& cfg,
                                     const CorpusOptions& opts,
                                     std::vector<char32_t> random_pool) {
  CorpusMasker masker(cfg, opts, std::move(random_pool));
  return masker.run(in, out);
}

}  // namespace zhprobe
