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

// Line-delimited JSON codec spoken between the evaluator and a model backend.
//
// Request:  {"id": str, "tokens": [str], "masked_positions": [int], "k": int}
// Response: {"id": str, "predictions": [[[char, score], ... k], ... per mask]}
// Failure:  {"id": str, "error": str}
//
// One object per line, UTF-8, '\n' terminated. Responses may arrive in any
// order and are matched to requests by id.

#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "zhprobe/error.hpp"
#include "zhprobe/text.hpp"

namespace zhprobe {

struct ProbeQuery {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<std::size_t> masked_positions;
  std::size_t k = 10;

  friend bool operator==(const ProbeQuery&, const ProbeQuery&) = default;
};

struct Candidate {
  std::string token;
  double score;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct ProbeResponse {
  std::string id;
  std::vector<std::vector<Candidate>> predictions;  // one list per masked position

  friend bool operator==(const ProbeResponse&, const ProbeResponse&) = default;
};

inline void validate_query(const ProbeQuery& q) {
  if (q.id.empty()) throw ProtocolError(q.id, "query id is empty");
  if (q.k == 0) throw ProtocolError(q.id, "k must be positive");
  if (q.masked_positions.empty()) throw ProtocolError(q.id, "query has no masked positions");
  for (std::size_t i = 0; i < q.masked_positions.size(); ++i) {
    const std::size_t p = q.masked_positions[i];
    if (i > 0 && p <= q.masked_positions[i - 1]) {
      throw ProtocolError(q.id, "masked positions must be strictly increasing");
    }
    if (p >= q.tokens.size() || q.tokens[p] != Vocab::kMask) {
      throw ProtocolError(q.id, "masked position " + std::to_string(p) + " is not a MASK token");
    }
  }
}

/// Checks response shape against its query: one list per masked position,
/// exactly k distinct candidates each, finite non-increasing scores.
inline void validate_response(const ProbeResponse& r, const ProbeQuery& q) {
  if (r.id != q.id) throw ProtocolError(q.id, "response id '" + r.id + "' does not match");
  if (r.predictions.size() != q.masked_positions.size()) {
    throw ProtocolError(q.id, "expected " + std::to_string(q.masked_positions.size()) +
                                  " prediction lists, got " + std::to_string(r.predictions.size()));
  }
  for (const auto& list : r.predictions) {
    if (list.size() != q.k) {
      throw ProtocolError(q.id, "expected " + std::to_string(q.k) + " candidates, got " +
                                    std::to_string(list.size()));
    }
    std::set<std::string_view> seen;
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (list[i].token.empty()) throw ProtocolError(q.id, "empty candidate");
      if (!std::isfinite(list[i].score)) throw ProtocolError(q.id, "non-finite score");
      if (i > 0 && list[i].score > list[i - 1].score) {
        throw ProtocolError(q.id, "scores are not non-increasing");
      }
      if (!seen.insert(list[i].token).second) {
        throw ProtocolError(q.id, "duplicate candidate '" + list[i].token + "'");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Encoding

inline std::string encode_query(const ProbeQuery& q) {
  nlohmann::ordered_json j{{"id", q.id},
                           {"tokens", q.tokens},
                           {"masked_positions", q.masked_positions},
                           {"k", q.k}};
  return j.dump();
}

inline std::string encode_response(const ProbeResponse& r) {
  nlohmann::ordered_json preds = nlohmann::ordered_json::array();
  for (const auto& list : r.predictions) {
    nlohmann::ordered_json jl = nlohmann::ordered_json::array();
    for (const auto& c : list) jl.push_back({c.token, c.score});
    preds.push_back(std::move(jl));
  }
  nlohmann::ordered_json j{{"id", r.id}, {"predictions", std::move(preds)}};
  return j.dump();
}

inline std::string encode_error(const std::string& id, const std::string& message) {
  nlohmann::ordered_json j{{"id", id}, {"error", message}};
  return j.dump();
}

// ---------------------------------------------------------------------------
// Decoding

namespace detail {

inline nlohmann::json parse_line(std::string_view line) {
  auto j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ProtocolError("", "malformed JSON");
  if (!j.is_object()) throw ProtocolError("", "message is not a JSON object");
  return j;
}

inline std::string id_of(const nlohmann::json& j) {
  auto it = j.find("id");
  if (it == j.end() || !it->is_string()) throw ProtocolError("", "message lacks a string id");
  return it->get<std::string>();
}

}  // namespace detail

inline ProbeQuery decode_query(std::string_view line) {
  const auto j = detail::parse_line(line);
  ProbeQuery q;
  q.id = detail::id_of(j);
  try {
    q.tokens = j.at("tokens").get<std::vector<std::string>>();
    q.masked_positions = j.at("masked_positions").get<std::vector<std::size_t>>();
    q.k = j.at("k").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(q.id, std::string("bad query: ") + e.what());
  }
  validate_query(q);
  return q;
}

/// A decoded response line: either predictions or a backend-reported error.
struct ResponseMessage {
  std::string id;
  std::variant<ProbeResponse, std::string> body;
};

/// Parses a response line without checking it against a query. Throws
/// ProtocolError with an empty id if the line carries no usable id.
inline ResponseMessage decode_response_message(std::string_view line) {
  const auto j = detail::parse_line(line);
  ResponseMessage msg;
  msg.id = detail::id_of(j);
  if (auto err = j.find("error"); err != j.end()) {
    msg.body = err->is_string() ? err->get<std::string>() : err->dump();
    return msg;
  }
  ProbeResponse r;
  r.id = msg.id;
  auto preds = j.find("predictions");
  if (preds == j.end() || !preds->is_array()) throw ProtocolError(msg.id, "missing predictions");
  for (const auto& list : *preds) {
    if (!list.is_array()) throw ProtocolError(msg.id, "prediction list is not an array");
    auto& out = r.predictions.emplace_back();
    for (const auto& pair : list) {
      if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() || !pair[1].is_number()) {
        throw ProtocolError(msg.id, "candidate must be [string, number]");
      }
      out.push_back({pair[0].get<std::string>(), pair[1].get<double>()});
    }
  }
  msg.body = std::move(r);
  return msg;
}

/// Decodes and validates a response to `q`. Backend-reported errors become
/// ProtocolErrors.
inline ProbeResponse decode_response(std::string_view line, const ProbeQuery& q) {
  ResponseMessage msg = decode_response_message(line);
  if (msg.id != q.id) throw ProtocolError(q.id, "unexpected response id '" + msg.id + "'");
  if (auto* err = std::get_if<std::string>(&msg.body)) throw ProtocolError(q.id, "backend error: " + *err);
  auto& r = std::get<ProbeResponse>(msg.body);
  validate_response(r, q);
  return std::move(r);
}

// ---------------------------------------------------------------------------

/// A model that answers probe queries in-process. Implementations must be
/// safe to call concurrently.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual ProbeResponse answer(const ProbeQuery& q) const = 0;
};

/// Answers one request line with one response line. Never throws for bad
/// input; failures become error messages attributed to the query id.
inline std::string answer_line(const Backend& backend, std::string_view line) {
  std::string id;
  try {
    const auto j = detail::parse_line(line);
    id = detail::id_of(j);
    const ProbeQuery q = decode_query(line);
    ProbeResponse r = backend.answer(q);
    validate_response(r, q);
    return encode_response(r);
  } catch (const std::exception& e) {
    return encode_error(id, e.what());
  }
}

}  // namespace zhprobe
