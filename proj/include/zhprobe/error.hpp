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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace zhprobe {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid UTF-8 input. `offset()` is the byte offset of the first bad byte.
class DecodeError : public Error {
 public:
  DecodeError(std::size_t offset, const std::string& what)
      : Error("invalid UTF-8 at byte " + std::to_string(offset) + ": " + what),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class EmptySentenceError : public Error {
 public:
  EmptySentenceError() : Error("empty sentence") {}
};

/// Argument outside the domain of a function (e.g. bucket_of(0)).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Violated precondition or malformed internal input.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed input record; `line()` is 1-based.
class RecordError : public Error {
 public:
  RecordError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

/// Wire-protocol violation, attributed to a query id when one is known.
class ProtocolError : public Error {
 public:
  ProtocolError(std::string id, const std::string& what)
      : Error(id.empty() ? what : "[" + id + "] " + what), id_(std::move(id)) {}

  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

}  // namespace zhprobe
