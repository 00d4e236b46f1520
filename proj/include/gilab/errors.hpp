/*
 * Copyright 2026 The gilab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace gilab {

// Every library failure derives from Error so the CLI can map families of
// failures onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Violated precondition on an otherwise well-typed argument.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Cosine matching is undefined when the candidate gradient vanishes.
class DegenerateGradientError : public Error {
 public:
  using Error::Error;
};

class AttackFailedError : public Error {
 public:
  using Error::Error;
};

class CorrelationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input data. `offset` is the byte position where parsing stopped,
// or npos when the failure is not positional.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset = std::string::npos)
      : Error(offset == std::string::npos
                  ? what
                  : what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace gilab
