//------------------------------------------------------------------------------
//
//   Copyright 2026 The CED Authors
//
//   Licensed under the Apache License, Version 2.0 (the "License");
//   you may not use this file except in compliance with the License.
//   You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
//   Unless required by applicable law or agreed to in writing, software
//   distributed under the License is distributed on an "AS IS" BASIS,
//   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
//   See the License for the specific language governing permissions and
//   limitations under the License.
//
//------------------------------------------------------------------------------
#pragma once

#include <stdexcept>
#include <string>

namespace ced {

/// Invalid configuration or command usage. Maps to process exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string &what) : std::runtime_error(what) {}
};

/// Bad or inconsistent input data (corpora, checkpoints, metadata).
/// Maps to process exit code 3.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string &what) : std::runtime_error(what) {}
};

/// Malformed text input; carries the 1-based line number when known.
class ParseError : public DataError {
 public:
  ParseError(const std::string &what, long line)
      : DataError(line > 0 ? what + " (line " + std::to_string(line) + ")"
                           : what),
        line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

/// Non-finite values or numeric breakdown inside the model or optimizer.
/// Maps to process exit code 4.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string &what) : std::runtime_error(what) {}
};

namespace exit_code {
inline constexpr int kOk      = 0;
inline constexpr int kUsage   = 2;
inline constexpr int kData    = 3;
inline constexpr int kNumeric = 4;
}  // namespace exit_code

}  // namespace ced
