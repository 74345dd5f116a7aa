// Copyright 2026 The FPEM Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FPEM_ERRORS_H_
#define FPEM_ERRORS_H_

#include <stdexcept>
#include <string>

namespace fpem {

// A policy produced an invalid decision (bad length, NaN, negative mass,
// illegal action). Carries the zero-based seat of the offending player.
class PolicyFault : public std::runtime_error {
 public:
  PolicyFault(int player, const std::string& what)
      : std::runtime_error("policy fault (player " + std::to_string(player + 1) +
                           "): " + what),
        player_(player) {}
  int player() const { return player_; }

 private:
  int player_;
};

// Caller broke an operation's precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A configuration value is out of range or inconsistent.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::invalid_argument("config error [" + field + "]: " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// An exact evaluator reached an information state the policy does not cover.
class CoverageError : public std::runtime_error {
 public:
  explicit CoverageError(const std::string& key)
      : std::runtime_error("policy undefined at information state '" + key + "'"),
        key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

// Training produced non-finite values.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed checkpoint, manifest or metrics file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fpem

#endif  // FPEM_ERRORS_H_
