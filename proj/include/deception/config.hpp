// Copyright 2026 The deception-marl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Run configuration: a flat, sectioned key = value text file.
//
//   # comment
//   [section]
//   key = value
//
// Every key is optional and defaults to the value in the structs below.
// Unknown sections or keys are errors. Lists are comma separated.

#ifndef DECEPTION_CONFIG_HPP
#define DECEPTION_CONFIG_HPP

#include "deception/curriculum.hpp"
#include "deception/env.hpp"
#include "deception/metrics.hpp"
#include "deception/policy_net.hpp"
#include "deception/ppo.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace deception::harness {

/// Parse failure with the offending line (1-based; 0 when not tied to a line).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::size_t line, const std::string& message);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

enum class RunMode { Stage1, Curriculum };

struct RunConfig {
  std::uint64_t seed = 1;  // master seed; drives training streams
  std::string output_dir = "runs/default";
  RunMode mode = RunMode::Stage1;
  std::size_t checkpoint_every = 50;  // updates
  std::string resume;                 // checkpoint to continue from
  std::string stage1_checkpoint;      // parent for `grid`
  bool log_steps = false;             // per-step reward log (steps.csv)

  env::EnvConfig env;
  policy::NetworkConfig network;
  ppo::TrainConfig train;
  curriculum::CurriculumPlan curriculum;
  metrics::EvalConfig eval;

  /// Training config with the master seed applied.
  ppo::TrainConfig train_config() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

RunConfig parse_config(const std::string& text);
/// Throws ConfigError(0, ...) naming the path when the file cannot be read.
RunConfig load_config(const std::filesystem::path& path);

/// Canonical text form; parse_config(serialize(c)) == c. With
/// `include_location` false the output_dir key is omitted, which is the form
/// stored in checkpoints and hashed.
std::string serialize(const RunConfig& config, bool include_location = true);

/// Hex SHA-256 of serialize(config, false).
std::string config_hash(const RunConfig& config);

/// Checks cross-field constraints (horizon vs episode length, n_good, ...).
void validate(const RunConfig& config);

}  // namespace deception::harness

#endif  // DECEPTION_CONFIG_HPP
