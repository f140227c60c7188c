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

// Binary checkpoint files.
//
//   magic "DCPTCKPT" | u32 version | u64 body length | body | SHA-256(all preceding bytes)
//
// All integers are little-endian; doubles are stored as their IEEE-754 bit
// patterns, so a load reproduces every tensor bit for bit. The body holds the
// run metadata, the canonical config text, the parameter blocks (by name) and
// the optimizer moments.

#ifndef DECEPTION_CHECKPOINT_HPP
#define DECEPTION_CHECKPOINT_HPP

#include "deception/config.hpp"
#include "deception/diffgraph.hpp"
#include "deception/policy_net.hpp"
#include "deception/ppo.hpp"
#include "deception/reward_weights.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace deception::harness {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointHashError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointFormatError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  RunConfig config;
  std::uint64_t master_seed = 0;
  int stage = 1;
  curriculum::RewardWeights weights;
  std::string parent_hash;  // content hash of the checkpoint this run started from
  ppo::TrainerState trainer;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
/// Throws CheckpointTruncatedError, CheckpointVersionError,
/// CheckpointHashError or CheckpointFormatError, checked in that order.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Writes atomically (temporary file, then rename). Returns the content hash.
std::string save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Hex of the trailing digest of an encoded checkpoint.
std::string content_hash(const std::vector<std::uint8_t>& bytes);
/// Reads the file and verifies it before returning its content hash.
std::string checkpoint_hash(const std::filesystem::path& path);

}  // namespace deception::harness

#endif  // DECEPTION_CHECKPOINT_HPP
