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

// Central finite-difference checks of every differentiable graph operation
// and of the end-to-end PPO loss with respect to the policy parameters.

#ifndef DECEPTION_GRADCHECK_HPP
#define DECEPTION_GRADCHECK_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace deception::gradcheck {

struct GradcheckConfig {
  std::uint64_t seed = 7;
  std::size_t instances = 100;  // per block
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Coordinates sampled per parameter block in the network-level checks.
  std::size_t coords_per_block = 3;
  /// Negative control: the analytic gradient of this block is perturbed.
  std::string corrupt_block;
};

struct BlockResult {
  std::string name;
  std::size_t instances = 0;
  double worst_error = 0.0;  // max over instances of the relative inf-norm error
  bool passed = false;

  friend bool operator==(const BlockResult&, const BlockResult&) = default;
};

struct GradcheckReport {
  std::uint64_t seed = 0;
  double tolerance = 0.0;
  std::vector<BlockResult> blocks;

  bool all_passed() const noexcept;
  friend bool operator==(const GradcheckReport&, const GradcheckReport&) = default;
};

/// ||analytic - numeric||_inf / max(||analytic||_inf, ||numeric||_inf, 1e-6).
double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

std::vector<std::string> block_names();
GradcheckReport run_gradcheck(const GradcheckConfig& config = {});

}  // namespace deception::gradcheck

#endif  // DECEPTION_GRADCHECK_HPP
