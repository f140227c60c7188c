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

// Command-line entry point.
//
//   deception train <config>
//   deception eval <checkpoint> [--episodes K] [--seed S] [--agents N] [--output DIR]
//   deception gradcheck [--seed S]
//   deception grid <config>
//   deception transfer <checkpoint> --agents N [--finetune-steps S] [--episodes K] [--seed S] [--output DIR]
//
// Exit codes: 0 success, 1 failed check or runtime error, 2 bad invocation or
// unreadable / invalid input.

#include "deception/checkpoint.hpp"
#include "deception/config.hpp"
#include "deception/experiment.hpp"
#include "deception/gradcheck.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace deception;

namespace {

harness::RunConfig load_or_exit(const std::string& path) {
  if (!fs::exists(path)) {
    std::cerr << "error: config file '" << path << "' not found\n";
    std::exit(2);
  }
  try {
    return harness::load_config(path);
  } catch (const harness::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::exit(2);
  }
}

fs::path default_output(const fs::path& checkpoint, const std::string& leaf) {
  const char* env = std::getenv(harness::kOutputDirEnv);
  if (env != nullptr && *env != '\0') return fs::path(env) / leaf;
  return checkpoint.parent_path() / leaf;
}

int run_gradcheck(std::uint64_t seed, const std::string& corrupt) {
  gradcheck::GradcheckConfig cfg;
  cfg.seed = seed;
  cfg.corrupt_block = corrupt;
  const auto report = gradcheck::run_gradcheck(cfg);
  std::cout << "gradcheck seed " << report.seed << " tolerance " << report.tolerance << "\n";
  for (const auto& b : report.blocks) {
    std::cout << std::left << std::setw(18) << b.name << " instances " << std::setw(5) << b.instances
              << " worst relative error " << std::scientific << std::setprecision(3) << b.worst_error
              << std::defaultfloat << (b.passed ? "  ok" : "  FAIL") << "\n";
  }
  std::cout << (report.all_passed() ? "all blocks within tolerance\n" : "gradient check FAILED\n");
  return report.all_passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent deception training and evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  auto* train = app.add_subcommand("train", "Run stage 1 (and the stage-2 grid in curriculum mode)");
  train->add_option("config", config_path, "Run configuration file")->required();

  auto* grid = app.add_subcommand("grid", "Fine-tune one stage-2 run per deception weight from a stage-1 checkpoint");
  grid->add_option("config", config_path, "Run configuration file")->required();

  std::string checkpoint;
  std::optional<std::size_t> episodes;
  std::optional<std::uint64_t> eval_seed;
  std::optional<std::size_t> agents;
  std::string output;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--episodes", episodes, "Number of evaluation episodes");
  eval->add_option("--seed", eval_seed, "Evaluation seed");
  eval->add_option("--agents", agents, "Team size to evaluate at");
  eval->add_option("--output", output, "Directory for the report files");

  std::uint64_t gc_seed = gradcheck::GradcheckConfig{}.seed;
  std::string corrupt;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gc->add_option("--seed", gc_seed, "Seed of the random instances");
  gc->add_option("--corrupt-block", corrupt, "Perturb the analytic gradient of this block (negative control)");

  std::size_t transfer_agents = 0;
  std::uint64_t finetune_steps = 0;
  auto* transfer = app.add_subcommand("transfer", "Evaluate (and optionally fine-tune) a checkpoint at another team size");
  transfer->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  transfer->add_option("--agents", transfer_agents, "New number of good agents")->required();
  transfer->add_option("--finetune-steps", finetune_steps, "Environment steps of fine-tuning at the new size");
  transfer->add_option("--episodes", episodes, "Number of evaluation episodes");
  transfer->add_option("--seed", eval_seed, "Evaluation seed");
  transfer->add_option("--output", output, "Directory for the report files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) {
      const auto cfg = load_or_exit(config_path);
      harness::run_train(cfg, std::cout);
      return 0;
    }
    if (grid->parsed()) {
      const auto cfg = load_or_exit(config_path);
      harness::run_grid(cfg, cfg.stage1_checkpoint, harness::resolve_output_dir(cfg) / "stage2", std::cout);
      return 0;
    }
    if (gc->parsed()) return run_gradcheck(gc_seed, corrupt);
    if (!fs::exists(checkpoint)) {
      std::cerr << "error: checkpoint '" << checkpoint << "' not found\n";
      return 2;
    }
    harness::EvalOverrides overrides{episodes, eval_seed, agents};
    if (eval->parsed()) {
      harness::run_eval(checkpoint, overrides, output.empty() ? default_output(checkpoint, "eval") : fs::path(output),
                        std::cout);
      return 0;
    }
    if (transfer->parsed()) {
      const fs::path out = output.empty() ? default_output(checkpoint, "transfer-n" + std::to_string(transfer_agents))
                                          : fs::path(output);
      harness::run_transfer(checkpoint, transfer_agents, finetune_steps, overrides, out, std::cout);
      return 0;
    }
  } catch (const harness::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const harness::CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
