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

#include "deception/config.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

using namespace deception::harness;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

std::size_t error_line(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST(Config, EmptyTextGivesDefaults) { EXPECT_EQ(parse_config(""), RunConfig{}); }

TEST(Config, ParsesValuesAndComments) {
  const RunConfig c = parse_config(
      "# sample\n"
      "[run]\n"
      "seed = 42   # master\n"
      "mode = curriculum\n"
      "output_dir = /tmp/x\n"
      "\n"
      "[env]\n"
      "n_good = 3\n"
      "force_scale = 2.5\n"
      "[train]\n"
      "learning_rate = 1e-3\n"
      "[curriculum]\n"
      "stage2_weights = 0.1, 0.4\n"
      "agent_schedule = 2,3\n"
      "stop_on_convergence = false\n");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.mode, RunMode::Curriculum);
  EXPECT_EQ(c.output_dir, "/tmp/x");
  EXPECT_EQ(c.env.n_good, 3u);
  EXPECT_EQ(c.env.dynamics.force_scale, 2.5);
  EXPECT_EQ(c.train.learning_rate, 1e-3);
  EXPECT_EQ(c.curriculum.stage2_deception_weights, (std::vector<double>{0.1, 0.4}));
  EXPECT_EQ(c.curriculum.agent_schedule, (std::vector<std::size_t>{2, 3}));
  EXPECT_FALSE(c.curriculum.stop_on_convergence);
  EXPECT_EQ(c.train_config().seed, 42u);
}

TEST(Config, RoundTripIsExact) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    RunConfig c;
    c.seed = rng();
    c.output_dir = "out/" + std::to_string(trial);
    c.env.n_good = 2 + rng() % 4;
    c.env.dynamics.damping = u(rng);
    c.env.landmark_min_separation = u(rng) * 0.3;
    c.train.gamma = 0.5 + 0.5 * u(rng);
    c.train.learning_rate = u(rng) * 1e-3 + 1e-9;
    c.curriculum.stage2_deception_weights = {u(rng), u(rng), u(rng)};
    c.curriculum.agent_schedule = {2, 3};
    c.log_steps = trial % 2 == 0;
    c.eval.threshold = u(rng);
    const RunConfig back = parse_config(serialize(c));
    EXPECT_EQ(back, c);
    EXPECT_EQ(serialize(back), serialize(c));
  }
}

TEST(Config, UnknownKeyNamesLine) {
  const std::string text = "[run]\nseed = 3\n[train]\nlearnin_rate = 0.1\n";
  EXPECT_EQ(error_line(text), 4u);
  EXPECT_NE(error_of(text).find("learnin_rate"), std::string::npos);
  EXPECT_NE(error_of(text).find("line 4"), std::string::npos);
}

TEST(Config, OtherSyntaxErrors) {
  EXPECT_EQ(error_line("[nope]\n"), 1u);
  EXPECT_EQ(error_line("seed = 1\n"), 1u);
  EXPECT_EQ(error_line("[run]\nseed\n"), 2u);
  EXPECT_EQ(error_line("[run]\nseed = 1\nseed = 2\n"), 3u);
  EXPECT_EQ(error_line("[run\n"), 1u);
}

TEST(Config, BadValuesNameTheField) {
  EXPECT_NE(error_of("[env]\nn_good = two\n").find("env.n_good"), std::string::npos);
  EXPECT_NE(error_of("[train]\ngamma = 0.9x\n").find("train.gamma"), std::string::npos);
  EXPECT_NE(error_of("[run]\nmode = stage3\n").find("run.mode"), std::string::npos);
  EXPECT_NE(error_of("[curriculum]\nstage2_weights = 0.1,,0.2\n").find("curriculum.stage2_weights"),
            std::string::npos);
}

TEST(Config, CrossFieldValidation) {
  EXPECT_NE(error_of("[env]\nn_good = 1\n").find("n_good"), std::string::npos);
  EXPECT_NE(error_of("[train]\nhorizon = 75\n").find("horizon"), std::string::npos);
  EXPECT_NE(error_of("[train]\nclip = 0\n").find("clip"), std::string::npos);
  EXPECT_NE(error_of("[curriculum]\nstage2_weights = 1.5\n").find("stage2_weights"), std::string::npos);
  EXPECT_NE(error_of("[curriculum]\nagent_schedule = 1\n").find("agent_schedule"), std::string::npos);
}

TEST(Config, HashIgnoresOutputLocationOnly) {
  RunConfig a;
  RunConfig b = a;
  b.output_dir = "elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 64u);
  b.seed = 2;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(serialize(a, false).find("output_dir"), std::string::npos);
}

TEST(Config, LoadNamesMissingPath) {
  const auto path = std::filesystem::temp_directory_path() / "deception-no-such-config.ini";
  std::filesystem::remove(path);
  try {
    load_config(path);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(path.string()), std::string::npos);
  }
}

TEST(Config, LoadPrefixesPathToParseErrors) {
  const auto path = std::filesystem::temp_directory_path() / "deception-bad-config.ini";
  std::ofstream(path) << "[run]\nbogus = 1\n";
  try {
    load_config(path);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find(path.string()), std::string::npos);
  }
  std::filesystem::remove(path);
}
