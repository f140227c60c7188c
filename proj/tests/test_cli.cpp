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

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

Result run(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / "deception-cli-test.log";
  const std::string cmd = std::string(DECEPTION_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream s;
  s << in.rdbuf();
  r.output = s.str();
  return r;
}

}  // namespace

TEST(Cli, MissingConfigExitsTwoNamingPath) {
  const Result r = run("train /nonexistent/dir/run.ini");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("/nonexistent/dir/run.ini"), std::string::npos) << r.output;
}

TEST(Cli, BadConfigExitsTwoWithLine) {
  const fs::path cfg = fs::temp_directory_path() / "deception-cli-bad.ini";
  std::ofstream(cfg) << "[run]\nseed = 1\n[train]\nbogus = 2\n";
  const Result r = run("train " + cfg.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("line 4"), std::string::npos) << r.output;
  fs::remove(cfg);
}

TEST(Cli, UnknownSubcommandFails) { EXPECT_NE(run("frobnicate").code, 0); }

TEST(Cli, TrainThenEvalWithEpisodeOverride) {
  const fs::path dir = fs::temp_directory_path() / "deception-cli-run";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path cfg = dir / "smoke.ini";
  std::ofstream(cfg) << "[run]\nseed = 3\noutput_dir = " << (dir / "out").string()
                     << "\n[network]\nhidden = 8\n[train]\nhorizon = 50\nn_envs = 2\ntotal_steps = 100\n"
                        "[eval]\nepisodes = 3\n";
  const Result t = run("train " + cfg.string());
  ASSERT_EQ(t.code, 0) << t.output;
  const fs::path ckpt = dir / "out" / "stage1" / "stage1.ckpt";
  ASSERT_TRUE(fs::exists(ckpt));
  const Result e = run("eval " + ckpt.string() + " --episodes 5 --output " + (dir / "ev").string());
  ASSERT_EQ(e.code, 0) << e.output;
  EXPECT_NE(e.output.find("episodes: 5"), std::string::npos) << e.output;

  {
    std::fstream f(ckpt, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(100);
    f.put('\x7f');
  }
  const Result bad = run("eval " + ckpt.string());
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.output.find("hash"), std::string::npos) << bad.output;
  fs::remove_all(dir);
}

TEST(Cli, GradcheckCorruptBlockFails) {
  const Result r = run("gradcheck --corrupt-block tanh");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("tanh"), std::string::npos);
}
