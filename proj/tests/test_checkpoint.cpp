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

#include "deception/checkpoint.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

using namespace deception::harness;
namespace ppo = deception::ppo;

namespace {

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.config.seed = 77;
  c.config.network.hidden = 8;
  c.config.train.horizon = 50;
  c.config.train.n_envs = 1;
  c.master_seed = 77;
  c.stage = 2;
  c.weights = {0.7, 0.3};
  c.parent_hash = std::string(64, 'a');
  c.trainer = ppo::TrainerState::fresh(c.config.network, c.config.train_config());
  // One real update so the optimizer moments are non-trivial.
  ppo::train_one_update(c.trainer, c.config.env, c.config.train_config(), c.weights);
  c.trainer.params.tensors[0][0] = std::bit_cast<double>(0x3ff0000000000001ULL);
  return c;
}

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  const Checkpoint c = sample_checkpoint();
  const auto bytes = encode_checkpoint(c);
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(back, c);
  EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, EncodingIsDeterministic) {
  EXPECT_EQ(encode_checkpoint(sample_checkpoint()), encode_checkpoint(sample_checkpoint()));
}

TEST(Checkpoint, FileRoundTripAndHash) {
  const auto dir = std::filesystem::temp_directory_path() / "deception-ckpt-test";
  std::filesystem::create_directories(dir);
  const Checkpoint c = sample_checkpoint();
  const std::string h = save_checkpoint(c, dir / "a.ckpt");
  EXPECT_EQ(h.size(), 64u);
  EXPECT_EQ(checkpoint_hash(dir / "a.ckpt"), h);
  EXPECT_EQ(content_hash(encode_checkpoint(c)), h);
  EXPECT_EQ(load_checkpoint(dir / "a.ckpt"), c);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, FutureVersionIsRejected) {
  auto bytes = encode_checkpoint(sample_checkpoint());
  put_u32(bytes, 8, kCheckpointVersion + 1);
  EXPECT_THROW(decode_checkpoint(bytes), CheckpointVersionError);
}

TEST(Checkpoint, TruncationIsDetected) {
  auto bytes = encode_checkpoint(sample_checkpoint());
  bytes.resize(bytes.size() - 8);
  EXPECT_THROW(decode_checkpoint(bytes), CheckpointTruncatedError);
  bytes.resize(10);
  EXPECT_THROW(decode_checkpoint(bytes), CheckpointTruncatedError);
}

TEST(Checkpoint, TamperedByteFailsHash) {
  const auto good = encode_checkpoint(sample_checkpoint());
  for (std::size_t at : {std::size_t{20}, good.size() / 2, good.size() - 40}) {
    auto bytes = good;
    bytes[at] ^= 0x01;
    EXPECT_THROW(decode_checkpoint(bytes), CheckpointHashError) << "byte " << at;
  }
}

TEST(Checkpoint, BadMagicIsAFormatError) {
  auto bytes = encode_checkpoint(sample_checkpoint());
  bytes[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bytes), CheckpointFormatError);
}

TEST(Checkpoint, MissingFileNamesPath) {
  const auto path = std::filesystem::temp_directory_path() / "deception-missing.ckpt";
  std::filesystem::remove(path);
  try {
    load_checkpoint(path);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find(path.string()), std::string::npos);
  }
}
