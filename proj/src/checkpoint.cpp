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

#include "deception/sha256.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <system_error>

namespace deception::harness {

namespace {

constexpr char kMagic[8] = {'D', 'C', 'P', 'T', 'C', 'K', 'P', 'T'};
constexpr std::size_t kHeaderSize = sizeof(kMagic) + 4 + 8;
constexpr std::size_t kDigestSize = 32;
constexpr std::uint64_t kMaxCount = 1ull << 32;

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void tensor(const std::string& name, const diffgraph::Tensor& t) {
    str(name);
    u32(static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) u64(d);
    for (double v : t.values) f64(v);
  }
  void params(const diffgraph::ParameterSet& p) {
    u64(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) tensor(p.name(i), p[i]);
  }
  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint32_t u32() {
    const auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = count("string length");
    const auto b = take(n);
    return std::string(b.begin(), b.end());
  }
  std::uint64_t count(const char* what) {
    const std::uint64_t n = u64();
    if (n > kMaxCount || n > remaining()) throw CheckpointFormatError(std::string("checkpoint: implausible ") + what);
    return n;
  }
  diffgraph::Tensor tensor(std::string& name) {
    name = str();
    const std::uint32_t rank = u32();
    if (rank == 0 || rank > 2) throw CheckpointFormatError("checkpoint: block '" + name + "' has unsupported rank");
    std::vector<std::size_t> shape(rank);
    std::uint64_t total = 1;
    for (auto& d : shape) {
      d = count("dimension");
      total *= d;
    }
    if (total * 8 > remaining()) throw CheckpointFormatError("checkpoint: block '" + name + "' overruns the body");
    std::vector<double> values(total);
    for (auto& v : values) v = f64();
    return diffgraph::Tensor(std::move(shape), std::move(values));
  }
  diffgraph::ParameterSet params() {
    diffgraph::ParameterSet p;
    const std::uint64_t n = count("block count");
    for (std::uint64_t i = 0; i < n; ++i) {
      std::string name;
      diffgraph::Tensor t = tensor(name);
      p.add(std::move(name), std::move(t));
    }
    return p;
  }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > remaining()) throw CheckpointFormatError("checkpoint: body ends early");
    const auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void check_layout(const diffgraph::ParameterSet& expected, const diffgraph::ParameterSet& got, const char* what) {
  if (!expected.same_layout(got)) {
    throw CheckpointFormatError(std::string("checkpoint: ") + what + " blocks do not match the network configuration");
  }
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  Writer body;
  body.u64(ck.master_seed);
  body.u32(static_cast<std::uint32_t>(ck.stage));
  body.f64(ck.weights.coverage);
  body.f64(ck.weights.deception);
  body.str(ck.parent_hash);
  body.u64(ck.trainer.global_step);
  body.u64(ck.trainer.updates);
  body.str(serialize(ck.config, false));
  body.params(ck.trainer.params.tensors);
  const auto& adam = ck.trainer.optimizer;
  body.f64(adam.config.learning_rate);
  body.f64(adam.config.beta1);
  body.f64(adam.config.beta2);
  body.f64(adam.config.epsilon);
  body.u64(adam.step);
  body.params(adam.first_moment);
  body.params(adam.second_moment);

  Writer out;
  for (char c : kMagic) out.u8(static_cast<std::uint8_t>(c));
  out.u32(ck.version);
  out.u64(body.bytes().size());
  auto bytes = std::move(out.bytes());
  bytes.insert(bytes.end(), body.bytes().begin(), body.bytes().end());
  const Digest d = sha256(std::span<const std::uint8_t>(bytes));
  bytes.insert(bytes.end(), d.begin(), d.end());
  return bytes;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderSize) throw CheckpointTruncatedError("checkpoint: file shorter than its header");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointFormatError("checkpoint: bad magic, not a checkpoint file");
  }
  Reader header(std::span<const std::uint8_t>(bytes).subspan(sizeof(kMagic), 12));
  const std::uint32_t version = header.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint: format version " + std::to_string(version) + " is not supported (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t body_len = header.u64();
  if (body_len > bytes.size()) throw CheckpointTruncatedError("checkpoint: file ends inside the body");
  const std::uint64_t expected = kHeaderSize + body_len + kDigestSize;
  if (bytes.size() < expected) throw CheckpointTruncatedError("checkpoint: file ends before the content hash");
  if (bytes.size() > expected) throw CheckpointFormatError("checkpoint: trailing bytes after the content hash");

  const auto content = std::span<const std::uint8_t>(bytes).first(kHeaderSize + body_len);
  const Digest d = sha256(content);
  if (!std::equal(d.begin(), d.end(), bytes.begin() + static_cast<std::ptrdiff_t>(kHeaderSize + body_len))) {
    throw CheckpointHashError("checkpoint: content hash mismatch, file is corrupt");
  }

  Reader r(content.subspan(kHeaderSize));
  Checkpoint ck;
  ck.version = version;
  ck.master_seed = r.u64();
  ck.stage = static_cast<int>(r.u32());
  ck.weights.coverage = r.f64();
  ck.weights.deception = r.f64();
  ck.parent_hash = r.str();
  ck.trainer.global_step = r.u64();
  ck.trainer.updates = r.u64();
  try {
    ck.config = parse_config(r.str());
  } catch (const ConfigError& e) {
    throw CheckpointFormatError(std::string("checkpoint: embedded config: ") + e.what());
  }
  ck.trainer.params.config = ck.config.network;
  ck.trainer.params.tensors = r.params();
  const auto reference = policy::PolicyParams::initialize(ck.config.network, 0);
  check_layout(reference.tensors, ck.trainer.params.tensors, "parameter");
  auto& adam = ck.trainer.optimizer;
  adam.config.learning_rate = r.f64();
  adam.config.beta1 = r.f64();
  adam.config.beta2 = r.f64();
  adam.config.epsilon = r.f64();
  adam.step = r.u64();
  adam.first_moment = r.params();
  adam.second_moment = r.params();
  check_layout(reference.tensors, adam.first_moment, "first-moment");
  check_layout(reference.tensors, adam.second_moment, "second-moment");
  if (r.remaining() != 0) throw CheckpointFormatError("checkpoint: unread bytes at the end of the body");
  return ck;
}

std::string content_hash(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kDigestSize) throw CheckpointTruncatedError("checkpoint: file shorter than a content hash");
  Digest d{};
  std::copy(bytes.end() - kDigestSize, bytes.end(), d.begin());
  return to_hex(d);
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

std::string save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(checkpoint);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("checkpoint: cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("checkpoint: write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
  return content_hash(bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const CheckpointVersionError& e) {
    throw CheckpointVersionError(path.string() + ": " + e.what());
  } catch (const CheckpointHashError& e) {
    throw CheckpointHashError(path.string() + ": " + e.what());
  } catch (const CheckpointTruncatedError& e) {
    throw CheckpointTruncatedError(path.string() + ": " + e.what());
  } catch (const CheckpointFormatError& e) {
    throw CheckpointFormatError(path.string() + ": " + e.what());
  }
}

std::string checkpoint_hash(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  (void)decode_checkpoint(bytes);
  return content_hash(bytes);
}

}  // namespace deception::harness
