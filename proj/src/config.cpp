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

#include "deception/sha256.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <system_error>
#include <vector>

namespace deception::harness {

ConfigError::ConfigError(std::size_t line, const std::string& message)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}

ppo::TrainConfig RunConfig::train_config() const {
  ppo::TrainConfig t = train;
  t.seed = seed;
  return t;
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::invalid_argument("expected a number");
  return v;
}

std::uint64_t parse_unsigned(const std::string& s) {
  std::uint64_t v = 0;
  std::string digits;
  for (char c : s) {
    if (c != '_' && c != '\'') digits.push_back(c);
  }
  const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), v);
  if (res.ec != std::errc() || res.ptr != digits.data() + digits.size()) {
    throw std::invalid_argument("expected a nonnegative integer");
  }
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument("expected true or false");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s + ",");
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw std::invalid_argument("empty list item");
    out.push_back(item);
  }
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Section -> ordered keys. Order defines the serialized layout.
using Schema = std::vector<std::pair<std::string, std::vector<std::pair<std::string, Field>>>>;

template <typename T>
Field real(T RunConfig::*section, double T::*member) {
  return {[=](RunConfig& c, const std::string& v) { (c.*section).*member = parse_double(v); },
          [=](const RunConfig& c) { return format_double((c.*section).*member); }};
}

template <typename T, typename U>
Field count(T RunConfig::*section, U T::*member) {
  return {[=](RunConfig& c, const std::string& v) { (c.*section).*member = static_cast<U>(parse_unsigned(v)); },
          [=](const RunConfig& c) { return std::to_string((c.*section).*member); }};
}

const Schema& schema() {
  static const Schema s = [] {
    Schema out;
    out.push_back({"run",
                   {
                       {"seed",
                        {[](RunConfig& c, const std::string& v) { c.seed = parse_unsigned(v); },
                         [](const RunConfig& c) { return std::to_string(c.seed); }}},
                       {"output_dir",
                        {[](RunConfig& c, const std::string& v) { c.output_dir = v; },
                         [](const RunConfig& c) { return c.output_dir; }}},
                       {"mode",
                        {[](RunConfig& c, const std::string& v) {
                           if (v == "stage1") {
                             c.mode = RunMode::Stage1;
                           } else if (v == "curriculum") {
                             c.mode = RunMode::Curriculum;
                           } else {
                             throw std::invalid_argument("expected stage1 or curriculum");
                           }
                         },
                         [](const RunConfig& c) {
                           return std::string(c.mode == RunMode::Stage1 ? "stage1" : "curriculum");
                         }}},
                       {"checkpoint_every",
                        {[](RunConfig& c, const std::string& v) { c.checkpoint_every = parse_unsigned(v); },
                         [](const RunConfig& c) { return std::to_string(c.checkpoint_every); }}},
                       {"resume",
                        {[](RunConfig& c, const std::string& v) { c.resume = v; },
                         [](const RunConfig& c) { return c.resume; }}},
                       {"stage1_checkpoint",
                        {[](RunConfig& c, const std::string& v) { c.stage1_checkpoint = v; },
                         [](const RunConfig& c) { return c.stage1_checkpoint; }}},
                       {"log_steps",
                        {[](RunConfig& c, const std::string& v) { c.log_steps = parse_bool(v); },
                         [](const RunConfig& c) { return std::string(c.log_steps ? "true" : "false"); }}},
                   }});
    using env::Dynamics;
    using env::EnvConfig;
    auto dyn = [](double Dynamics::*m) {
      return Field{[=](RunConfig& c, const std::string& v) { c.env.dynamics.*m = parse_double(v); },
                   [=](const RunConfig& c) { return format_double(c.env.dynamics.*m); }};
    };
    out.push_back({"env",
                   {
                       {"n_good", count(&RunConfig::env, &EnvConfig::n_good)},
                       {"dt", dyn(&Dynamics::dt)},
                       {"damping", dyn(&Dynamics::damping)},
                       {"force_scale", dyn(&Dynamics::force_scale)},
                       {"max_speed", dyn(&Dynamics::max_speed)},
                       {"episode_length", count(&RunConfig::env, &EnvConfig::episode_length)},
                       {"landmark_min_separation", real(&RunConfig::env, &EnvConfig::landmark_min_separation)},
                       {"arena_half_width", real(&RunConfig::env, &EnvConfig::arena_half_width)},
                       {"deception_clip", real(&RunConfig::env, &EnvConfig::deception_clip)},
                       {"adversary_deadband", real(&RunConfig::env, &EnvConfig::adversary_deadband)},
                   }});
    using policy::NetworkConfig;
    out.push_back({"network",
                   {
                       {"hidden", count(&RunConfig::network, &NetworkConfig::hidden)},
                       {"policy_head_scale", real(&RunConfig::network, &NetworkConfig::policy_head_scale)},
                   }});
    using ppo::TrainConfig;
    out.push_back({"train",
                   {
                       {"gamma", real(&RunConfig::train, &TrainConfig::gamma)},
                       {"lambda", real(&RunConfig::train, &TrainConfig::lambda)},
                       {"clip", real(&RunConfig::train, &TrainConfig::clip)},
                       {"epochs", count(&RunConfig::train, &TrainConfig::epochs)},
                       {"minibatch", count(&RunConfig::train, &TrainConfig::minibatch)},
                       {"horizon", count(&RunConfig::train, &TrainConfig::horizon)},
                       {"n_envs", count(&RunConfig::train, &TrainConfig::n_envs)},
                       {"total_steps", count(&RunConfig::train, &TrainConfig::total_steps)},
                       {"entropy_coef", real(&RunConfig::train, &TrainConfig::entropy_coef)},
                       {"value_coef", real(&RunConfig::train, &TrainConfig::value_coef)},
                       {"learning_rate", real(&RunConfig::train, &TrainConfig::learning_rate)},
                       {"max_grad_norm", real(&RunConfig::train, &TrainConfig::max_grad_norm)},
                       {"reward_scale", real(&RunConfig::train, &TrainConfig::reward_scale)},
                   }});
    using curriculum::CurriculumPlan;
    out.push_back(
        {"curriculum",
         {
             {"stage1_threshold",
              {[](RunConfig& c, const std::string& v) { c.curriculum.convergence.threshold = parse_double(v); },
               [](const RunConfig& c) { return format_double(c.curriculum.convergence.threshold); }}},
             {"stage1_patience",
              {[](RunConfig& c, const std::string& v) { c.curriculum.convergence.patience = parse_unsigned(v); },
               [](const RunConfig& c) { return std::to_string(c.curriculum.convergence.patience); }}},
             {"stop_on_convergence",
              {[](RunConfig& c, const std::string& v) { c.curriculum.stop_on_convergence = parse_bool(v); },
               [](const RunConfig& c) { return std::string(c.curriculum.stop_on_convergence ? "true" : "false"); }}},
             {"stage2_steps", count(&RunConfig::curriculum, &CurriculumPlan::stage2_steps)},
             {"stage2_weights",
              {[](RunConfig& c, const std::string& v) {
                 c.curriculum.stage2_deception_weights.clear();
                 for (const auto& item : split_list(v)) c.curriculum.stage2_deception_weights.push_back(parse_double(item));
               },
               [](const RunConfig& c) {
                 std::string s;
                 for (double w : c.curriculum.stage2_deception_weights) s += (s.empty() ? "" : ", ") + format_double(w);
                 return s;
               }}},
             {"ramp_fraction", real(&RunConfig::curriculum, &CurriculumPlan::ramp_fraction)},
             {"eval_every", count(&RunConfig::curriculum, &CurriculumPlan::eval_every)},
             {"eval_episodes", count(&RunConfig::curriculum, &CurriculumPlan::eval_episodes)},
             {"agent_schedule",
              {[](RunConfig& c, const std::string& v) {
                 c.curriculum.agent_schedule.clear();
                 for (const auto& item : split_list(v)) c.curriculum.agent_schedule.push_back(parse_unsigned(item));
               },
               [](const RunConfig& c) {
                 std::string s;
                 for (auto n : c.curriculum.agent_schedule) s += (s.empty() ? "" : ", ") + std::to_string(n);
                 return s;
               }}},
         }});
    using metrics::EvalConfig;
    out.push_back({"eval",
                   {
                       {"episodes", count(&RunConfig::eval, &EvalConfig::episodes)},
                       {"threshold", real(&RunConfig::eval, &EvalConfig::threshold)},
                       {"seed", count(&RunConfig::eval, &EvalConfig::seed)},
                   }});
    return out;
  }();
  return s;
}

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& [name, fields] : schema()) {
    if (name != section) continue;
    for (const auto& [k, f] : fields) {
      if (k == key) return &f;
    }
  }
  return nullptr;
}

bool known_section(const std::string& section) {
  for (const auto& entry : schema()) {
    if (entry.first == section) return true;
  }
  return false;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(line_no, "malformed section header '" + line + "'");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!known_section(section)) throw ConfigError(line_no, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(line_no, "expected 'key = value', got '" + line + "'");
    if (section.empty()) throw ConfigError(line_no, "key outside of any [section]");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const Field* field = find_field(section, key);
    if (field == nullptr) throw ConfigError(line_no, "unknown key '" + key + "' in [" + section + "]");
    if (!seen.insert(section + "." + key).second) {
      throw ConfigError(line_no, "duplicate key '" + key + "' in [" + section + "]");
    }
    try {
      field->set(config, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(line_no, section + "." + key + " = '" + value + "': " + e.what());
    }
  }
  validate(config);
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "cannot read config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(e.line(), path.string() + ": " + e.what());
  }
}

std::string serialize(const RunConfig& config, bool include_location) {
  std::ostringstream out;
  bool first = true;
  for (const auto& [section, fields] : schema()) {
    if (!first) out << '\n';
    first = false;
    out << '[' << section << "]\n";
    for (const auto& [key, field] : fields) {
      if (!include_location && section == "run" && key == "output_dir") continue;
      out << key << " = " << field.get(config) << '\n';
    }
  }
  return out.str();
}

std::string config_hash(const RunConfig& config) { return to_hex(sha256(serialize(config, false))); }

void validate(const RunConfig& config) {
  try {
    config.train_config().validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(0, e.what());
  }
  if (config.env.n_good < 2) throw ConfigError(0, "env.n_good: need at least 2 good agents");
  if (config.env.episode_length == 0) throw ConfigError(0, "env.episode_length: must be positive");
  if (config.train.horizon % config.env.episode_length != 0) {
    throw ConfigError(0, "train.horizon: " + std::to_string(config.train.horizon) +
                             " is not a multiple of env.episode_length " + std::to_string(config.env.episode_length));
  }
  if (config.network.hidden == 0) throw ConfigError(0, "network.hidden: must be positive");
  if (config.checkpoint_every == 0) throw ConfigError(0, "run.checkpoint_every: must be positive");
  if (config.eval.episodes == 0) throw ConfigError(0, "eval.episodes: must be positive");
  if (config.curriculum.eval_every == 0) throw ConfigError(0, "curriculum.eval_every: must be positive");
  if (config.curriculum.eval_episodes == 0) throw ConfigError(0, "curriculum.eval_episodes: must be positive");
  for (double w : config.curriculum.stage2_deception_weights) {
    if (!(w >= 0.0 && w <= 1.0)) throw ConfigError(0, "curriculum.stage2_weights: weights must lie in [0, 1]");
  }
  for (std::size_t n : config.curriculum.agent_schedule) {
    if (n < 2) throw ConfigError(0, "curriculum.agent_schedule: agent counts must be at least 2");
  }
  if (!(config.curriculum.ramp_fraction >= 0.0 && config.curriculum.ramp_fraction <= 1.0)) {
    throw ConfigError(0, "curriculum.ramp_fraction: must lie in [0, 1]");
  }
}

}  // namespace deception::harness
