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

#include "deception/experiment.hpp"

#include "deception/curriculum.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>

namespace deception::harness {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

/// Text file that refuses to fail silently.
class OutFile {
 public:
  OutFile(const fs::path& path, bool append = false) : path_(path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  }
  OutFile& operator<<(const std::string& s) {
    out_ << s;
    if (!out_) throw std::runtime_error("write failed for '" + path_.string() + "'");
    return *this;
  }
  void line(const std::string& s) { *this << s + "\n"; }
  void flush() { out_.flush(); }

 private:
  fs::path path_;
  std::ofstream out_;
};

std::string join(std::initializer_list<std::string> cells) {
  std::string s;
  for (const auto& c : cells) s += (s.empty() ? "" : ",") + c;
  return s;
}

std::string checkpoint_name(const std::string& prefix, std::uint64_t update) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "-u%06llu.ckpt", static_cast<unsigned long long>(update));
  return prefix + buf;
}

struct StageSpec {
  RunConfig config;  // env.n_good is the team size trained on
  int stage = 1;
  double target_deception = 0.0;
  std::uint64_t steps = 0;
  std::string prefix;
  std::string parent_hash;
  bool append_logs = false;
};

metrics::EvalConfig periodic_eval(const RunConfig& c) {
  metrics::EvalConfig e = c.eval;
  e.episodes = c.curriculum.eval_episodes;
  return e;
}

StageOutcome train_stage(const StageSpec& spec, ppo::TrainerState state, const fs::path& dir, std::ostream& log) {
  const RunConfig& cfg = spec.config;
  const ppo::TrainConfig train = cfg.train_config();
  const std::string hash = config_hash(cfg);
  const std::string provenance = provenance_header(cfg.seed, hash);
  fs::create_directories(dir);

  auto open_log = [&](const char* name, const char* header) {
    const fs::path path = dir / name;
    const bool append = spec.append_logs && fs::exists(path);
    auto f = std::make_unique<OutFile>(path, append);
    if (!append) {
      *f << provenance;
      f->line(header);
    }
    return f;
  };
  auto updates_csv = open_log("updates.csv", kUpdatesHeader);
  auto evals_csv = open_log("evals.csv", kEvalsHeader);
  std::unique_ptr<OutFile> steps_csv;
  if (cfg.log_steps) steps_csv = open_log("steps.csv", kStepsHeader);

  StageOutcome outcome;
  std::string last_good = cfg.resume;
  std::uint64_t planned = 0;
  {
    const std::uint64_t per = train.steps_per_update();
    planned = (spec.steps + per - 1) / per;
  }

  auto make_checkpoint = [&](const ppo::TrainerState& st, const curriculum::RewardWeights& w) {
    Checkpoint ck;
    ck.config = cfg;
    ck.master_seed = cfg.seed;
    ck.stage = spec.stage;
    ck.weights = w;
    ck.parent_hash = spec.parent_hash;
    ck.trainer = st;
    return ck;
  };

  curriculum::RewardWeights current{};
  ppo::LoopHooks hooks;
  hooks.weights = [&](std::uint64_t done, std::uint64_t total) {
    current = curriculum::weights_for_update(spec.stage, spec.target_deception, done, total,
                                             cfg.curriculum.ramp_fraction);
    return current;
  };
  if (steps_csv) {
    hooks.on_batch = [&](const ppo::RolloutBatch& b) {
      const std::uint64_t update = state.updates + 1;
      for (std::size_t e = 0; e < b.n_envs; ++e) {
        for (std::size_t t = 0; t < b.horizon; ++t) {
          const std::size_t s = e * b.horizon + t;
          steps_csv->line(join({std::to_string(update), std::to_string(e), std::to_string(t), num(b.weights[s].coverage),
                                num(b.weights[s].deception), num(b.coverage[s]), num(b.deception[s]),
                                num(b.team_rewards[s])}));
        }
      }
    };
  }
  std::uint64_t done = 0;
  hooks.after_update = [&](const ppo::UpdateRecord& r) {
    ++done;
    const auto& st = r.stats;
    updates_csv->line(join({std::to_string(r.update), std::to_string(r.global_step), std::to_string(spec.stage),
                            num(r.weights.coverage), num(r.weights.deception), num(st.policy_loss), num(st.value_loss),
                            num(st.entropy), num(st.approx_kl), num(st.clip_fraction), num(st.grad_norm),
                            num(r.mean_team_reward), num(r.mean_coverage), num(r.mean_deception),
                            num(r.episode_return)}));
    if (st.approx_kl > kKlWarning) {
      log << "warning: update " << r.update << " approx KL " << fixed(st.approx_kl, 4) << " exceeds "
          << kKlWarning << "\n";
    }
    bool stop = false;
    if (done % cfg.curriculum.eval_every == 0 || done == planned) {
      const auto rep = metrics::evaluate(state.params, cfg.env, periodic_eval(cfg));
      outcome.eval_history.push_back(rep.bipartite_distance.mean);
      const bool converged = curriculum::stage1_converged(outcome.eval_history, cfg.curriculum.convergence);
      evals_csv->line(join({std::to_string(r.update), std::to_string(r.global_step), num(rep.bipartite_distance.mean),
                            num(rep.good_threshold_steps.mean), converged ? "1" : "0"}));
      log << spec.prefix << " update " << r.update << " step " << r.global_step << " w_dec "
          << fixed(r.weights.deception, 3) << " return " << fixed(r.episode_return, 2) << " eval bipartite "
          << fixed(rep.bipartite_distance.mean, 4) << "\n";
      if (spec.stage == 1 && converged && !outcome.converged) {
        outcome.converged = true;
        log << spec.prefix << " converged at update " << r.update << "\n";
        stop = cfg.curriculum.stop_on_convergence;
      }
    }
    if (!stop && done < planned && done % cfg.checkpoint_every == 0) {
      const fs::path path = dir / checkpoint_name(spec.prefix, r.update);
      save_checkpoint(make_checkpoint(state, r.weights), path);
      last_good = path.string();
      updates_csv->flush();
      evals_csv->flush();
    }
    return !stop;
  };

  try {
    outcome.updates = ppo::train_loop(state, cfg.env, train, spec.steps, hooks);
  } catch (const ppo::NonFiniteLossError& e) {
    updates_csv->flush();
    evals_csv->flush();
    throw ppo::NonFiniteLossError(e.what(), last_good);
  }
  const curriculum::RewardWeights final_weights =
      outcome.updates.empty() ? curriculum::weights_for_update(spec.stage, spec.target_deception, planned, planned,
                                                               cfg.curriculum.ramp_fraction)
                              : outcome.updates.back().weights;
  outcome.checkpoint = dir / (spec.prefix + ".ckpt");
  outcome.checkpoint_hash = save_checkpoint(make_checkpoint(state, final_weights), outcome.checkpoint);
  outcome.final_report = metrics::evaluate(state.params, cfg.env, cfg.eval);
  write_report(outcome.final_report, dir / "report.txt", provenance,
               "checkpoint: " + outcome.checkpoint.filename().string() + "\ncheckpoint_hash: " +
                   outcome.checkpoint_hash + "\nstage: " + std::to_string(spec.stage) +
                   "\nw_cov: " + num(final_weights.coverage) + "\nw_dec: " + num(final_weights.deception) + "\n");
  write_episodes_csv(outcome.final_report, dir / "episodes.csv", provenance);
  log << spec.prefix << " final checkpoint " << outcome.checkpoint.string() << " (" << outcome.checkpoint_hash << ")\n";
  return outcome;
}

void write_plot_rows(const fs::path& path, const std::string& provenance,
                     const std::vector<std::pair<double, const metrics::MetricsReport*>>& rows) {
  OutFile f(path);
  f << provenance;
  f.line(kPlotHeader);
  for (const auto& [w, r] : rows) {
    f.line(join({num(w), std::to_string(r->n_good), num(r->bipartite_distance.mean), num(r->good_threshold_steps.mean),
                 num(r->target_distance.mean), num(r->adversary_threshold_steps.mean), num(r->target_select.mean)}));
  }
}

}  // namespace

fs::path resolve_output_dir(const RunConfig& config) {
  const char* env = std::getenv(kOutputDirEnv);
  if (env != nullptr && *env != '\0') return fs::path(env);
  return fs::path(config.output_dir);
}

std::string provenance_header(std::uint64_t seed, const std::string& config_hash) {
  return "# seed: " + std::to_string(seed) + "\n# config_hash: " + config_hash + "\n";
}

void write_episodes_csv(const metrics::MetricsReport& report, const fs::path& path, const std::string& provenance) {
  OutFile f(path);
  f << provenance;
  f.line("# eval_seed: " + std::to_string(report.seed));
  f.line(kEpisodesHeader);
  for (std::size_t k = 0; k < report.per_episode.size(); ++k) {
    const auto& e = report.per_episode[k];
    f.line(join({std::to_string(k), std::to_string(e.seed), num(e.bipartite_distance),
                 std::to_string(e.good_threshold_steps), num(e.target_distance),
                 std::to_string(e.adversary_threshold_steps), std::to_string(e.target_select)}));
  }
}

std::string format_report(const metrics::MetricsReport& r) {
  std::ostringstream s;
  auto row = [&](const char* name, const metrics::Stat& st) {
    s << std::left << std::setw(28) << name << std::right << std::setw(10) << fixed(st.mean, 4) << " +/- "
      << std::setw(8) << fixed(st.stddev, 4) << "\n";
  };
  s << "episodes: " << r.episodes << "\n";
  s << "eval_seed: " << r.seed << "\n";
  s << "n_good: " << r.n_good << "\n";
  row("bipartite_distance", r.bipartite_distance);
  row("good_threshold_steps", r.good_threshold_steps);
  row("target_distance", r.target_distance);
  row("adversary_threshold_steps", r.adversary_threshold_steps);
  row("target_select", r.target_select);
  return s.str();
}

void write_report(const metrics::MetricsReport& report, const fs::path& path, const std::string& provenance,
                  const std::string& extra) {
  OutFile f(path);
  f << provenance;
  f << extra;
  f << format_report(report);
}

StageOutcome run_stage1(const RunConfig& config, const fs::path& output, std::ostream& log) {
  validate(config);
  StageSpec spec;
  spec.config = config;
  spec.stage = 1;
  spec.prefix = "stage1";
  spec.steps = config.train.total_steps;
  ppo::TrainerState state;
  if (!config.resume.empty()) {
    const Checkpoint ck = load_checkpoint(config.resume);
    if (ck.stage != 1) throw ConfigError(0, "run.resume: '" + config.resume + "' is not a stage-1 checkpoint");
    if (!(ck.config.network == config.network)) {
      throw ConfigError(0, "run.resume: network settings differ from the checkpoint's");
    }
    state = ck.trainer;
    spec.parent_hash = checkpoint_hash(config.resume);
    spec.append_logs = true;
    spec.steps = config.train.total_steps > state.global_step ? config.train.total_steps - state.global_step : 0;
    log << "resuming from " << config.resume << " at step " << state.global_step << "\n";
  } else {
    state = ppo::TrainerState::fresh(config.network, config.train_config());
  }
  return train_stage(spec, std::move(state), output, log);
}

GridOutcome run_grid(const RunConfig& config, const fs::path& parent, const fs::path& output, std::ostream& log) {
  validate(config);
  if (parent.empty()) throw ConfigError(0, "run.stage1_checkpoint: no stage-1 checkpoint configured for the grid");
  if (!fs::exists(parent)) {
    throw ConfigError(0, "run.stage1_checkpoint: stage-1 checkpoint '" + parent.string() + "' does not exist");
  }
  const Checkpoint ck = load_checkpoint(parent);
  if (ck.stage != 1) throw ConfigError(0, "run.stage1_checkpoint: '" + parent.string() + "' is not a stage-1 checkpoint");
  GridOutcome grid;
  grid.parent_hash = checkpoint_hash(parent);
  log << "grid parent " << parent.string() << " (" << grid.parent_hash << ")\n";

  std::vector<std::size_t> sizes = config.curriculum.agent_schedule;
  if (sizes.empty()) sizes.push_back(config.env.n_good);
  for (std::size_t n : sizes) {
    for (double w : config.curriculum.stage2_deception_weights) {
      GridRow row;
      row.n_good = n;
      row.weights = curriculum::RewardWeights::from_deception(w);
      row.unstable = w >= curriculum::kUnstableDeceptionWeight;
      row.parent_hash = grid.parent_hash;
      row.init = n == ck.config.env.n_good ? std::string("stage1") : "transfer-from-" + std::to_string(ck.config.env.n_good);
      StageSpec spec;
      spec.config = config;
      spec.config.env.n_good = n;
      spec.config.network = ck.config.network;
      spec.config.resume.clear();
      spec.stage = 2;
      spec.target_deception = w;
      spec.steps = config.curriculum.stage2_steps;
      spec.prefix = "stage2";
      spec.parent_hash = grid.parent_hash;
      const fs::path dir = output / ("n" + std::to_string(n) + "-wdec" + fixed(w, 2));
      log << "grid row n_good " << n << " w_dec " << fixed(w, 2) << (row.unstable ? " (expected unstable)" : "")
          << " -> " << dir.string() << "\n";
      row.outcome = train_stage(spec, ck.trainer, dir, log);
      grid.rows.push_back(std::move(row));
    }
  }
  write_sensitivity(grid, output, provenance_header(config.seed, config_hash(config)));
  log << format_sensitivity_table(grid);
  return grid;
}

void run_train(const RunConfig& config, std::ostream& log) {
  validate(config);
  const fs::path output = resolve_output_dir(config);
  fs::create_directories(output);
  {
    OutFile f(output / "config.ini");
    f << provenance_header(config.seed, config_hash(config));
    f << serialize(config);
  }
  const StageOutcome s1 = run_stage1(config, output / "stage1", log);
  log << format_report(s1.final_report);
  if (config.mode == RunMode::Curriculum) run_grid(config, s1.checkpoint, output / "stage2", log);
}

std::string format_sensitivity_table(const GridOutcome& grid) {
  std::ostringstream s;
  auto cell = [](const metrics::Stat& st, int digits) { return fixed(st.mean, digits) + " +/- " + fixed(st.stddev, digits); };
  s << std::left << std::setw(6) << "w_cov" << std::setw(7) << "w_dec" << std::setw(4) << "N" << std::setw(18)
    << "init" << std::setw(22) << "bipartite distance" << std::setw(22) << "good threshold" << std::setw(22)
    << "target distance" << std::setw(22) << "adversary threshold" << std::setw(22) << "target select"
    << "note\n";
  for (const auto& r : grid.rows) {
    const auto& m = r.outcome.final_report;
    s << std::left << std::setw(6) << fixed(r.weights.coverage, 2) << std::setw(7) << fixed(r.weights.deception, 2)
      << std::setw(4) << r.n_good << std::setw(18) << r.init << std::setw(22) << cell(m.bipartite_distance, 3)
      << std::setw(22) << cell(m.good_threshold_steps, 1) << std::setw(22) << cell(m.target_distance, 3)
      << std::setw(22) << cell(m.adversary_threshold_steps, 1) << std::setw(22) << cell(m.target_select, 1)
      << (r.unstable ? "expected unstable" : "") << "\n";
  }
  s << "parent: " << grid.parent_hash << "\n";
  return s.str();
}

void write_sensitivity(const GridOutcome& grid, const fs::path& dir, const std::string& provenance) {
  OutFile csv(dir / "sensitivity.csv");
  csv << provenance;
  csv.line("# parent_hash: " + grid.parent_hash);
  csv.line(kSensitivityHeader);
  std::vector<std::pair<double, const metrics::MetricsReport*>> plot;
  for (const auto& r : grid.rows) {
    const auto& m = r.outcome.final_report;
    csv.line(join({num(r.weights.coverage), num(r.weights.deception), std::to_string(r.n_good), r.init,
                   std::to_string(m.episodes), num(m.bipartite_distance.mean), num(m.bipartite_distance.stddev),
                   num(m.good_threshold_steps.mean), num(m.good_threshold_steps.stddev), num(m.target_distance.mean),
                   num(m.target_distance.stddev), num(m.adversary_threshold_steps.mean),
                   num(m.adversary_threshold_steps.stddev), num(m.target_select.mean), num(m.target_select.stddev),
                   r.unstable ? "1" : "0", r.parent_hash, r.outcome.checkpoint_hash}));
    plot.emplace_back(r.weights.deception, &m);
  }
  OutFile txt(dir / "sensitivity.txt");
  txt << provenance;
  txt << format_sensitivity_table(grid);
  write_plot_rows(dir / "plot_data.csv", provenance, plot);
}

namespace {

metrics::EvalConfig apply(const metrics::EvalConfig& base, const EvalOverrides& o) {
  metrics::EvalConfig e = base;
  if (o.episodes) e.episodes = *o.episodes;
  if (o.seed) e.seed = *o.seed;
  if (e.episodes == 0) throw ConfigError(0, "--episodes must be positive");
  return e;
}

}  // namespace

metrics::MetricsReport run_eval(const fs::path& checkpoint, const EvalOverrides& overrides, const fs::path& output,
                                std::ostream& log) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const std::string hash = checkpoint_hash(checkpoint);
  env::EnvConfig ec = ck.config.env;
  if (overrides.n_good) ec.n_good = *overrides.n_good;
  const metrics::EvalConfig evc = apply(ck.config.eval, overrides);
  const metrics::MetricsReport report = metrics::evaluate(ck.trainer.params, ec, evc);
  const std::string provenance = provenance_header(ck.master_seed, config_hash(ck.config));
  write_report(report, output / "report.txt", provenance,
               "checkpoint: " + checkpoint.string() + "\ncheckpoint_hash: " + hash + "\nstage: " +
                   std::to_string(ck.stage) + "\nw_cov: " + num(ck.weights.coverage) + "\nw_dec: " +
                   num(ck.weights.deception) + "\n");
  write_episodes_csv(report, output / "episodes.csv", provenance);
  write_plot_rows(output / "plot_data.csv", provenance, {{ck.weights.deception, &report}});
  log << format_report(report);
  return report;
}

TransferOutcome run_transfer(const fs::path& checkpoint, std::size_t n_good, std::uint64_t finetune_steps,
                             const EvalOverrides& overrides, const fs::path& output, std::ostream& log) {
  if (n_good < 2) throw ConfigError(0, "--agents must be at least 2");
  const Checkpoint ck = load_checkpoint(checkpoint);
  const std::string hash = checkpoint_hash(checkpoint);
  RunConfig cfg = ck.config;
  const std::size_t source = cfg.env.n_good;
  cfg.env.n_good = n_good;
  cfg.resume.clear();
  const metrics::EvalConfig evc = apply(cfg.eval, overrides);
  cfg.eval = evc;
  const std::string provenance = provenance_header(cfg.seed, config_hash(cfg));
  const std::string path_note = "path: transfer from N=" + std::to_string(source) + " to N=" + std::to_string(n_good) +
                                "\nsource_checkpoint_hash: " + hash + "\n";

  TransferOutcome out;
  out.zero_shot = metrics::evaluate(ck.trainer.params, cfg.env, evc);
  write_report(out.zero_shot, output / "zero_shot" / "report.txt", provenance, path_note + "mode: zero-shot\n");
  write_episodes_csv(out.zero_shot, output / "zero_shot" / "episodes.csv", provenance);
  log << "zero-shot at N=" << n_good << "\n" << format_report(out.zero_shot);

  if (finetune_steps > 0) {
    StageSpec spec;
    spec.config = cfg;
    spec.stage = ck.stage;
    spec.target_deception = ck.weights.deception;
    spec.config.curriculum.ramp_fraction = 0.0;
    spec.steps = finetune_steps;
    spec.prefix = "finetune";
    spec.parent_hash = hash;
    const StageOutcome s = train_stage(spec, ck.trainer, output / "finetune", log);
    out.fine_tuned = s.final_report;
    out.checkpoint = s.checkpoint;
    write_report(s.final_report, output / "finetune" / "report.txt", provenance,
                 path_note + "mode: fine-tuned " + std::to_string(finetune_steps) + " steps\n");
    log << "fine-tuned at N=" << n_good << "\n" << format_report(s.final_report);
  }
  return out;
}

}  // namespace deception::harness
