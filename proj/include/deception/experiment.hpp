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

// Experiment drivers behind the command-line tool: stage-1 training, the
// stage-2 sensitivity grid, team-size transfer and checkpoint evaluation.
//
// Every file written here starts with comment lines carrying the master seed
// and the config hash (CSV, text reports) or embeds both (checkpoints).

#ifndef DECEPTION_EXPERIMENT_HPP
#define DECEPTION_EXPERIMENT_HPP

#include "deception/checkpoint.hpp"
#include "deception/config.hpp"
#include "deception/metrics.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace deception::harness {

/// Name of the environment variable that overrides run.output_dir.
inline constexpr const char* kOutputDirEnv = "DECEPTION_OUTPUT_DIR";

/// run.output_dir, or the environment override when set and non-empty.
std::filesystem::path resolve_output_dir(const RunConfig& config);

/// Approximate-KL level above which an update is logged as a warning.
inline constexpr double kKlWarning = 0.05;

// CSV schemas, format version 1. Columns never change order within a version.
inline constexpr const char* kUpdatesHeader =
    "update,global_step,stage,w_cov,w_dec,policy_loss,value_loss,entropy,approx_kl,clip_fraction,grad_norm,"
    "mean_team_reward,mean_coverage,mean_deception,episode_return";
inline constexpr const char* kEvalsHeader = "update,global_step,bipartite_distance,good_threshold_steps,converged";
inline constexpr const char* kStepsHeader = "update,env,t,w_cov,w_dec,coverage,deception,weighted_total";
inline constexpr const char* kEpisodesHeader =
    "episode,seed,bipartite_distance,good_threshold_steps,target_distance,adversary_threshold_steps,target_select";
inline constexpr const char* kSensitivityHeader =
    "w_cov,w_dec,n_good,init,episodes,bipartite_mean,bipartite_std,good_threshold_mean,good_threshold_std,"
    "target_distance_mean,target_distance_std,adversary_threshold_mean,adversary_threshold_std,target_select_mean,"
    "target_select_std,unstable,parent_hash,checkpoint_hash";
inline constexpr const char* kPlotHeader =
    "w_dec,n_good,bipartite_distance,good_threshold_steps,target_distance,adversary_threshold_steps,target_select";

/// Lines "# key: value" identifying the run behind an artifact.
std::string provenance_header(std::uint64_t seed, const std::string& config_hash);

void write_episodes_csv(const metrics::MetricsReport& report, const std::filesystem::path& path,
                        const std::string& provenance);
/// Human-readable report with mean and std per metric.
std::string format_report(const metrics::MetricsReport& report);
void write_report(const metrics::MetricsReport& report, const std::filesystem::path& path,
                  const std::string& provenance, const std::string& extra = {});

struct StageOutcome {
  std::filesystem::path checkpoint;
  std::string checkpoint_hash;
  std::vector<ppo::UpdateRecord> updates;
  std::vector<double> eval_history;  // bipartite distance per periodic evaluation
  bool converged = false;
  metrics::MetricsReport final_report;
};

/// Stage 1 (coverage only) in `output`, resuming from run.resume when set.
/// Writes periodic checkpoints, updates.csv, evals.csv, the final stage1.ckpt
/// and its evaluation.
StageOutcome run_stage1(const RunConfig& config, const std::filesystem::path& output, std::ostream& log);

struct GridRow {
  curriculum::RewardWeights weights;
  std::size_t n_good = 0;
  std::string init;  // "stage1" or "transfer-from-N"
  bool unstable = false;
  std::string parent_hash;
  StageOutcome outcome;
};

struct GridOutcome {
  std::string parent_hash;
  std::vector<GridRow> rows;
};

/// One stage-2 fine-tune per (team size, deception weight), each started
/// from the same stage-1 checkpoint. Throws ConfigError when that checkpoint
/// is not set or does not exist.
GridOutcome run_grid(const RunConfig& config, const std::filesystem::path& parent, const std::filesystem::path& output,
                     std::ostream& log);

/// Stage 1 then the grid, per run.mode.
void run_train(const RunConfig& config, std::ostream& log);

std::string format_sensitivity_table(const GridOutcome& grid);
void write_sensitivity(const GridOutcome& grid, const std::filesystem::path& dir, const std::string& provenance);

struct EvalOverrides {
  std::optional<std::size_t> episodes;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_good;
};

/// Evaluates a checkpoint; writes report.txt, episodes.csv and plot data
/// (one row per metric against the checkpoint's deception weight).
metrics::MetricsReport run_eval(const std::filesystem::path& checkpoint, const EvalOverrides& overrides,
                                const std::filesystem::path& output, std::ostream& log);

struct TransferOutcome {
  metrics::MetricsReport zero_shot;
  std::optional<metrics::MetricsReport> fine_tuned;
  std::filesystem::path checkpoint;  // fine-tuned checkpoint, when any
};

/// Evaluates a checkpoint at another team size and optionally fine-tunes it
/// there for `finetune_steps` environment steps with the checkpoint's weights.
TransferOutcome run_transfer(const std::filesystem::path& checkpoint, std::size_t n_good, std::uint64_t finetune_steps,
                             const EvalOverrides& overrides, const std::filesystem::path& output, std::ostream& log);

}  // namespace deception::harness

#endif  // DECEPTION_EXPERIMENT_HPP
