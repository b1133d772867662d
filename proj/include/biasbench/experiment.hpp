#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "biasbench/config.hpp"
#include "biasbench/mdl.hpp"
#include "biasbench/model.hpp"
#include "biasbench/ppo.hpp"
#include "biasbench/pretrain.hpp"
#include "biasbench/reward.hpp"
#include "biasbench/stats.hpp"
#include "biasbench/task.hpp"

namespace bb {

struct PartitionStats {
  double mean_reward = 0.0;
  double std_reward = 0.0;  // sample std over prompts
};

struct EvalReport {
  std::string task;
  double p = 0.0;
  std::uint64_t seed = 0;
  std::array<PartitionStats, 4> partitions;  // indexed by quadrant_index
  bool converged = false;                    // T_neither mean >= threshold
  double rel_mdl = 0.0;
  double rel_mdl_std = 0.0;
  bool failed = false;  // tombstone for a condition that threw
  std::string error;
};

std::string eval_report_json(const EvalReport& report);
EvalReport parse_eval_report_json(const std::string& text);

// Produces one completion batch per call; lets tests evaluate fixed policies.
using CompletionSampler =
    std::function<std::vector<std::vector<int>>(const std::vector<std::vector<int>>& prompts,
                                                Rng& rng)>;

// One completion per prompt per sample round (temperature-1 sampling for the
// policy overload); the gate bit of each partition is its quadrant's t.
std::array<PartitionStats, 4> evaluate_with_sampler(const CompletionSampler& sampler,
                                                    const TestSet& test, const RewardSpec& spec,
                                                    int n_samples, Rng& rng);
std::array<PartitionStats, 4> evaluate(const PolicyModel& policy, const TestSet& test,
                                       const RewardSpec& spec, int n_samples, int completion_len,
                                       double temperature, Rng& rng);

/// Per-task artifacts shared by every condition: the pre-trained model and the
// MDL probe reports. Cached under cache_dir (checkpoints/, reports/) when one
// is given; recomputation is deterministic, so cache hits and fresh runs are
// interchangeable.
struct TaskArtifacts {
  PolicyModel pretrained;
  MdlReport mdl_t;
  MdlReport mdl_s;
  double rel_mdl = 0.0;
  double rel_mdl_std = 0.0;
  std::optional<PretrainResult> pretrain_log;  // only when freshly trained
};

TaskArtifacts prepare_task(const RunConfig& cfg, const std::string& task_name,
                           const std::string& cache_dir = "");

// The two halves of prepare_task, for commands that need only one of them.
// When pretrain_log is given and the model is freshly trained, the loss curve
// is stored there.
PolicyModel pretrained_model(const RunConfig& cfg, const std::string& task_name,
                             const std::string& cache_dir = "",
                             std::optional<PretrainResult>* pretrain_log = nullptr);
std::pair<MdlReport, MdlReport> probe_reports(const RunConfig& cfg, const std::string& task_name,
                                              const PolicyModel& model,
                                              const std::string& cache_dir = "");

/// Full pipeline for one (task, p, seed) condition: build datasets, PPO
// fine-tune a copy of the pre-trained model against the frozen reference,
// evaluate on the four test partitions.
EvalReport run_condition(const TaskArtifacts& artifacts, const std::string& task_name, double p,
                         std::uint64_t seed, const RunConfig& cfg,
                         TrainingLog* training_log = nullptr,
                         PolicyModel* trained_out = nullptr);

struct FilterResult {
  std::vector<EvalReport> kept;
  std::vector<EvalReport> discarded;
};

FilterResult filter_converged(const std::vector<EvalReport>& reports, double threshold);

struct SweepResult {
  std::vector<EvalReport> reports;  // (task, p, seed) order, tombstones included
  FilterResult filter;              // over non-failed reports
  FitResult fit;                    // reward vs ln(rel MDL) at p = 0
  bool fit_valid = false;           // false when too few points survived
  std::map<std::string, Correlation> evidence;  // per-task Spearman(p, T_s-only)
  std::map<std::string, std::pair<double, double>> rel_mdl;  // per-task (ratio, std)
};

// Runs every (task, p, seed) condition over a worker pool; individual
// failures become tombstone reports and the sweep continues. Results are
// merged in deterministic (task, p, seed) order, then filtered and fitted.
SweepResult sweep(const RunConfig& cfg, const std::string& cache_dir = "",
                  const std::function<void(const std::string&)>& progress = {});

// Logistic fit over converged p=0 runs: x = task rel MDL, y = run's mean
// reward across T_s-only and T_t-only. Needs >= 3 points.
FitResult fit_reward_vs_relmdl(const std::vector<EvalReport>& kept,
                               const std::map<std::string, std::pair<double, double>>& rel_mdl,
                               Rng& rng);

// Per-task Spearman of p against T_s-only reward over converged runs;
// undefined (defined=false) with fewer than 4 distinct p values.
std::map<std::string, Correlation> evidence_stats(const std::vector<EvalReport>& kept, Rng& rng);

std::string sweep_results_csv(const std::vector<EvalReport>& reports);
std::string filter_log_csv(const FilterResult& filter, double threshold);
std::string failures_csv(const std::vector<EvalReport>& reports);
std::string fits_json(const SweepResult& result);

/// (filename, svg) pairs: per-task reward-vs-p charts and the p=0
// reward-vs-relMDL scatter with the fitted curve.
std::vector<std::pair<std::string, std::string>> sweep_plots(const SweepResult& result);

}  // namespace bb
