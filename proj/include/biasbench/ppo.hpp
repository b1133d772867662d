#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "biasbench/adam.hpp"
#include "biasbench/model.hpp"
#include "biasbench/reward.hpp"
#include "biasbench/rng.hpp"
#include "biasbench/task.hpp"

namespace bb {

struct PpoConfig {
  int batch_size = 256;
  double lr = 1.41e-5;
  int ppo_epochs = 4;
  int total_ppo_epochs = 200;  // outer collect/update iterations
  double init_kl_coef = 0.2;
  double target_kl = 0.1;
  double vf_coef = 0.1;
  double horizon = 10000;
  double clip_eps = 0.2;
  double gamma = 1.0;
  double gae_lambda = 0.95;
  int minibatch_size = 64;
  int completion_len = 5;
  double temperature = 1.0;

  void validate() const;
  bool operator==(const PpoConfig&) const = default;
};

struct RolloutBatch {
  int prompt_len = 0;
  int completion_len = 0;
  std::vector<std::vector<int>> prompts;
  std::vector<std::vector<int>> completions;
  std::vector<std::vector<double>> logprobs;      // behavior policy, per token
  std::vector<std::vector<double>> ref_logprobs;  // frozen reference, per token
  std::vector<std::vector<double>> kl;            // logprobs - ref_logprobs
  std::vector<std::vector<double>> values;        // V(s_t) before each action
  std::vector<double> terminal_rewards;           // task reward R(x, y)
  std::vector<std::vector<double>> shaped;        // -beta*kl_t (+R at last token)

  std::size_t size() const { return prompts.size(); }
};

// One completion per sampled prompt (uniform with replacement from train_set).
// Per-token kl_t = logpi(a_t) - logpi_ref(a_t); the shaped reward stream is
// -beta*kl_t everywhere plus the gated task reward at the final token.
RolloutBatch collect_rollouts(const PolicyModel& policy, const PolicyModel& reference,
                              const std::vector<TrainExample>& train_set,
                              const RewardSpec& reward_spec, double beta, int batch_size,
                              const PpoConfig& cfg, Rng& rng);

// delta_t = r_t + gamma*V_{t+1} - V_t (V past the terminal state is 0);
// A_t = sum_k (gamma*lambda)^k delta_{t+k}; returns = A + V.
std::pair<std::vector<double>, std::vector<double>> compute_gae(const std::vector<double>& rewards,
                                                                const std::vector<double>& values,
                                                                double gamma, double lambda);

// In-place: subtract mean, divide by population std (guarded at 1e-8).
void whiten(std::vector<double>& v);

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double clip_frac = 0.0;
  double approx_kl = 0.0;  // mean(logp_old - logp_new) over tokens
};

// ppo_epochs passes of shuffled minibatches over the batch. Loss per token:
// ratio = exp(logp_new - logp_old); policy term -mean(min(ratio*A,
// clip(ratio)*A)); value term mean((V - returns)^2); total = policy +
// vf_coef*value; one Adam step per minibatch. Advantages are whitened across
// the whole batch before the passes. Stats are means over minibatch steps.
PpoStats ppo_update(PolicyModel& policy, Adam& opt, const RolloutBatch& batch,
                    const PpoConfig& cfg, Rng& rng);

// e = clip((observed_kl - target)/target, -0.2, 0.2);
// beta' = beta * (1 + e * batch_size / horizon).
double adaptive_kl_update(double beta, double observed_kl, const PpoConfig& cfg);

struct TrainingRow {
  int iteration = 0;
  double mean_reward = 0.0;
  double mean_kl = 0.0;  // mean over episodes of the episode's total KL
  double beta = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double clip_frac = 0.0;
};

struct TrainingLog {
  std::vector<TrainingRow> rows;
};

std::string training_log_csv(const TrainingLog& log);

// Full loop: collect -> GAE -> ppo_update -> adaptive_kl_update, for
// total_ppo_epochs iterations. The policy is updated in place; the reference
// stays frozen.
TrainingLog train(PolicyModel& policy, const PolicyModel& reference,
                  const std::vector<TrainExample>& train_set, const RewardSpec& reward_spec,
                  const PpoConfig& cfg, Rng& rng,
                  const std::function<void(const TrainingRow&)>& progress = {});

}  // namespace bb
