#include "biasbench/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "biasbench/io.hpp"
#include "biasbench/tape.hpp"

namespace bb {

void PpoConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw std::invalid_argument(std::string("PpoConfig: ") + name + " must be positive");
  };
  positive(batch_size, "batch_size");
  positive(lr, "lr");
  positive(ppo_epochs, "ppo_epochs");
  positive(total_ppo_epochs, "total_ppo_epochs");
  positive(init_kl_coef, "init_kl_coef");
  positive(target_kl, "target_kl");
  positive(vf_coef, "vf_coef");
  positive(horizon, "horizon");
  positive(gamma, "gamma");
  positive(gae_lambda, "gae_lambda");
  positive(minibatch_size, "minibatch_size");
  positive(completion_len, "completion_len");
  positive(temperature, "temperature");
  if (!(clip_eps > 0.0 && clip_eps < 1.0))
    throw std::invalid_argument("PpoConfig: clip_eps must lie in (0, 1)");
}

namespace {

// Temperature-1 log-prob of column `pick` in one logits row, in double.
double row_logprob(const float* logits, std::size_t n, int pick) {
  double mx = logits[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, static_cast<double>(logits[j]));
  double denom = 0.0;
  for (std::size_t j = 0; j < n; ++j) denom += std::exp(static_cast<double>(logits[j]) - mx);
  return static_cast<double>(logits[static_cast<std::size_t>(pick)]) - mx - std::log(denom);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

RolloutBatch collect_rollouts(const PolicyModel& policy, const PolicyModel& reference,
                              const std::vector<TrainExample>& train_set,
                              const RewardSpec& reward_spec, double beta, int batch_size,
                              const PpoConfig& cfg, Rng& rng) {
  if (train_set.empty()) throw std::invalid_argument("collect_rollouts: empty training set");
  if (batch_size < 1) throw std::invalid_argument("collect_rollouts: batch_size must be >= 1");
  if (!(policy.cfg == reference.cfg))
    throw std::invalid_argument("collect_rollouts: policy and reference configs differ");

  RolloutBatch batch;
  batch.prompt_len = static_cast<int>(train_set[0].prompt.size());
  batch.completion_len = cfg.completion_len;
  const std::size_t B = static_cast<std::size_t>(batch_size);
  const std::size_t P = static_cast<std::size_t>(batch.prompt_len);
  const std::size_t L = static_cast<std::size_t>(batch.completion_len);
  const std::size_t T = P + L;

  std::vector<int> t_gate(B);
  batch.prompts.reserve(B);
  for (std::size_t b = 0; b < B; ++b) {
    const TrainExample& ex = train_set[rng.next_below(train_set.size())];
    if (ex.prompt.size() != P)
      throw std::invalid_argument("collect_rollouts: inconsistent prompt lengths in training set");
    batch.prompts.push_back(ex.prompt);
    t_gate[b] = quadrant_indicator(ex.quadrant).first;
  }

  std::vector<Sampled> sampled =
      sample_completions_batch(policy, batch.prompts, batch.completion_len, cfg.temperature, rng);

  std::vector<int> flat;
  flat.reserve(B * T);
  for (std::size_t b = 0; b < B; ++b) {
    flat.insert(flat.end(), batch.prompts[b].begin(), batch.prompts[b].end());
    flat.insert(flat.end(), sampled[b].tokens.begin(), sampled[b].tokens.end());
  }

  // Canonical per-token log-probs and values from one full-sequence forward of
  // each network; row P-1+t carries the distribution that produced action t.
  Tape pol_tape, ref_tape;
  Forward pol_fwd = forward(pol_tape, policy, flat, B, T, false);
  Forward ref_fwd = forward(ref_tape, reference, flat, B, T, false);
  if (pol_fwd.values < 0) throw std::invalid_argument("collect_rollouts: policy lacks a value head");
  const Tensor& pol_logits = pol_tape.value(pol_fwd.logits);
  const Tensor& ref_logits = ref_tape.value(ref_fwd.logits);
  const Tensor& pol_values = pol_tape.value(pol_fwd.values);
  const auto V = static_cast<std::size_t>(policy.cfg.vocab_size);

  batch.completions.resize(B);
  batch.logprobs.assign(B, std::vector<double>(L));
  batch.ref_logprobs.assign(B, std::vector<double>(L));
  batch.kl.assign(B, std::vector<double>(L));
  batch.values.assign(B, std::vector<double>(L));
  batch.terminal_rewards.resize(B);
  batch.shaped.assign(B, std::vector<double>(L));
  for (std::size_t b = 0; b < B; ++b) {
    batch.completions[b] = sampled[b].tokens;
    const double R =
        gated_reward(reward_spec, t_gate[b], batch.prompts[b], batch.completions[b]);
    batch.terminal_rewards[b] = R;
    for (std::size_t t = 0; t < L; ++t) {
      const std::size_t row = b * T + P - 1 + t;
      const int pick = batch.completions[b][t];
      const double lp = row_logprob(pol_logits.data.data() + row * V, V, pick);
      const double lp_ref = row_logprob(ref_logits.data.data() + row * V, V, pick);
      if (!std::isfinite(lp) || !std::isfinite(lp_ref))
        throw std::runtime_error("collect_rollouts: non-finite log-prob at episode " +
                                 std::to_string(b) + " token " + std::to_string(t));
      batch.logprobs[b][t] = lp;
      batch.ref_logprobs[b][t] = lp_ref;
      batch.kl[b][t] = lp - lp_ref;
      batch.values[b][t] = static_cast<double>(pol_values.data[row]);
      batch.shaped[b][t] = -beta * batch.kl[b][t] + (t + 1 == L ? R : 0.0);
    }
  }
  return batch;
}

std::pair<std::vector<double>, std::vector<double>> compute_gae(const std::vector<double>& rewards,
                                                                const std::vector<double>& values,
                                                                double gamma, double lambda) {
  if (rewards.size() != values.size())
    throw std::invalid_argument("compute_gae: rewards and values lengths differ (" +
                                std::to_string(rewards.size()) + " vs " +
                                std::to_string(values.size()) + ")");
  if (rewards.empty()) throw std::invalid_argument("compute_gae: empty episode");
  const std::size_t T = rewards.size();
  std::vector<double> adv(T), ret(T);
  double acc = 0.0;
  for (std::size_t i = T; i-- > 0;) {
    const double v_next = i + 1 < T ? values[i + 1] : 0.0;
    const double delta = rewards[i] + gamma * v_next - values[i];
    acc = delta + gamma * lambda * acc;
    adv[i] = acc;
    ret[i] = acc + values[i];
  }
  return {std::move(adv), std::move(ret)};
}

void whiten(std::vector<double>& v) {
  if (v.empty()) return;
  const double m = mean_of(v);
  double var = 0.0;
  for (double x : v) var += (x - m) * (x - m);
  var /= static_cast<double>(v.size());
  const double sd = std::max(std::sqrt(var), 1e-8);
  for (double& x : v) x = (x - m) / sd;
}

PpoStats ppo_update(PolicyModel& policy, Adam& opt, const RolloutBatch& batch,
                    const PpoConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t B = batch.size();
  if (B == 0) throw std::invalid_argument("ppo_update: empty batch");
  const std::size_t P = static_cast<std::size_t>(batch.prompt_len);
  const std::size_t L = static_cast<std::size_t>(batch.completion_len);
  const std::size_t T = P + L;

  // Per-episode GAE, then one whitening pass across every token in the batch.
  std::vector<double> adv_flat;
  std::vector<double> ret_flat;
  adv_flat.reserve(B * L);
  ret_flat.reserve(B * L);
  for (std::size_t b = 0; b < B; ++b) {
    auto [adv, ret] = compute_gae(batch.shaped[b], batch.values[b], cfg.gamma, cfg.gae_lambda);
    adv_flat.insert(adv_flat.end(), adv.begin(), adv.end());
    ret_flat.insert(ret_flat.end(), ret.begin(), ret.end());
  }
  whiten(adv_flat);

  std::vector<std::size_t> order(B);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t mb = std::min<std::size_t>(static_cast<std::size_t>(cfg.minibatch_size), B);

  PpoStats stats;
  std::size_t n_steps = 0;
  double clip_hits = 0.0, clip_total = 0.0, kl_sum = 0.0;
  for (int epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < B; start += mb) {
      const std::size_t count = std::min(mb, B - start);
      std::vector<int> tokens;
      tokens.reserve(count * T);
      Tensor lp_old({count * L});
      Tensor adv_t({count * L});
      Tensor ret_t({count * L});
      std::vector<std::size_t> logit_idx(count * L), value_idx(count * L);
      const auto V = static_cast<std::size_t>(policy.cfg.vocab_size);
      for (std::size_t e = 0; e < count; ++e) {
        const std::size_t b = order[start + e];
        tokens.insert(tokens.end(), batch.prompts[b].begin(), batch.prompts[b].end());
        tokens.insert(tokens.end(), batch.completions[b].begin(), batch.completions[b].end());
        for (std::size_t t = 0; t < L; ++t) {
          const std::size_t k = e * L + t;
          const std::size_t row = e * T + P - 1 + t;
          logit_idx[k] = row * V + static_cast<std::size_t>(batch.completions[b][t]);
          value_idx[k] = row;
          lp_old.data[k] = static_cast<float>(batch.logprobs[b][t]);
          adv_t.data[k] = static_cast<float>(adv_flat[b * L + t]);
          ret_t.data[k] = static_cast<float>(ret_flat[b * L + t]);
        }
      }

      Tape tape;
      Forward fwd = forward(tape, policy, tokens, count, T, true);
      if (fwd.values < 0) throw std::invalid_argument("ppo_update: policy lacks a value head");
      NodeId lp_new = tape.gather(tape.log_softmax(fwd.logits), logit_idx);
      NodeId ratio = tape.exp(tape.sub(lp_new, tape.leaf(lp_old)));
      NodeId adv_node = tape.leaf(adv_t);
      NodeId surr = tape.minimum(
          tape.mul(ratio, adv_node),
          tape.mul(tape.clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), adv_node));
      NodeId policy_loss = tape.scale(tape.mean(surr), -1.0);
      NodeId v_pred = tape.gather(fwd.values, value_idx);
      NodeId value_loss = tape.mean(tape.square(tape.sub(v_pred, tape.leaf(ret_t))));
      NodeId total = tape.add(policy_loss, tape.scale(value_loss, cfg.vf_coef));

      const double total_value = tape.scalar(total);
      if (!std::isfinite(total_value)) {
        std::ostringstream dump;
        dump << "ppo_update: non-finite loss (policy " << tape.scalar(policy_loss) << ", value "
             << tape.scalar(value_loss) << ") in minibatch at episode offset " << start
             << "; first episodes:";
        for (std::size_t e = 0; e < std::min<std::size_t>(count, 4); ++e) {
          const std::size_t b = order[start + e];
          dump << " [" << prompt_str(batch.prompts[b]) << "|" << prompt_str(batch.completions[b])
               << " R=" << batch.terminal_rewards[b] << "]";
        }
        throw std::runtime_error(dump.str());
      }

      tape.backward(total);
      std::vector<const Tensor*> grads;
      grads.reserve(fwd.param_nodes.size());
      for (NodeId id : fwd.param_nodes) grads.push_back(&tape.grad(id));
      opt.step(policy, grads);

      stats.policy_loss += tape.scalar(policy_loss);
      stats.value_loss += tape.scalar(value_loss);
      const Tensor& ratio_v = tape.value(ratio);
      const Tensor& lp_new_v = tape.value(lp_new);
      for (std::size_t k = 0; k < ratio_v.numel(); ++k) {
        clip_total += 1.0;
        if (ratio_v.data[k] < 1.0 - cfg.clip_eps || ratio_v.data[k] > 1.0 + cfg.clip_eps)
          clip_hits += 1.0;
        kl_sum += static_cast<double>(lp_old.data[k]) - static_cast<double>(lp_new_v.data[k]);
      }
      ++n_steps;
    }
  }
  const double steps = static_cast<double>(n_steps);
  stats.policy_loss /= steps;
  stats.value_loss /= steps;
  stats.clip_frac = clip_total > 0.0 ? clip_hits / clip_total : 0.0;
  stats.approx_kl = clip_total > 0.0 ? kl_sum / clip_total : 0.0;
  return stats;
}

double adaptive_kl_update(double beta, double observed_kl, const PpoConfig& cfg) {
  if (!(beta > 0.0)) throw std::invalid_argument("adaptive_kl_update: beta must be positive");
  double e = (observed_kl - cfg.target_kl) / cfg.target_kl;
  e = std::clamp(e, -0.2, 0.2);
  return beta * (1.0 + e * static_cast<double>(cfg.batch_size) / cfg.horizon);
}

std::string training_log_csv(const TrainingLog& log) {
  std::ostringstream csv;
  csv << "iteration,mean_reward,mean_kl,beta,policy_loss,value_loss,clip_frac\n";
  for (const TrainingRow& r : log.rows) {
    csv << r.iteration << "," << format_double(r.mean_reward) << "," << format_double(r.mean_kl)
        << "," << format_double(r.beta) << "," << format_double(r.policy_loss) << ","
        << format_double(r.value_loss) << "," << format_double(r.clip_frac) << "\n";
  }
  return csv.str();
}

TrainingLog train(PolicyModel& policy, const PolicyModel& reference,
                  const std::vector<TrainExample>& train_set, const RewardSpec& reward_spec,
                  const PpoConfig& cfg, Rng& rng,
                  const std::function<void(const TrainingRow&)>& progress) {
  cfg.validate();
  if (!(policy.cfg == reference.cfg))
    throw std::invalid_argument("train: policy and reference configs differ");
  Adam opt(policy, AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  TrainingLog log;
  log.rows.reserve(static_cast<std::size_t>(cfg.total_ppo_epochs));
  double beta = cfg.init_kl_coef;
  for (int iter = 0; iter < cfg.total_ppo_epochs; ++iter) {
    Rng iter_rng = rng.child("iter", static_cast<std::uint64_t>(iter));
    Rng collect_rng = iter_rng.child("collect");
    Rng update_rng = iter_rng.child("update");
    RolloutBatch batch = collect_rollouts(policy, reference, train_set, reward_spec, beta,
                                          cfg.batch_size, cfg, collect_rng);
    PpoStats stats = ppo_update(policy, opt, batch, cfg, update_rng);
    TrainingRow row;
    row.iteration = iter;
    row.mean_reward = mean_of(batch.terminal_rewards);
    std::vector<double> episode_kl(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b)
      episode_kl[b] = std::accumulate(batch.kl[b].begin(), batch.kl[b].end(), 0.0);
    row.mean_kl = mean_of(episode_kl);
    row.beta = beta;
    row.policy_loss = stats.policy_loss;
    row.value_loss = stats.value_loss;
    row.clip_frac = stats.clip_frac;
    log.rows.push_back(row);
    beta = adaptive_kl_update(beta, row.mean_kl, cfg);
    if (progress) progress(row);
  }
  return log;
}

}  // namespace bb
