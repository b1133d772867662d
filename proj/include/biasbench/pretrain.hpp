#pragma once

#include <functional>
#include <string>
#include <vector>

#include "biasbench/model.hpp"
#include "biasbench/rng.hpp"
#include "biasbench/task.hpp"

namespace bb {

struct PretrainConfig {
  int steps = 2000;
  int batch_size = 256;
  double lr = 3e-4;
  void validate() const;
  bool operator==(const PretrainConfig&) const = default;
};

struct PretrainResult {
  std::vector<double> loss_curve;  // mean next-token cross-entropy per step, nats
};

// Next-token language-model training on prompts drawn from the task's
// balanced quadrant mixture (all four quadrants equally likely — unlabeled
// exposure to the prompt distribution, not the RL training split). The model
// is updated in place. Aborts when the loss exceeds twice its initial value
// for 100 consecutive steps.
PretrainResult pretrain_lm(PolicyModel& model, const SyntheticTask& task,
                           const PretrainConfig& cfg, Rng& rng,
                           const std::function<void(int, double)>& progress = {});

std::string pretrain_log_csv(const PretrainResult& result);

}  // namespace bb
