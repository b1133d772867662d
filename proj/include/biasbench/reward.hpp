#pragma once

#include <functional>
#include <vector>

#include "biasbench/task.hpp"

namespace bb {

// Strictly increasing adjacent pairs (y[i+1] > y[i]); ties count for neither
// direction.
int inc_pairs(const std::vector<int>& y);
int dec_pairs(const std::vector<int>& y);

// inc_pairs(y)/(|y|-1) when t(x)=1, else dec_pairs(y)/(|y|-1); with the default
// 5-token completions the denominator is 4. Range [0,1].
double synthetic_reward(const SyntheticTask& task, const std::vector<int>& x,
                        const std::vector<int>& y);

// Target-gated reward: which scorer runs depends only on the gate bit; the
// scorers themselves never see t.
struct RewardSpec {
  using Scorer = std::function<double(const std::vector<int>& x, const std::vector<int>& y)>;
  Scorer r0;  // applied when t(x) = 0
  Scorer r1;  // applied when t(x) = 1
};

RewardSpec synthetic_reward_spec();

// Dispatches on t_value; out-of-range scorer outputs are clamped to [0,1] with
// a warning on stderr (long sweeps should survive a misbehaving scorer).
double gated_reward(const RewardSpec& spec, int t_value, const std::vector<int>& x,
                    const std::vector<int>& y);

}  // namespace bb
