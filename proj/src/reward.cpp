#include "biasbench/reward.hpp"

#include <atomic>
#include <cstdio>
#include <stdexcept>

namespace bb {

namespace {

void require_completion(const std::vector<int>& y, const char* who) {
  if (y.empty()) throw std::invalid_argument(std::string(who) + ": empty completion");
}

}  // namespace

int inc_pairs(const std::vector<int>& y) {
  require_completion(y, "inc_pairs");
  int n = 0;
  for (std::size_t i = 0; i + 1 < y.size(); ++i)
    if (y[i + 1] > y[i]) ++n;
  return n;
}

int dec_pairs(const std::vector<int>& y) {
  require_completion(y, "dec_pairs");
  int n = 0;
  for (std::size_t i = 0; i + 1 < y.size(); ++i)
    if (y[i + 1] < y[i]) ++n;
  return n;
}

double synthetic_reward(const SyntheticTask& task, const std::vector<int>& x,
                        const std::vector<int>& y) {
  if (y.size() < 2)
    throw std::invalid_argument("synthetic_reward: completion needs at least 2 tokens");
  const double denom = static_cast<double>(y.size() - 1);
  return task.target(x) ? inc_pairs(y) / denom : dec_pairs(y) / denom;
}

RewardSpec synthetic_reward_spec() {
  RewardSpec spec;
  spec.r1 = [](const std::vector<int>&, const std::vector<int>& y) {
    if (y.size() < 2) throw std::invalid_argument("reward scorer: completion needs >= 2 tokens");
    return inc_pairs(y) / static_cast<double>(y.size() - 1);
  };
  spec.r0 = [](const std::vector<int>&, const std::vector<int>& y) {
    if (y.size() < 2) throw std::invalid_argument("reward scorer: completion needs >= 2 tokens");
    return dec_pairs(y) / static_cast<double>(y.size() - 1);
  };
  return spec;
}

double gated_reward(const RewardSpec& spec, int t_value, const std::vector<int>& x,
                    const std::vector<int>& y) {
  if (t_value != 0 && t_value != 1)
    throw std::invalid_argument("gated_reward: gate must be 0 or 1, got " +
                                std::to_string(t_value));
  if (!spec.r0 || !spec.r1) throw std::invalid_argument("gated_reward: missing scorer");
  const double raw = t_value ? spec.r1(x, y) : spec.r0(x, y);
  if (raw < 0.0 || raw > 1.0) {
    static std::atomic<int> warned{0};
    if (warned.fetch_add(1) < 10)
      std::fprintf(stderr, "gated_reward: scorer output %g outside [0,1]; clamping\n", raw);
    return raw < 0.0 ? 0.0 : 1.0;
  }
  return raw;
}

}  // namespace bb
