#include <doctest.h>

#include <cmath>
#include <vector>

#include "biasbench/reward.hpp"
#include "biasbench/rng.hpp"
#include "biasbench/task.hpp"

using bb::Rng;

namespace {

// Independent strict-pair counter used as the enumeration oracle.
int oracle_pairs(const std::vector<int>& y, bool increasing) {
  int n = 0;
  for (std::size_t i = 1; i < y.size(); ++i) {
    if (increasing && y[i] > y[i - 1]) ++n;
    if (!increasing && y[i] < y[i - 1]) ++n;
  }
  return n;
}

std::vector<int> nth_completion(int code) {
  std::vector<int> y(5);
  for (int i = 4; i >= 0; --i) {
    y[static_cast<std::size_t>(i)] = code % 10;
    code /= 10;
  }
  return y;
}

}  // namespace

TEST_SUITE("reward") {

TEST_CASE("pair counts on frozen examples") {
  CHECK(bb::inc_pairs({0, 1, 2, 3, 4}) == 4);
  CHECK(bb::dec_pairs({0, 1, 2, 3, 4}) == 0);
  CHECK(bb::inc_pairs({4, 3, 2, 1, 0}) == 0);
  CHECK(bb::dec_pairs({4, 3, 2, 1, 0}) == 4);
  CHECK(bb::inc_pairs({2, 2, 3, 1, 0}) == 1);  // ties count for neither side
  CHECK(bb::dec_pairs({2, 2, 3, 1, 0}) == 2);
  CHECK(bb::inc_pairs({7, 7, 7, 7, 7}) == 0);
  CHECK(bb::dec_pairs({7, 7, 7, 7, 7}) == 0);
  CHECK(bb::inc_pairs({5}) == 0);
  CHECK_THROWS_AS(bb::inc_pairs({}), std::invalid_argument);
}

TEST_CASE("reversal swaps the two counters") {
  Rng rng(60);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<int> y(5);
    for (int& d : y) d = static_cast<int>(rng.next_below(10));
    std::vector<int> rev(y.rbegin(), y.rend());
    CHECK(bb::inc_pairs(y) == bb::dec_pairs(rev));
  }
}

TEST_CASE("exhaustive enumeration over all length-5 completions") {
  // Every one of the 10^5 completions, against the independent oracle; the
  // reward total is an exact multiple of 1/4, so the sums compare exactly.
  double inc_total = 0.0, dec_total = 0.0;
  for (int code = 0; code < 100000; ++code) {
    const std::vector<int> y = nth_completion(code);
    const int inc = bb::inc_pairs(y);
    const int dec = bb::dec_pairs(y);
    REQUIRE(inc == oracle_pairs(y, true));
    REQUIRE(dec == oracle_pairs(y, false));
    inc_total += inc / 4.0;
    dec_total += dec / 4.0;
  }
  // 45 of 100 ordered digit pairs are strictly increasing, so a uniform
  // random completion scores 0.45 in expectation: 4 pairs x 0.45 / 4.
  CHECK(inc_total == 45000.0);
  CHECK(dec_total == 45000.0);
}

TEST_CASE("synthetic_reward dispatches on the target feature") {
  const bb::SyntheticTask task = bb::make_task("contains-1");
  const std::vector<int> with_t{1, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  const std::vector<int> without_t{3, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  const std::vector<int> up{0, 1, 2, 3, 4};
  const std::vector<int> down{9, 7, 5, 3, 1};
  CHECK(bb::synthetic_reward(task, with_t, up) == 1.0);
  CHECK(bb::synthetic_reward(task, with_t, down) == 0.0);
  CHECK(bb::synthetic_reward(task, without_t, up) == 0.0);
  CHECK(bb::synthetic_reward(task, without_t, down) == 1.0);
  CHECK(bb::synthetic_reward(task, with_t, {0, 5, 3, 7, 2}) == 0.5);
  CHECK_THROWS_AS(bb::synthetic_reward(task, with_t, {5}), std::invalid_argument);
}

TEST_CASE("gated_reward uses only the gate bit") {
  const bb::RewardSpec spec = bb::synthetic_reward_spec();
  const std::vector<int> x(10, 0);
  const std::vector<int> up{0, 1, 2, 3, 4};
  CHECK(bb::gated_reward(spec, 1, x, up) == 1.0);
  CHECK(bb::gated_reward(spec, 0, x, up) == 0.0);
  CHECK_THROWS_AS(bb::gated_reward(spec, 2, x, up), std::invalid_argument);
  CHECK_THROWS_AS(bb::gated_reward(bb::RewardSpec{}, 0, x, up), std::invalid_argument);
}

TEST_CASE("out-of-range scorer outputs are clamped") {
  bb::RewardSpec spec;
  spec.r0 = [](const std::vector<int>&, const std::vector<int>&) { return -0.5; };
  spec.r1 = [](const std::vector<int>&, const std::vector<int>&) { return 1.5; };
  CHECK(bb::gated_reward(spec, 0, {}, {}) == 0.0);
  CHECK(bb::gated_reward(spec, 1, {}, {}) == 1.0);
}

TEST_CASE("rewards always land in [0, 1]") {
  const bb::SyntheticTask task = bb::make_task("adj-dupl");
  Rng rng(61);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<int> x(10), y(5);
    for (int& d : x) d = static_cast<int>(rng.next_below(10));
    for (int& d : y) d = static_cast<int>(rng.next_below(10));
    const double r = bb::synthetic_reward(task, x, y);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
    CHECK(r * 4.0 == std::floor(r * 4.0));  // quarters only
  }
}

}  // TEST_SUITE("reward")
