#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "biasbench/rng.hpp"
#include "biasbench/stats.hpp"

using bb::Correlation;
using bb::Rng;

TEST_SUITE("stats") {

TEST_CASE("mean and sample std") {
  CHECK(bb::mean({1.0, 2.0, 3.0, 4.0}) == 2.5);
  CHECK_THROWS_AS(bb::mean({}), std::invalid_argument);
  CHECK(bb::sample_std({2, 4, 4, 4, 5, 5, 7, 9}) ==
        doctest::Approx(std::sqrt(32.0 / 7.0)).epsilon(1e-12));
  CHECK(bb::sample_std({5.0}) == 0.0);
  CHECK(bb::sample_std({}) == 0.0);
  CHECK(bb::sample_std({3.0, 3.0, 3.0}) == 0.0);
}

TEST_CASE("sigmoid") {
  CHECK(bb::sigmoid(0.0) == 0.5);
  CHECK(bb::sigmoid(10.0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(bb::sigmoid(-10.0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-4));
  for (double z : {-3.0, -0.5, 0.25, 2.0}) {
    CHECK(bb::sigmoid(z) + bb::sigmoid(-z) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("ranks average ties") {
  CHECK(bb::ranks({10.0, 20.0, 20.0, 30.0}) == std::vector<double>{1.0, 2.5, 2.5, 4.0});
  CHECK(bb::ranks({3.0, 1.0, 4.0, 1.0, 5.0}) ==
        std::vector<double>{3.0, 1.5, 4.0, 1.5, 5.0});
  CHECK(bb::ranks({7.0, 7.0, 7.0}) == std::vector<double>{2.0, 2.0, 2.0});
  CHECK(bb::ranks({}).empty());
}

TEST_CASE("pearson on exact lines") {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0};
  std::vector<double> y;
  for (double v : x) y.push_back(2.0 * v + 1.0);
  Correlation up = bb::pearson(x, y);
  CHECK(up.defined);
  CHECK(up.coefficient == 1.0);

  for (double& v : y) v = -v;
  Correlation down = bb::pearson(x, y);
  CHECK(down.defined);
  CHECK(down.coefficient == -1.0);

  Correlation flat = bb::pearson(x, {2.0, 2.0, 2.0, 2.0});
  CHECK_FALSE(flat.defined);
  CHECK(flat.coefficient == 0.0);
  CHECK(flat.p_value == 1.0);

  CHECK_THROWS_AS(bb::pearson({1.0}, {2.0}), std::invalid_argument);
  CHECK_THROWS_AS(bb::pearson({1.0, 2.0}, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("spearman frozen tie example") {
  Correlation c = bb::spearman({1.0, 2.0, 2.0, 4.0}, {3.0, 1.0, 4.0, 4.0});
  CHECK(c.defined);
  CHECK(c.coefficient == 0.5);

  Correlation mono = bb::spearman({1.0, 2.0, 3.0, 4.0}, {10.0, 100.0, 1000.0, 10000.0});
  CHECK(mono.coefficient == 1.0);
  CHECK_THROWS_AS(bb::spearman({1.0}, {2.0}), std::invalid_argument);
}

TEST_CASE("permutation test flags a strong monotone relation") {
  std::vector<double> x, y;
  Rng noise(3);
  for (int i = 1; i <= 20; ++i) {
    x.push_back(i);
    y.push_back(i + 0.01 * noise.next_normal());
  }
  Rng rng(4);
  Correlation c = bb::permutation_test(x, y, /*use_spearman=*/true, rng, 2000);
  CHECK(c.defined);
  CHECK(c.coefficient > 0.99);
  CHECK(c.p_value < 0.01);

  Rng rng2(5);
  Correlation cp = bb::permutation_test(x, y, /*use_spearman=*/false, rng2, 2000);
  CHECK(cp.p_value < 0.01);

  CHECK_THROWS_AS(bb::permutation_test(x, y, true, rng, 0), std::invalid_argument);

  Rng rng3(6);
  Correlation flat = bb::permutation_test(x, std::vector<double>(20, 1.0), true, rng3, 100);
  CHECK_FALSE(flat.defined);
  CHECK(flat.p_value == 1.0);
}

TEST_CASE("permutation p-values are uniform under the null") {
  // 100 independent null datasets; the p-value sample must pass a KS test
  // against Uniform(0,1) at the 0.001 level (critical D for n=100 is 0.195).
  Rng data_rng(11);
  Rng perm_rng(12);
  std::vector<double> ps;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(16), y(16);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = data_rng.next_normal();
      y[i] = data_rng.next_normal();
    }
    ps.push_back(bb::permutation_test(x, y, trial % 2 == 0, perm_rng, 2000).p_value);
  }
  std::sort(ps.begin(), ps.end());
  double d = 0.0;
  const double n = static_cast<double>(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - ps[i]));
    d = std::max(d, std::abs(ps[i] - static_cast<double>(i) / n));
  }
  CHECK(d < 0.195);
}

TEST_CASE("logistic fit recovers a known curve on the log scale") {
  // y = sigmoid(-1 + 2*ln(x)) plus mild noise.
  std::vector<double> x, y;
  Rng noise(21);
  for (int i = 0; i < 40; ++i) {
    const double u = -2.0 + 4.0 * static_cast<double>(i) / 39.0;
    x.push_back(std::exp(u));
    const double clean = bb::sigmoid(-1.0 + 2.0 * u);
    y.push_back(std::clamp(clean + 0.05 * noise.next_normal(), 0.001, 0.999));
  }
  Rng rng(22);
  bb::FitResult fit = bb::logistic_fit(x, y, rng);
  CHECK_FALSE(fit.diverged);
  CHECK(std::abs(fit.intercept - (-1.0)) < 0.2);
  CHECK(std::abs(fit.slope - 2.0) < 0.25);
  CHECK(fit.slope_lo <= fit.slope);
  CHECK(fit.slope_hi >= fit.slope);
  CHECK(fit.intercept_lo <= fit.intercept);
  CHECK(fit.intercept_hi >= fit.intercept);
  CHECK(fit.slope_lo > 0.5);  // the positive trend survives the bootstrap
  CHECK(fit.pearson_xy.defined);
  CHECK(fit.pearson_xy.coefficient > 0.9);
  CHECK(fit.pearson_xy.p_value < 0.01);
  CHECK(fit.spearman_xy.defined);
  CHECK(fit.spearman_xy.p_value < 0.01);
}

TEST_CASE("logistic fit on a linear scale handles negative regressors") {
  std::vector<double> x, y;
  Rng noise(31);
  for (int i = 0; i < 40; ++i) {
    const double u = -2.0 + 4.0 * static_cast<double>(i) / 39.0;
    x.push_back(u);
    const double clean = bb::sigmoid(-1.0 + 2.0 * u);
    y.push_back(std::clamp(clean + 0.05 * noise.next_normal(), 0.001, 0.999));
  }
  Rng rng(32);
  bb::FitResult fit = bb::logistic_fit(x, y, rng, /*log_x=*/false);
  CHECK_FALSE(fit.diverged);
  CHECK(std::abs(fit.intercept - (-1.0)) < 0.2);
  CHECK(std::abs(fit.slope - 2.0) < 0.25);
}

TEST_CASE("logistic fit is deterministic in the rng") {
  std::vector<double> x, y;
  for (int i = 1; i <= 12; ++i) {
    x.push_back(i);
    y.push_back(std::clamp(0.06 * i, 0.01, 0.99));
  }
  Rng rng_a(7);
  Rng rng_b(7);
  bb::FitResult a = bb::logistic_fit(x, y, rng_a, true, 200);
  bb::FitResult b = bb::logistic_fit(x, y, rng_b, true, 200);
  CHECK(a.slope == b.slope);
  CHECK(a.intercept == b.intercept);
  CHECK(a.slope_lo == b.slope_lo);
  CHECK(a.slope_hi == b.slope_hi);
  CHECK(a.pearson_xy.p_value == b.pearson_xy.p_value);
}

TEST_CASE("logistic fit input validation") {
  Rng rng(8);
  CHECK_THROWS_AS(bb::logistic_fit({1.0, 2.0}, {0.1, 0.2}, rng), std::invalid_argument);
  CHECK_THROWS_AS(bb::logistic_fit({1.0, 2.0, 3.0}, {0.1, 0.2}, rng), std::invalid_argument);
  CHECK_THROWS_AS(bb::logistic_fit({1.0, 2.0, 3.0}, {0.1, 1.2, 0.3}, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(bb::logistic_fit({1.0, 2.0, 3.0}, {0.1, -0.2, 0.3}, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(bb::logistic_fit({1.0, 0.0, 3.0}, {0.1, 0.2, 0.3}, rng),
                  std::invalid_argument);  // log scale needs positive x
  CHECK_NOTHROW(bb::logistic_fit({1.0, -2.0, 3.0, 4.0}, {0.1, 0.2, 0.3, 0.4}, rng,
                                 /*log_x=*/false, 50));
}

}  // TEST_SUITE("stats")
