#pragma once

#include <vector>

#include "biasbench/rng.hpp"

namespace bb {

double mean(const std::vector<double>& v);
double sample_std(const std::vector<double>& v);  // n-1 denominator; 0 for n < 2
double sigmoid(double z);

// Tie-averaged ranks, 1-based.
std::vector<double> ranks(const std::vector<double>& v);

struct Correlation {
  double coefficient = 0.0;
  double p_value = 1.0;
  bool defined = false;  // false when either side is constant
};

Correlation pearson(const std::vector<double>& x, const std::vector<double>& y);
Correlation spearman(const std::vector<double>& x, const std::vector<double>& y);

// Two-sided permutation p-value: p = (#{|rho_perm| >= |rho_obs|} + 1)/(n_perm
// + 1), permuting y. Works for either correlation via `use_spearman`.
Correlation permutation_test(const std::vector<double>& x, const std::vector<double>& y,
                             bool use_spearman, Rng& rng, int n_perm = 10000);

struct FitResult {
  double intercept = 0.0;
  double slope = 0.0;
  double intercept_lo = 0.0, intercept_hi = 0.0;
  double slope_lo = 0.0, slope_hi = 0.0;  // bootstrap 95% bands, contain the estimate
  bool diverged = false;
  Correlation pearson_xy;
  Correlation spearman_xy;
};

// Fits y = sigmoid(a + b*u) by iteratively reweighted least squares on
// fractional responses y in [0,1], where u = ln(x) when log_x (default) else
// x itself. 95% bands from `n_boot` bootstrap resamples over points.
// Non-convergence after max_iter sets the diverged flag on the last iterate.
FitResult logistic_fit(const std::vector<double>& x, const std::vector<double>& y, Rng& rng,
                       bool log_x = true, int n_boot = 1000, int max_iter = 100);

}  // namespace bb
