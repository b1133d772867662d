#include "biasbench/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bb {

double mean(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean: empty vector");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::vector<double> ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> out(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based tie average
    for (std::size_t k = i; k <= j; ++k) out[order[k]] = avg;
    i = j + 1;
  }
  return out;
}

namespace {

bool is_constant(const std::vector<double>& v) {
  for (double x : v)
    if (x != v.front()) return false;
  return true;
}

double pearson_coefficient(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

Correlation pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("pearson: need two equal-length vectors of size >= 2");
  Correlation c;
  if (is_constant(x) || is_constant(y)) return c;
  c.coefficient = pearson_coefficient(x, y);
  c.defined = std::isfinite(c.coefficient);
  return c;
}

Correlation spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("spearman: need two equal-length vectors of size >= 2");
  Correlation c;
  if (is_constant(x) || is_constant(y)) return c;
  c.coefficient = pearson_coefficient(ranks(x), ranks(y));
  c.defined = std::isfinite(c.coefficient);
  return c;
}

Correlation permutation_test(const std::vector<double>& x, const std::vector<double>& y,
                             bool use_spearman, Rng& rng, int n_perm) {
  if (n_perm < 1) throw std::invalid_argument("permutation_test: n_perm must be >= 1");
  Correlation c = use_spearman ? spearman(x, y) : pearson(x, y);
  if (!c.defined) return c;
  // Spearman only depends on ranks, so permute precomputed ranks directly.
  std::vector<double> xs = use_spearman ? ranks(x) : x;
  std::vector<double> ys = use_spearman ? ranks(y) : y;
  const double observed = std::abs(c.coefficient);
  int hits = 0;
  for (int i = 0; i < n_perm; ++i) {
    rng.shuffle(ys);
    const double r = pearson_coefficient(xs, ys);
    if (std::isfinite(r) && std::abs(r) >= observed - 1e-12) ++hits;
  }
  c.p_value = static_cast<double>(hits + 1) / static_cast<double>(n_perm + 1);
  return c;
}

namespace {

struct IrlsFit {
  double a = 0.0, b = 0.0;
  bool converged = false;
};

IrlsFit irls(const std::vector<double>& u, const std::vector<double>& y, int max_iter) {
  const std::size_t n = u.size();
  double ymean = mean(y);
  ymean = std::clamp(ymean, 1e-6, 1.0 - 1e-6);
  IrlsFit fit;
  fit.a = std::log(ymean / (1.0 - ymean));
  fit.b = 0.0;
  for (int iter = 0; iter < max_iter; ++iter) {
    // Weighted least squares of the working response on [1, u].
    double s_w = 0.0, s_wu = 0.0, s_wuu = 0.0, s_wz = 0.0, s_wuz = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double eta = fit.a + fit.b * u[i];
      const double mu = std::clamp(sigmoid(eta), 1e-9, 1.0 - 1e-9);
      const double w = std::max(mu * (1.0 - mu), 1e-10);
      const double z = eta + (y[i] - mu) / w;
      s_w += w;
      s_wu += w * u[i];
      s_wuu += w * u[i] * u[i];
      s_wz += w * z;
      s_wuz += w * u[i] * z;
    }
    const double det = s_w * s_wuu - s_wu * s_wu;
    if (!std::isfinite(det) || std::abs(det) < 1e-14) return fit;
    const double a_new = (s_wuu * s_wz - s_wu * s_wuz) / det;
    const double b_new = (s_w * s_wuz - s_wu * s_wz) / det;
    if (!std::isfinite(a_new) || !std::isfinite(b_new)) return fit;
    const double delta = std::abs(a_new - fit.a) + std::abs(b_new - fit.b);
    fit.a = a_new;
    fit.b = b_new;
    if (delta < 1e-10) {
      fit.converged = true;
      return fit;
    }
  }
  return fit;
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace

FitResult logistic_fit(const std::vector<double>& x, const std::vector<double>& y, Rng& rng,
                       bool log_x, int n_boot, int max_iter) {
  if (x.size() != y.size()) throw std::invalid_argument("logistic_fit: length mismatch");
  if (x.size() < 3) throw std::invalid_argument("logistic_fit: need at least 3 points");
  for (double v : y)
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("logistic_fit: responses must lie in [0, 1]");
  std::vector<double> u(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (log_x && !(x[i] > 0.0))
      throw std::invalid_argument("logistic_fit: regressor must be positive for the log scale");
    u[i] = log_x ? std::log(x[i]) : x[i];
  }

  FitResult out;
  const IrlsFit point = irls(u, y, max_iter);
  out.intercept = point.a;
  out.slope = point.b;
  out.diverged = !point.converged;
  out.pearson_xy = permutation_test(u, y, false, rng, 10000);
  out.spearman_xy = permutation_test(u, y, true, rng, 10000);

  std::vector<double> slopes, intercepts;
  slopes.reserve(static_cast<std::size_t>(n_boot));
  intercepts.reserve(static_cast<std::size_t>(n_boot));
  std::vector<double> ub(u.size()), yb(u.size());
  for (int i = 0; i < n_boot; ++i) {
    for (std::size_t j = 0; j < u.size(); ++j) {
      const std::size_t k = rng.next_below(u.size());
      ub[j] = u[k];
      yb[j] = y[k];
    }
    const IrlsFit fb = irls(ub, yb, max_iter);
    if (fb.converged && std::isfinite(fb.a) && std::isfinite(fb.b)) {
      intercepts.push_back(fb.a);
      slopes.push_back(fb.b);
    }
  }
  if (!slopes.empty()) {
    out.slope_lo = percentile(slopes, 0.025);
    out.slope_hi = percentile(slopes, 0.975);
    out.intercept_lo = percentile(intercepts, 0.025);
    out.intercept_hi = percentile(intercepts, 0.975);
  } else {
    out.slope_lo = out.slope_hi = out.slope;
    out.intercept_lo = out.intercept_hi = out.intercept;
    out.diverged = true;
  }
  // Percentile bands must bracket the reported point estimate.
  out.slope_lo = std::min(out.slope_lo, out.slope);
  out.slope_hi = std::max(out.slope_hi, out.slope);
  out.intercept_lo = std::min(out.intercept_lo, out.intercept);
  out.intercept_hi = std::max(out.intercept_hi, out.intercept);
  return out;
}

}  // namespace bb
