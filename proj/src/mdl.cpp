#include "biasbench/mdl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>
#include <json.hpp>

#include "biasbench/io.hpp"
#include "biasbench/tape.hpp"

namespace bb {

void ProbeConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("ProbeConfig: steps must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("ProbeConfig: lr must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("ProbeConfig: weight_decay must be >= 0");
  if (!(prob_floor > 0.0 && prob_floor < 1.0))
    throw std::invalid_argument("ProbeConfig: prob_floor must lie in (0, 1)");
}

std::vector<int> block_schedule(int n) {
  if (n < 4) throw std::invalid_argument("block_schedule: n must be >= 4, got " + std::to_string(n));
  const int t1 = std::max(2, static_cast<int>(std::ceil(0.001 * n)));
  std::vector<int> bounds{t1};
  while (bounds.back() < n) bounds.push_back(std::min(2 * bounds.back(), n));
  return bounds;
}

namespace {

// Linear 2-class probe on double-precision copies of the representations.
struct Probe {
  Eigen::MatrixXd W;  // d x 2
  Eigen::Vector2d b;

  explicit Probe(Eigen::Index d) : W(Eigen::MatrixXd::Zero(d, 2)), b(Eigen::Vector2d::Zero()) {}

  void fit(const Eigen::MatrixXd& X, const std::vector<int>& y, int rows,
           const ProbeConfig& cfg) {
    const auto m = static_cast<Eigen::Index>(rows);
    Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(m, 2);
    for (Eigen::Index i = 0; i < m; ++i) Y(i, y[static_cast<std::size_t>(i)]) = 1.0;
    const auto Xm = X.topRows(m);
    for (int step = 0; step < cfg.steps; ++step) {
      Eigen::MatrixXd Z = (Xm * W).rowwise() + b.transpose();
      Eigen::MatrixXd P = (Z.colwise() - Z.rowwise().maxCoeff()).array().exp();
      P.array().colwise() /= P.rowwise().sum().array();
      Eigen::MatrixXd G = (P - Y) / static_cast<double>(m);
      W -= cfg.lr * (Xm.transpose() * G + cfg.weight_decay * W);
      b -= cfg.lr * G.colwise().sum().transpose();
    }
  }

  // Total -log2 p(y|x) over rows [from, to).
  double code_bits(const Eigen::MatrixXd& X, const std::vector<int>& y, int from, int to,
                   double floor) const {
    double bits = 0.0;
    for (int i = from; i < to; ++i) {
      const Eigen::Vector2d z = W.transpose() * X.row(i).transpose() + b;
      const double mx = z.maxCoeff();
      const double denom = std::exp(z(0) - mx) + std::exp(z(1) - mx);
      const double p = std::exp(z(y[static_cast<std::size_t>(i)]) - mx) / denom;
      bits += -std::log2(std::max(p, floor));
    }
    return bits;
  }
};

}  // namespace

double prequential_mdl(const std::vector<std::vector<float>>& representations,
                       const std::vector<int>& labels, const std::vector<int>& schedule,
                       const ProbeConfig& cfg, std::uint64_t seed,
                       std::vector<double>* block_bits) {
  cfg.validate();
  const std::size_t n = representations.size();
  if (n != labels.size())
    throw std::invalid_argument("prequential_mdl: representations and labels lengths differ");
  if (schedule.empty() || schedule.back() != static_cast<int>(n))
    throw std::invalid_argument("prequential_mdl: schedule must end at n");
  for (std::size_t i = 1; i < schedule.size(); ++i)
    if (schedule[i] <= schedule[i - 1])
      throw std::invalid_argument("prequential_mdl: schedule must be strictly increasing");
  for (int y : labels)
    if (y != 0 && y != 1) throw std::invalid_argument("prequential_mdl: labels must be 0/1");
  const std::size_t d = representations[0].size();
  for (const auto& r : representations)
    if (r.size() != d)
      throw std::invalid_argument("prequential_mdl: representation dims differ");

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(perm);

  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& src = representations[perm[i]];
    for (std::size_t j = 0; j < d; ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = src[j];
    y[i] = labels[perm[i]];
  }

  Probe probe(static_cast<Eigen::Index>(d));
  double total = static_cast<double>(schedule[0]);  // uniform 1-bit code for block 1
  if (block_bits) block_bits->push_back(total);
  for (std::size_t i = 0; i + 1 < schedule.size(); ++i) {
    const int from = schedule[i];
    const int to = schedule[i + 1];
    probe.fit(X, y, from, cfg);
    const double probe_cost = probe.code_bits(X, y, from, to, cfg.prob_floor);
    const double uniform_cost = static_cast<double>(to - from);
    const double cost = 1.0 + std::min(probe_cost, uniform_cost);
    total += cost;
    if (block_bits) block_bits->push_back(cost);
  }
  return total;
}

namespace {

std::pair<Quadrant, Quadrant> probe_classes(const std::string& feature) {
  if (feature == "target") return {Quadrant::s_only, Quadrant::both};
  if (feature == "spurious") return {Quadrant::neither, Quadrant::s_only};
  throw std::invalid_argument("feature_mdl: feature must be 'target' or 'spurious', got '" +
                              feature + "'");
}

}  // namespace

MdlReport feature_mdl(const PolicyModel& model, const SyntheticTask& task,
                      const std::string& feature, int n, int seeds, Rng& rng,
                      const ProbeConfig& cfg) {
  cfg.validate();
  if (n < 4 || n % 2 != 0)
    throw std::invalid_argument("feature_mdl: n must be even and >= 4, got " + std::to_string(n));
  if (seeds < 1) throw std::invalid_argument("feature_mdl: seeds must be >= 1");
  auto [class0, class1] = probe_classes(feature);

  Rng data_rng = rng.child("probe-data");
  std::vector<std::vector<int>> prompts;
  std::vector<int> labels;
  prompts.reserve(static_cast<std::size_t>(n));
  labels.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n / 2; ++i) {
    prompts.push_back(sample_quadrant(task, class0, data_rng));
    labels.push_back(0);
  }
  for (int i = 0; i < n / 2; ++i) {
    prompts.push_back(sample_quadrant(task, class1, data_rng));
    labels.push_back(1);
  }

  // Final-layer-norm state at the last prompt token, extracted in batches.
  const std::size_t d = static_cast<std::size_t>(model.cfg.d_model);
  const std::size_t plen = static_cast<std::size_t>(task.prompt_len);
  std::vector<std::vector<float>> reps(prompts.size(), std::vector<float>(d));
  const std::size_t chunk = 256;
  for (std::size_t start = 0; start < prompts.size(); start += chunk) {
    const std::size_t count = std::min(chunk, prompts.size() - start);
    std::vector<int> flat;
    flat.reserve(count * plen);
    for (std::size_t i = 0; i < count; ++i)
      flat.insert(flat.end(), prompts[start + i].begin(), prompts[start + i].end());
    Tape tape;
    Forward fwd = forward(tape, model, flat, count, plen, false);
    const Tensor& h = tape.value(fwd.hidden.back());
    for (std::size_t i = 0; i < count; ++i) {
      const float* row = h.data.data() + (i * plen + plen - 1) * d;
      std::copy_n(row, d, reps[start + i].begin());
    }
  }

  const std::vector<int> schedule = block_schedule(n);
  MdlReport report;
  report.task = task.name;
  report.feature = feature;
  report.per_seed_bits.reserve(static_cast<std::size_t>(seeds));
  for (int k = 0; k < seeds; ++k) {
    Rng seed_rng = rng.child("probe-seed", static_cast<std::uint64_t>(k));
    report.per_seed_bits.push_back(
        prequential_mdl(reps, labels, schedule, cfg, seed_rng.next_u64()));
  }
  const double mean = std::accumulate(report.per_seed_bits.begin(), report.per_seed_bits.end(), 0.0) /
                      static_cast<double>(seeds);
  double var = 0.0;
  for (double b : report.per_seed_bits) var += (b - mean) * (b - mean);
  report.mean_bits = mean;
  report.std_bits = seeds > 1 ? std::sqrt(var / static_cast<double>(seeds - 1)) : 0.0;
  return report;
}

std::pair<double, double> relative_mdl(const MdlReport& report_s, const MdlReport& report_t) {
  if (report_s.mean_bits == 0.0 || report_t.mean_bits == 0.0)
    throw std::invalid_argument("relative_mdl: zero mean codelength");
  const double r = report_s.mean_bits / report_t.mean_bits;
  const double cs = report_s.std_bits / report_s.mean_bits;
  const double ct = report_t.std_bits / report_t.mean_bits;
  return {r, std::abs(r) * std::sqrt(cs * cs + ct * ct)};
}

std::string mdl_report_json(const MdlReport& report) {
  nlohmann::json j;
  j["task"] = report.task;
  j["feature"] = report.feature;
  j["per_seed_bits"] = report.per_seed_bits;
  j["mean_bits"] = report.mean_bits;
  j["std_bits"] = report.std_bits;
  return j.dump(2);
}

MdlReport parse_mdl_report_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  MdlReport report;
  report.task = j.at("task").get<std::string>();
  report.feature = j.at("feature").get<std::string>();
  report.per_seed_bits = j.at("per_seed_bits").get<std::vector<double>>();
  report.mean_bits = j.at("mean_bits").get<double>();
  report.std_bits = j.at("std_bits").get<double>();
  return report;
}

std::string relative_mdl_csv_header() {
  return "task,mdl_s,mdl_s_std,mdl_t,mdl_t_std,rel_mdl,rel_mdl_std\n";
}

std::string relative_mdl_csv_row(const std::string& task, const MdlReport& report_s,
                                 const MdlReport& report_t) {
  auto [r, sd] = relative_mdl(report_s, report_t);
  return task + "," + format_double(report_s.mean_bits) + "," + format_double(report_s.std_bits) +
         "," + format_double(report_t.mean_bits) + "," + format_double(report_t.std_bits) + "," +
         format_double(r) + "," + format_double(sd) + "\n";
}

}  // namespace bb
