// Acceptance suite: nine numbered end-to-end checks, one [PASS]/[FAIL] line
// each, exit code = number of failures. Heavy stages (pre-training, probes,
// the PPO sweep) cache their artifacts under --work, so an interrupted run
// resumes where it stopped instead of recomputing.
//
//   bb_acceptance --work <dir> [--only 1,4,9]
//
// Criteria:
//   1 autodiff gradient checks      finite differences on every primitive + full model
//   2 reward oracle                 exhaustive enumeration + untrained-policy mean
//   3 dataset composition           exact quadrant counts over the (task, p, n) grid
//   4 MDL probe sanity              random labels incompressible, planted feature cheap
//   5 MDL ordering and ratio        per-task MDL(t) ordering; contains-1 relative MDL
//   6 learnability gap              contains-1 vs first-last test rewards at p = 0.1
//   7 extractability correlation    logistic fit at p = 0 + per-task Spearman(p, T_s-only)
//   8 bitwise reproducibility       rerun every subcommand, byte-compare CSV/JSON
//   9 convergence filter accounting injected non-converged runs excluded and logged

#include <malloc.h>
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "biasbench/config.hpp"
#include "biasbench/experiment.hpp"
#include "biasbench/io.hpp"
#include "biasbench/mdl.hpp"
#include "biasbench/model.hpp"
#include "biasbench/reward.hpp"
#include "biasbench/rng.hpp"
#include "biasbench/stats.hpp"
#include "biasbench/tape.hpp"
#include "biasbench/task.hpp"

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

const Clock::time_point g_start = Clock::now();

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string stamp() {
  const int s = static_cast<int>(seconds_since(g_start));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%d:%02d:%02d", s / 3600, (s / 60) % 60, s % 60);
  return buf;
}

void note(const std::string& line) {
  std::fprintf(stderr, "  [%s] %s\n", stamp().c_str(), line.c_str());
  std::fflush(stderr);
}

std::string fmt(double v, const char* spec = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------
// Criterion 1: autodiff gradient checks.
// ---------------------------------------------------------------------------

bb::Tensor random_tensor(std::vector<std::size_t> shape, bb::Rng& rng, double lo = 0.5,
                         double hi = 1.5) {
  bb::Tensor t(std::move(shape));
  for (float& x : t.data) {
    double v = lo + (hi - lo) * rng.next_double();
    if (rng.next_below(2)) v = -v;
    x = static_cast<float>(v);
  }
  return t;
}

Outcome criterion_gradients() {
  const Clock::time_point t0 = Clock::now();
  constexpr double kPrimitiveTol = 1e-4;
  constexpr double kModelTol = 1e-3;
  bb::Rng rng(2024);

  int instances = 0;
  double worst_primitive = 0.0;
  std::string worst_name = "none";
  auto check = [&](const std::string& name, const std::function<bb::NodeId(bb::Tape&, bb::NodeId)>& f,
                   const bb::Tensor& x) {
    const double err = bb::grad_check(f, x, 5e-3);
    ++instances;
    if (err > worst_primitive) {
      worst_primitive = err;
      worst_name = name;
    }
  };

  const std::size_t r = 2 + rng.next_below(3);  // rows 2..4
  const std::size_t c = 3 + rng.next_below(4);  // cols 3..6
  const bb::Tensor a = random_tensor({r, c}, rng);
  const bb::Tensor b = random_tensor({r, c}, rng);
  const bb::Tensor w = random_tensor({r, c}, rng);
  const bb::Tensor bias = random_tensor({c}, rng);

  using bb::NodeId;
  using bb::Tape;
  check("add", [&](Tape& t, NodeId in) { return t.sum(t.add(in, t.leaf(b))); }, a);
  check("sub", [&](Tape& t, NodeId in) { return t.sum(t.sub(t.leaf(a), in)); }, b);
  check("mul", [&](Tape& t, NodeId in) { return t.sum(t.mul(in, t.leaf(b))); }, a);
  check("add_bias/x", [&](Tape& t, NodeId in) { return t.sum(t.add_bias(in, t.leaf(bias))); }, a);
  check("add_bias/bias", [&](Tape& t, NodeId in) { return t.sum(t.add_bias(t.leaf(a), in)); },
        bias);
  const bb::Tensor m1 = random_tensor({3, 4}, rng);
  const bb::Tensor m2 = random_tensor({4, 2}, rng);
  check("matmul/a", [&](Tape& t, NodeId in) { return t.sum(t.matmul(in, t.leaf(m2))); }, m1);
  check("matmul/b", [&](Tape& t, NodeId in) { return t.sum(t.matmul(t.leaf(m1), in)); }, m2);
  const bb::Tensor table = random_tensor({5, 3}, rng);
  check("embed",
        [&](Tape& t, NodeId in) { return t.sum(t.embed(in, {4, 0, 4, 2, 1})); }, table);
  const bb::Tensor gain = random_tensor({c}, rng);
  check("layer_norm/x",
        [&](Tape& t, NodeId in) { return t.sum(t.layer_norm(in, t.leaf(gain), t.leaf(bias))); },
        a);
  check("layer_norm/gain",
        [&](Tape& t, NodeId in) {
          return t.sum(t.mul(t.layer_norm(t.leaf(a), in, t.leaf(bias)), t.leaf(w)));
        },
        gain);
  check("layer_norm/bias",
        [&](Tape& t, NodeId in) {
          return t.sum(t.mul(t.layer_norm(t.leaf(a), t.leaf(gain), in), t.leaf(w)));
        },
        bias);
  check("gelu", [&](Tape& t, NodeId in) { return t.sum(t.gelu(in)); }, a);
  check("exp", [&](Tape& t, NodeId in) { return t.sum(t.exp(t.scale(in, 0.5))); }, a);
  check("square", [&](Tape& t, NodeId in) { return t.mean(t.square(in)); }, a);
  check("scale", [&](Tape& t, NodeId in) { return t.sum(t.scale(in, -1.7)); }, a);
  check("clamp", [&](Tape& t, NodeId in) { return t.sum(t.clamp(in, -2.0, 2.0)); }, a);
  check("minimum", [&](Tape& t, NodeId in) { return t.sum(t.minimum(in, t.leaf(b))); }, a);
  std::vector<std::size_t> idx;
  for (int i = 0; i < 7; ++i) idx.push_back(rng.next_below(a.numel()));
  check("gather", [&](Tape& t, NodeId in) { return t.sum(t.gather(in, idx)); }, a);
  check("softmax",
        [&](Tape& t, NodeId in) { return t.sum(t.mul(t.softmax(in), t.leaf(w))); }, a);
  check("log_softmax",
        [&](Tape& t, NodeId in) { return t.sum(t.mul(t.log_softmax(in), t.leaf(w))); }, a);
  std::vector<int> labels(r);
  for (std::size_t i = 0; i < r; ++i) labels[i] = static_cast<int>(rng.next_below(c));
  labels[0] = -1;  // one masked row
  check("cross_entropy",
        [&](Tape& t, NodeId in) { return t.cross_entropy(in, labels); }, a);
  const bb::Tensor qkv = random_tensor({2 * 4, 3 * 8}, rng);
  check("causal_attention",
        [&](Tape& t, NodeId in) { return t.sum(t.causal_attention(in, 2, 4, 2)); }, qkv);
  check("mean", [&](Tape& t, NodeId in) { return t.mean(t.mul(in, t.leaf(w))); }, a);
  check("sum", [&](Tape& t, NodeId in) { return t.sum(t.mul(in, t.leaf(w))); }, a);

  // Full transformer loss: every parameter tensor, a few coordinates each,
  // against central finite differences. One config exercises the value head
  // through a composite loss; the second runs deeper without one.
  double worst_model = 0.0;
  auto model_check = [&](const bb::ModelConfig& cfg, std::uint64_t seed, bool with_value) {
    bb::PolicyModel m = bb::init_model(cfg, seed);
    std::vector<int> tokens(2 * 3);
    for (int& tok : tokens) tok = static_cast<int>(rng.next_below(cfg.vocab_size));
    std::vector<int> lab(tokens.size());
    for (std::size_t i = 0; i < lab.size(); ++i)
      lab[i] = static_cast<int>(rng.next_below(cfg.vocab_size));
    lab[2] = -1;
    auto loss_of = [&](Tape& t) {
      bb::Forward f = bb::forward(t, m, tokens, 2, 3, true);
      bb::NodeId loss = t.cross_entropy(f.logits, lab);
      if (with_value) loss = t.add(loss, t.scale(t.mean(t.square(f.values)), 0.1));
      return std::pair<bb::NodeId, bb::Forward>(loss, f);
    };
    Tape t;
    auto [loss, f] = loss_of(t);
    t.backward(loss);
    bb::Rng pick(seed + 1);
    for (std::size_t pi = 0; pi < m.params.size(); ++pi) {
      const bb::Tensor& g = t.grad(f.param_nodes[pi]);
      bb::Tensor& wt = m.params[pi].second;
      for (int rep = 0; rep < 3; ++rep) {
        const std::size_t k = pick.next_below(wt.numel());
        const float keep = wt.data[k];
        const double eps = 1e-2;
        auto loss_at = [&](double v) {
          wt.data[k] = static_cast<float>(v);
          Tape t2;
          auto [l2, f2] = loss_of(t2);
          (void)f2;
          return t2.scalar(l2);
        };
        const double up = loss_at(keep + eps);
        const double down = loss_at(keep - eps);
        wt.data[k] = keep;
        const double numeric = (up - down) / (2.0 * eps);
        const double analytic = g.data[k];
        const double rel = std::abs(analytic - numeric) /
                           std::max(1e-8, std::abs(analytic) + std::abs(numeric));
        worst_model = std::max(worst_model, rel);
      }
    }
    ++instances;
  };
  bb::ModelConfig small;
  small.vocab_size = 7;
  small.n_layers = 1;
  small.d_model = 16;
  small.n_heads = 2;
  small.d_ff = 32;
  small.max_seq_len = 8;
  small.value_head = true;
  model_check(small, 41, true);
  bb::ModelConfig deeper = small;
  deeper.vocab_size = 9;
  deeper.n_layers = 2;
  deeper.d_model = 24;
  deeper.n_heads = 3;
  deeper.d_ff = 48;
  deeper.value_head = false;
  model_check(deeper, 42, false);

  const double secs = seconds_since(t0);
  const bool pass = worst_primitive < kPrimitiveTol && worst_model < kModelTol &&
                    instances >= 20 && secs < 60.0;
  return {pass, "max primitive rel err " + fmt(worst_primitive, "%.2e") + " at " + worst_name +
                    " (tol 1e-4), full-model rel err " + fmt(worst_model, "%.2e") +
                    " (tol 1e-3), " + std::to_string(instances) + " instances (need >= 20), " +
                    fmt(secs, "%.1f") + " s (limit 60 s)"};
}

// ---------------------------------------------------------------------------
// Criterion 2: reward oracle.
// ---------------------------------------------------------------------------

Outcome criterion_reward() {
  const bb::SyntheticTask task = bb::make_task("contains-1");
  const bb::RewardSpec spec = bb::synthetic_reward_spec();
  const std::vector<int> prompt_t1 = {1, 0, 3, 4, 5, 6, 7, 8, 9, 0};  // target present
  const std::vector<int> prompt_t0 = {0, 0, 3, 4, 5, 6, 7, 8, 9, 0};  // target absent

  long long mismatches = 0;
  long long sum_inc = 0;
  long long sum_dec = 0;
  std::vector<int> y(5);
  for (int n = 0; n < 100000; ++n) {
    int v = n;
    for (int i = 0; i < 5; ++i) {
      y[i] = v % 10;
      v /= 10;
    }
    int inc = 0;
    int dec = 0;
    for (int i = 0; i < 4; ++i) {
      if (y[i + 1] > y[i]) ++inc;
      if (y[i + 1] < y[i]) ++dec;
    }
    if (bb::inc_pairs(y) != inc || bb::dec_pairs(y) != dec) ++mismatches;
    if (bb::synthetic_reward(task, prompt_t1, y) != inc / 4.0) ++mismatches;
    if (bb::synthetic_reward(task, prompt_t0, y) != dec / 4.0) ++mismatches;
    if (bb::gated_reward(spec, 1, prompt_t1, y) != inc / 4.0) ++mismatches;
    if (bb::gated_reward(spec, 0, prompt_t0, y) != dec / 4.0) ++mismatches;
    sum_inc += inc;
    sum_dec += dec;
  }
  const double mean_inc = static_cast<double>(sum_inc) / (4.0 * 100000.0);
  const double mean_dec = static_cast<double>(sum_dec) / (4.0 * 100000.0);

  // Untrained policy: fresh random init, 10^4 sampled episodes.
  note("criterion 2: sampling 10000 episodes from an untrained desk-scale model");
  bb::PolicyModel model = bb::init_model(bb::desk_scale_config(), 20240817ULL);
  bb::Rng rng(411);
  bb::Rng data_rng = rng.child("prompts");
  const std::vector<bb::TrainExample> pool = bb::build_training_set(task, 0.1, 10000, data_rng);
  double total = 0.0;
  int episodes = 0;
  const int chunk = 250;
  for (int start = 0; start < 10000; start += chunk) {
    std::vector<std::vector<int>> prompts;
    prompts.reserve(chunk);
    for (int i = start; i < start + chunk; ++i) prompts.push_back(pool[i].prompt);
    bb::Rng srng = rng.child("sample", static_cast<std::uint64_t>(start));
    const std::vector<bb::Sampled> out = bb::sample_completions_batch(model, prompts, 5, 1.0, srng);
    for (int i = 0; i < chunk; ++i) {
      total += bb::synthetic_reward(task, prompts[i], out[i].tokens);
      ++episodes;
    }
  }
  const double untrained = total / episodes;

  const bool pass = mismatches == 0 && sum_inc == 180000 && sum_dec == 180000 &&
                    std::abs(mean_inc - 0.45) < 1e-12 && std::abs(mean_dec - 0.45) < 1e-12 &&
                    std::abs(untrained - 0.45) <= 0.05;
  return {pass, "exhaustive 10^5 completions: " + std::to_string(mismatches) +
                    " mismatches (need 0), uniform mean inc " + fmt(mean_inc, "%.6f") + " / dec " +
                    fmt(mean_dec, "%.6f") + " (expected 0.45 exactly), untrained-policy mean " +
                    fmt(untrained, "%.4f") + " over " + std::to_string(episodes) +
                    " episodes (window 0.45 +- 0.05)"};
}

// ---------------------------------------------------------------------------
// Criterion 3: dataset composition.
// ---------------------------------------------------------------------------

Outcome criterion_composition() {
  const std::vector<int> sizes = {16, 64, 1024, 4096};
  const std::vector<double> ps = {0.0, 0.01, 0.05, 0.1, 0.25, 0.5};
  bb::Rng rng(31);
  long long checked = 0;
  int grids = 0;
  for (const std::string& name : bb::synthetic_task_names()) {
    const bb::SyntheticTask task = bb::make_task(name);
    for (double p : ps) {
      for (int n : sizes) {
        bb::Rng grid_rng = rng.child(name + "-train", static_cast<std::uint64_t>(grids));
        const std::vector<bb::TrainExample> set = bb::build_training_set(task, p, n, grid_rng);
        if (static_cast<int>(set.size()) != n)
          return {false, name + " p=" + fmt(p) + " n=" + std::to_string(n) + ": size " +
                             std::to_string(set.size())};
        long long count[4] = {0, 0, 0, 0};
        for (const bb::TrainExample& ex : set) {
          const auto [t, s] = bb::eval_features(task, ex.prompt);
          const bb::Quadrant q = bb::quadrant_from(t != 0, s != 0);
          if (q != ex.quadrant)
            return {false, name + ": example labeled " +
                               bb::quadrant_name(ex.quadrant) + " but features say " +
                               bb::quadrant_name(q)};
          ++count[bb::quadrant_index(q)];
        }
        const long long s_only = std::lround(p * n);
        const long long rem = n - s_only;
        const long long both = rem / 2;
        const long long neither = rem - both;
        const long long want[4] = {s_only, 0, both, neither};
        for (const bb::Quadrant q : bb::kQuadrants) {
          const std::size_t i = bb::quadrant_index(q);
          if (count[i] != want[i])
            return {false, name + " p=" + fmt(p) + " n=" + std::to_string(n) + ": " +
                               bb::quadrant_name(q) + " count " + std::to_string(count[i]) +
                               " != " + std::to_string(want[i])};
        }
        checked += n;
        ++grids;
      }
    }
    // Test sets: every quadrant filled exactly, features verified.
    bb::Rng test_rng = rng.child(name + "-test");
    const bb::TestSet test = bb::build_test_set(task, 64, test_rng);
    for (const bb::Quadrant q : bb::kQuadrants) {
      const auto& prompts = test.per_quadrant[bb::quadrant_index(q)];
      if (prompts.size() != 64)
        return {false, name + " test " + bb::quadrant_name(q) + ": " +
                           std::to_string(prompts.size()) + " prompts != 64"};
      const auto [qt, qs] = bb::quadrant_indicator(q);
      for (const std::vector<int>& prompt : prompts) {
        const auto [t, s] = bb::eval_features(task, prompt);
        if (t != qt || s != qs)
          return {false, name + " test " + bb::quadrant_name(q) + ": feature mismatch"};
        ++checked;
      }
    }
  }
  return {true, std::to_string(grids) + " training grids (4 tasks x 6 p x 4 n) and 4 test sets " +
                    "exact: round(p*n) s-only, zero t-only, remainder split both/neither; " +
                    std::to_string(checked) + " examples verified"};
}

// ---------------------------------------------------------------------------
// Criterion 4: MDL probe sanity.
// ---------------------------------------------------------------------------

Outcome criterion_mdl_sanity() {
  const Clock::time_point t0 = Clock::now();
  const int n = 1024;
  const int d = 128;
  bb::Rng rng(53);
  const std::vector<int> schedule = bb::block_schedule(n);

  bb::Rng rand_rng = rng.child("random");
  std::vector<std::vector<float>> reps(n, std::vector<float>(d));
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) reps[i][j] = static_cast<float>(rand_rng.next_normal());
    labels[i] = static_cast<int>(rand_rng.next_below(2));
  }
  const double random_bits = bb::prequential_mdl(reps, labels, schedule, bb::ProbeConfig{}, 9901);

  bb::Rng plant_rng = rng.child("planted");
  std::vector<double> w(d);
  double norm = 0.0;
  for (double& wi : w) {
    wi = plant_rng.next_normal();
    norm += wi * wi;
  }
  norm = std::sqrt(norm);
  std::vector<std::vector<float>> planted(n, std::vector<float>(d));
  std::vector<int> planted_labels(n);
  for (int i = 0; i < n; ++i) {
    double margin = 0.0;
    do {
      margin = 0.0;
      for (int j = 0; j < d; ++j) {
        planted[i][j] = static_cast<float>(plant_rng.next_normal());
        margin += w[j] * planted[i][j];
      }
      margin /= norm;
    } while (std::abs(margin) < 1.0);  // unit margin along the planted direction
    planted_labels[i] = margin > 0.0 ? 1 : 0;
  }
  const double planted_bits =
      bb::prequential_mdl(planted, planted_labels, schedule, bb::ProbeConfig{}, 9902);

  const double secs = seconds_since(t0);
  const bool pass = random_bits >= 0.95 * n && planted_bits < 0.3 * n && secs < 300.0;
  return {pass, "random labels " + fmt(random_bits, "%.1f") + " bits (need >= " +
                    fmt(0.95 * n, "%.1f") + "), planted separable feature " +
                    fmt(planted_bits, "%.1f") + " bits (need < " + fmt(0.3 * n, "%.1f") + "), " +
                    fmt(secs, "%.1f") + " s (limit 300 s)"};
}

// ---------------------------------------------------------------------------
// Criterion 5: MDL ordering and contains-1 ratio.
// ---------------------------------------------------------------------------

Outcome criterion_mdl_ordering(const bb::RunConfig& cfg, const std::string& work) {
  const std::vector<std::string> order = {"contains-1", "prefix-dupl", "adj-dupl", "first-last"};
  std::vector<double> bits;
  double ratio = 0.0;
  double ratio_std = 0.0;
  double probe_secs = 0.0;
  for (const std::string& name : order) {
    const Clock::time_point tp = Clock::now();
    const bb::PolicyModel model = bb::pretrained_model(cfg, name, work);
    note("criterion 5: " + name + " model ready (" + fmt(seconds_since(tp), "%.0f") + " s)");
    const Clock::time_point tq = Clock::now();
    const auto [mdl_t, mdl_s] = bb::probe_reports(cfg, name, model, work);
    probe_secs += seconds_since(tq);
    bits.push_back(mdl_t.mean_bits);
    if (name == "contains-1") std::tie(ratio, ratio_std) = bb::relative_mdl(mdl_s, mdl_t);
    note("criterion 5: " + name + " MDL(t) " + fmt(mdl_t.mean_bits, "%.1f") + " bits, MDL(s) " +
         fmt(mdl_s.mean_bits, "%.1f") + " bits");
  }
  const bool ordered = bits[0] < bits[1] && bits[1] < bits[2] && bits[2] < bits[3];
  const bool in_window = ratio >= 0.75 && ratio <= 1.3;
  const bool in_time = probe_secs < 1800.0;
  std::string detail = "MDL(t) bits";
  for (std::size_t i = 0; i < order.size(); ++i)
    detail += (i ? " < " : " ") + order[i] + "=" + fmt(bits[i], "%.1f");
  detail += ordered ? " (ordering holds over 5-seed means)" : " (ORDERING VIOLATED)";
  detail += "; contains-1 relative MDL " + fmt(ratio, "%.3f") + " +- " + fmt(ratio_std, "%.3f") +
            (in_window ? " inside" : " OUTSIDE") + " [0.75, 1.3]; probe stage " +
            fmt(probe_secs, "%.0f") + " s (limit 1800 s)";
  return {ordered && in_window && in_time, detail};
}

// ---------------------------------------------------------------------------
// Criteria 6 + 7: the PPO sweep and its statistics.
// ---------------------------------------------------------------------------

// Mean over converged seeds of a partition's mean reward at (task, p);
// n_kept reports how many seeds survived the filter.
double kept_mean(const std::vector<bb::EvalReport>& kept, const std::string& task, double p,
                 bb::Quadrant q, int* n_kept) {
  double total = 0.0;
  int n = 0;
  for (const bb::EvalReport& r : kept) {
    if (r.task == task && r.p == p) {
      total += r.partitions[bb::quadrant_index(q)].mean_reward;
      ++n;
    }
  }
  *n_kept = n;
  return n > 0 ? total / n : 0.0;
}

std::pair<Outcome, Outcome> criteria_sweep(const bb::RunConfig& cfg, const std::string& work) {
  const Clock::time_point t0 = Clock::now();
  const bb::SweepResult sw = bb::sweep(cfg, work, [](const std::string& line) { note(line); });
  const double secs = seconds_since(t0);

  // Persist the same artifacts the sweep subcommand writes, for inspection.
  const bb::RunDir dir(work);
  dir.init();
  bb::atomic_write_file(dir.logs() + "/sweep_results.csv", bb::sweep_results_csv(sw.reports));
  bb::atomic_write_file(dir.logs() + "/filter_log.csv", bb::filter_log_csv(sw.filter, cfg.threshold));
  bb::atomic_write_file(dir.logs() + "/failures.csv", bb::failures_csv(sw.reports));
  bb::atomic_write_file(dir.reports() + "/fits.json", bb::fits_json(sw));
  for (const auto& [name, svg] : bb::sweep_plots(sw))
    bb::atomic_write_file(dir.plots() + "/" + name, svg);

  const double minutes_per_cond = sw.reports.empty() ? 0.0 : secs / 60.0 / sw.reports.size();
  note("sweep finished: " + std::to_string(sw.reports.size()) + " conditions in " +
       fmt(secs / 60.0, "%.1f") + " min (" + fmt(minutes_per_cond, "%.1f") +
       " min/condition incl. cache hits)");

  // Criterion 6: learnability gap at p = 0.1.
  Outcome c6;
  {
    int n_c1s = 0, n_c1t = 0, n_flt = 0;
    const double c1_s = kept_mean(sw.filter.kept, "contains-1", 0.1, bb::Quadrant::s_only, &n_c1s);
    const double c1_t = kept_mean(sw.filter.kept, "contains-1", 0.1, bb::Quadrant::t_only, &n_c1t);
    const double fl_t = kept_mean(sw.filter.kept, "first-last", 0.1, bb::Quadrant::t_only, &n_flt);
    const double gap = c1_t - fl_t;
    if (n_c1s == 0 || n_flt == 0) {
      c6 = {false, "no converged p=0.1 runs for " +
                       std::string(n_c1s == 0 ? "contains-1" : "first-last") +
                       " survived the filter"};
    } else {
      const bool pass = c1_s > 0.9 && c1_t > 0.9 && gap >= 0.15;
      c6 = {pass, "contains-1 p=0.1: T_s-only " + fmt(c1_s, "%.3f") + ", T_t-only " +
                      fmt(c1_t, "%.3f") + " (both must exceed 0.9, " + std::to_string(n_c1s) +
                      "/3 seeds kept); first-last T_t-only " + fmt(fl_t, "%.3f") + " (" +
                      std::to_string(n_flt) + "/3 kept), gap " + fmt(gap, "%.3f") +
                      " (need >= 0.15); " + fmt(minutes_per_cond, "%.1f") +
                      " min/condition (target <= ~60)"};
    }
  }

  // Criterion 7: extractability correlation.
  Outcome c7;
  {
    const bool slope_ok = sw.fit_valid && sw.fit.slope > 0.0 && sw.fit.slope_lo > 0.0;
    int positive = 0;
    std::string per_task;
    for (const std::string& name : cfg.tasks) {
      const auto it = sw.evidence.find(name);
      const bool ok = it != sw.evidence.end() && it->second.defined &&
                      it->second.coefficient > 0.0 && it->second.p_value < 0.05;
      if (ok) ++positive;
      if (it != sw.evidence.end() && it->second.defined)
        per_task += " " + name + " rho=" + fmt(it->second.coefficient, "%.2f") + " p=" +
                    fmt(it->second.p_value, "%.3f") + (ok ? "" : " (ns)");
      else
        per_task += " " + name + " undefined";
    }
    const bool pass = slope_ok && positive >= 3;
    std::string fit_part;
    if (!sw.fit_valid) {
      fit_part = "logistic fit invalid (too few converged p=0 points)";
    } else {
      fit_part = "logistic slope " + fmt(sw.fit.slope, "%.2f") + ", 95% CI [" +
                 fmt(sw.fit.slope_lo, "%.2f") + ", " + fmt(sw.fit.slope_hi, "%.2f") + "]" +
                 (slope_ok ? " excludes 0" : " does NOT exclude 0");
    }
    c7 = {pass, fit_part + "; Spearman(p, T_s-only) positive with perm p < 0.05 for " +
                    std::to_string(positive) + "/4 tasks (need >= 3):" + per_task};
  }
  return {c6, c7};
}

// ---------------------------------------------------------------------------
// Criterion 8: bitwise reproducibility of the CLI.
// ---------------------------------------------------------------------------

// Pipeline settings small enough that every subcommand finishes in seconds.
const char* kMicroConfig = R"cfg(
[run]
master_seed = 5

[model]
n_layers = 1
d_model = 16
n_heads = 2
d_ff = 32

[pretrain]
steps = 25
batch_size = 8
lr = 0.001

[ppo]
batch_size = 8
minibatch_size = 4
ppo_epochs = 1
total_ppo_epochs = 2
lr = 0.0001

[data]
train_size = 16
test_per_quadrant = 3

[probe]
n = 8
seeds = 1
steps = 50

[experiment]
tasks = contains-1
p_grid = 0,0.5
seeds = 1
threshold = 0.05
eval_samples = 2
workers = 1
)cfg";

struct CliResult {
  int code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(BIASBENCH_BIN) + " " + args + " 2>&1";
  CliResult res;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return res;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) res.output.append(buf, n);
  const int status = pclose(pipe);
  if (WIFEXITED(status)) res.code = WEXITSTATUS(status);
  return res;
}

// Relative paths of every CSV/JSON file under root.
std::vector<std::string> tabular_files(const fs::path& root) {
  std::vector<std::string> out;
  if (!fs::exists(root)) return out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".csv" || ext == ".json")
      out.push_back(fs::relative(entry.path(), root).string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Outcome criterion_reproducibility(const std::string& work) {
  const fs::path root = fs::path(work) / "repro";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string cfg_path = (root / "micro.cfg").string();
  bb::atomic_write_file(cfg_path, kMicroConfig);
  std::string corpus;
  for (int i = 0; i < 20; ++i)
    corpus += "the picture was shown in hall number " + std::to_string(i) + " today\n";
  const std::string corpus_path = (root / "corpus.txt").string();
  bb::atomic_write_file(corpus_path, corpus);

  struct Command {
    std::string name;
    std::string args;  // --out appended per run
  };
  const std::vector<Command> commands = {
      {"gen", "gen --config " + cfg_path + " --task contains-1 --p 0.25"},
      {"textgen", "textgen --config " + cfg_path + " --task film_vs_movie --corpus " +
                      corpus_path + " --n 8 --p 0.25"},
      {"pretrain", "pretrain --config " + cfg_path + " --task contains-1"},
      {"probe", "probe --config " + cfg_path + " --task contains-1"},
      {"train", "train --config " + cfg_path + " --task contains-1 --p 0.5 --run-seed 0"},
      {"eval", ""},  // filled in after train produces a checkpoint
      {"sweep", "sweep --config " + cfg_path},
  };

  int files_compared = 0;
  for (const Command& cmd : commands) {
    std::string args = cmd.args;
    if (cmd.name == "eval") {
      const std::string ckpt =
          (root / "train_a/checkpoints/policy_contains-1_p0.5_s0.bbck").string();
      args = "eval --config " + cfg_path + " --task contains-1 --p 0.5 --run-seed 0 " +
             "--checkpoint " + ckpt;
    }
    const std::string dir_a = (root / (cmd.name + "_a")).string();
    const std::string dir_b = (root / (cmd.name + "_b")).string();
    for (const std::string& dir : {dir_a, dir_b}) {
      const CliResult res = run_cli(args + " --out " + dir);
      if (res.code != 0) {
        std::string tail = res.output.size() > 160 ? res.output.substr(res.output.size() - 160)
                                                   : res.output;
        std::replace(tail.begin(), tail.end(), '\n', ' ');
        return {false, cmd.name + " exited " + std::to_string(res.code) + ": " + tail};
      }
    }
    const std::vector<std::string> in_a = tabular_files(dir_a);
    const std::vector<std::string> in_b = tabular_files(dir_b);
    if (in_a != in_b)
      return {false, cmd.name + ": reruns produced different file sets (" +
                         std::to_string(in_a.size()) + " vs " + std::to_string(in_b.size()) + ")"};
    if (in_a.empty()) return {false, cmd.name + ": no CSV/JSON outputs found"};
    for (const std::string& rel : in_a) {
      if (bb::read_text_file(dir_a + "/" + rel) != bb::read_text_file(dir_b + "/" + rel))
        return {false, cmd.name + ": " + rel + " differs between identical reruns"};
      ++files_compared;
    }
    note("criterion 8: " + cmd.name + " reran byte-identically (" +
         std::to_string(in_a.size()) + " files)");
  }
  return {true, std::to_string(commands.size()) + " subcommands rerun with identical config and " +
                    "seed; " + std::to_string(files_compared) +
                    " CSV/JSON outputs byte-identical"};
}

// ---------------------------------------------------------------------------
// Criterion 9: convergence filter accounting.
// ---------------------------------------------------------------------------

Outcome criterion_filter() {
  auto report = [](std::uint64_t seed, double neither, bool failed) {
    bb::EvalReport r;
    r.task = "contains-1";
    r.p = 0.1;
    r.seed = seed;
    r.partitions[bb::quadrant_index(bb::Quadrant::neither)].mean_reward = neither;
    r.failed = failed;
    if (failed) r.error = "ppo: injected failure";
    return r;
  };
  std::vector<bb::EvalReport> reports;
  reports.push_back(report(0, 0.97, false));
  reports.push_back(report(1, 0.79, false));  // injected: just below threshold
  reports.push_back(report(2, 0.85, false));
  reports.push_back(report(3, 0.42, false));  // injected
  reports.push_back(report(4, 0.80, false));  // boundary: kept at exactly the threshold
  reports.push_back(report(5, 0.00, false));  // injected
  reports.push_back(report(6, 0.92, false));
  reports.push_back(report(7, 0.95, true));  // failed tombstone: discarded regardless
  const std::vector<std::uint64_t> injected = {1, 3, 5, 7};

  const bb::FilterResult filter = bb::filter_converged(reports, 0.8);
  const bool counts_ok = filter.kept.size() == 4 && filter.discarded.size() == 4 &&
                         filter.kept.size() + filter.discarded.size() == reports.size();
  bool membership_ok = true;
  for (const bb::EvalReport& r : filter.discarded)
    if (std::find(injected.begin(), injected.end(), r.seed) == injected.end())
      membership_ok = false;
  for (const bb::EvalReport& r : filter.kept)
    if (std::find(injected.begin(), injected.end(), r.seed) != injected.end())
      membership_ok = false;

  const std::string log = bb::filter_log_csv(filter, 0.8);
  std::size_t rows = 0;
  std::size_t false_rows = 0;
  std::size_t pos = 0;
  while ((pos = log.find('\n', pos)) != std::string::npos) {
    ++rows;
    ++pos;
  }
  pos = 0;
  while ((pos = log.find(",false\n", pos)) != std::string::npos) {
    ++false_rows;
    ++pos;
  }
  const bool log_ok = rows == reports.size() + 1 && false_rows == filter.discarded.size();

  const bool pass = counts_ok && membership_ok && log_ok;
  return {pass, "injected 3 runs with T_neither < 0.8 plus 1 failed run among 8: kept " +
                    std::to_string(filter.kept.size()) + " + discarded " +
                    std::to_string(filter.discarded.size()) + " = total " +
                    std::to_string(reports.size()) + "; all " + std::to_string(false_rows) +
                    " exclusions logged (threshold 0.8, boundary run kept)"};
}

// ---------------------------------------------------------------------------

// Sweep-stage configuration: library defaults (desk-scale model, 4 tasks,
// 6-point p grid, 3 seeds) with the PPO step size and KL budget re-tuned for
// 5-token completions -- the stock budget of 0.1 nats per episode pins the
// policy to the reference and caps reward near the untrained baseline.
bb::RunConfig acceptance_config() {
  bb::RunConfig cfg;
  cfg.workers = 1;
  cfg.ppo.target_kl = 2.0;
  cfg.ppo.lr = 1e-4;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  // The tape allocates and frees large activation blocks every iteration;
  // keep them on the heap instead of round-tripping through mmap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"biasbench acceptance suite"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--work", work, "work/cache directory for heavy stages");
  app.add_option("--only", only, "run only these criterion numbers")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  fs::create_directories(work);
  const bb::RunConfig cfg = acceptance_config();
  bb::atomic_write_file(work + "/acceptance.cfg", bb::serialize_config(cfg));

  const std::map<int, std::string> titles = {
      {1, "autodiff gradient checks"},   {2, "reward oracle"},
      {3, "dataset composition"},        {4, "MDL probe sanity"},
      {5, "MDL ordering and ratio"},     {6, "learnability gap"},
      {7, "extractability correlation"}, {8, "bitwise reproducibility"},
      {9, "convergence filter accounting"}};

  auto want = [&](int id) {
    return only.empty() || std::find(only.begin(), only.end(), id) != only.end();
  };

  std::map<int, Outcome> results;
  auto record = [&](int id, Outcome outcome) {
    results[id] = outcome;
    std::printf("[%s] criterion %d: %s — %s\n", outcome.pass ? "PASS" : "FAIL", id,
                titles.at(id).c_str(), outcome.detail.c_str());
    std::fflush(stdout);
  };
  auto run = [&](int id, const std::function<Outcome()>& fn) {
    if (!want(id)) return;
    note("criterion " + std::to_string(id) + " (" + titles.at(id) + ") starting");
    Outcome outcome;
    try {
      outcome = fn();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    record(id, outcome);
  };

  // Cheap checks first; the probe stage and the sweep share the work-dir
  // cache, so criterion 5's pre-trained models are reused by 6 and 7.
  run(1, criterion_gradients);
  run(2, criterion_reward);
  run(3, criterion_composition);
  run(4, criterion_mdl_sanity);
  run(9, criterion_filter);
  run(8, [&] { return criterion_reproducibility(work); });
  run(5, [&] { return criterion_mdl_ordering(cfg, work); });
  if (want(6) || want(7)) {
    note("criteria 6+7 (sweep) starting: " +
         std::to_string(cfg.tasks.size() * cfg.p_grid.size() * cfg.seeds) + " conditions");
    Outcome c6{false, "sweep did not run"};
    Outcome c7{false, "sweep did not run"};
    try {
      std::tie(c6, c7) = criteria_sweep(cfg, work);
    } catch (const std::exception& e) {
      c6 = c7 = {false, std::string("exception: ") + e.what()};
    }
    if (want(6)) record(6, c6);
    if (want(7)) record(7, c7);
  }

  int failed = 0;
  std::printf("\nsummary:\n");
  for (const auto& [id, outcome] : results) {
    if (!outcome.pass) ++failed;
    std::printf("  [%s] criterion %d: %s\n", outcome.pass ? "PASS" : "FAIL", id,
                titles.at(id).c_str());
  }
  std::printf("acceptance: %zu/%zu criteria passed (total %s)\n", results.size() - failed,
              results.size(), stamp().c_str());
  return failed;
}
