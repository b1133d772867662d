#include "biasbench/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "biasbench/checkpoint.hpp"
#include "biasbench/io.hpp"
#include "biasbench/plot.hpp"

namespace bb {

namespace {

nlohmann::json partition_json(const std::array<PartitionStats, 4>& partitions) {
  nlohmann::json j;
  for (Quadrant q : kQuadrants) {
    const PartitionStats& ps = partitions[quadrant_index(q)];
    j[quadrant_name(q)] = {{"mean", ps.mean_reward}, {"std", ps.std_reward}};
  }
  return j;
}

}  // namespace

std::string eval_report_json(const EvalReport& report) {
  nlohmann::json j;
  j["task"] = report.task;
  j["p"] = report.p;
  j["seed"] = report.seed;
  j["partitions"] = partition_json(report.partitions);
  j["converged"] = report.converged;
  j["rel_mdl"] = report.rel_mdl;
  j["rel_mdl_std"] = report.rel_mdl_std;
  j["failed"] = report.failed;
  j["error"] = report.error;
  return j.dump(2);
}

EvalReport parse_eval_report_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  EvalReport report;
  report.task = j.at("task").get<std::string>();
  report.p = j.at("p").get<double>();
  report.seed = j.at("seed").get<std::uint64_t>();
  for (Quadrant q : kQuadrants) {
    const auto& pj = j.at("partitions").at(quadrant_name(q));
    report.partitions[quadrant_index(q)] = {pj.at("mean").get<double>(),
                                            pj.at("std").get<double>()};
  }
  report.converged = j.at("converged").get<bool>();
  report.rel_mdl = j.at("rel_mdl").get<double>();
  report.rel_mdl_std = j.at("rel_mdl_std").get<double>();
  report.failed = j.at("failed").get<bool>();
  report.error = j.at("error").get<std::string>();
  return report;
}

std::array<PartitionStats, 4> evaluate_with_sampler(const CompletionSampler& sampler,
                                                    const TestSet& test, const RewardSpec& spec,
                                                    int n_samples, Rng& rng) {
  if (n_samples < 1) throw std::invalid_argument("evaluate: n_samples must be >= 1");
  std::array<PartitionStats, 4> out;
  for (Quadrant q : kQuadrants) {
    const auto& prompts = test.per_quadrant[quadrant_index(q)];
    if (prompts.empty())
      throw std::invalid_argument(std::string("evaluate: empty test partition ") +
                                  quadrant_name(q));
    const int t_gate = quadrant_indicator(q).first;
    std::vector<double> per_prompt(prompts.size(), 0.0);
    for (int s = 0; s < n_samples; ++s) {
      Rng round_rng = rng.child(std::string(quadrant_name(q)) + "-round",
                                static_cast<std::uint64_t>(s));
      const std::vector<std::vector<int>> completions = sampler(prompts, round_rng);
      if (completions.size() != prompts.size())
        throw std::runtime_error("evaluate: sampler returned wrong completion count");
      for (std::size_t i = 0; i < prompts.size(); ++i)
        per_prompt[i] += gated_reward(spec, t_gate, prompts[i], completions[i]);
    }
    for (double& r : per_prompt) r /= n_samples;
    PartitionStats& ps = out[quadrant_index(q)];
    ps.mean_reward = mean(per_prompt);
    ps.std_reward = sample_std(per_prompt);
  }
  return out;
}

std::array<PartitionStats, 4> evaluate(const PolicyModel& policy, const TestSet& test,
                                       const RewardSpec& spec, int n_samples, int completion_len,
                                       double temperature, Rng& rng) {
  CompletionSampler sampler = [&](const std::vector<std::vector<int>>& prompts, Rng& r) {
    std::vector<Sampled> sampled =
        sample_completions_batch(policy, prompts, completion_len, temperature, r);
    std::vector<std::vector<int>> completions(sampled.size());
    for (std::size_t i = 0; i < sampled.size(); ++i) completions[i] = std::move(sampled[i].tokens);
    return completions;
  };
  return evaluate_with_sampler(sampler, test, spec, n_samples, rng);
}

PolicyModel pretrained_model(const RunConfig& cfg, const std::string& task_name,
                             const std::string& cache_dir,
                             std::optional<PretrainResult>* pretrain_log) {
  const SyntheticTask task = make_task(task_name);
  const std::string ckpt_path =
      cache_dir.empty() ? "" : cache_dir + "/checkpoints/pretrain_" + task_name + ".bbck";
  if (!ckpt_path.empty() && file_exists(ckpt_path)) {
    PolicyModel model = load_checkpoint(ckpt_path);
    if (!(model.cfg == cfg.model))
      throw std::runtime_error("prepare_task: cached checkpoint " + ckpt_path +
                               " was built with a different model config; remove it or change "
                               "the output directory");
    return model;
  }
  const std::uint64_t init_seed = Rng(cfg.master_seed).child("model-init-" + task_name).next_u64();
  PolicyModel model = init_model(cfg.model, init_seed);
  Rng pretrain_rng = Rng(cfg.master_seed).child("pretrain-" + task_name);
  PretrainResult log = pretrain_lm(model, task, cfg.pretrain, pretrain_rng);
  if (pretrain_log) *pretrain_log = std::move(log);
  if (!ckpt_path.empty()) save_checkpoint(ckpt_path, model);
  return model;
}

std::pair<MdlReport, MdlReport> probe_reports(const RunConfig& cfg, const std::string& task_name,
                                              const PolicyModel& model,
                                              const std::string& cache_dir) {
  const SyntheticTask task = make_task(task_name);
  const std::string mdl_t_path =
      cache_dir.empty() ? "" : cache_dir + "/reports/mdl_" + task_name + "_target.json";
  const std::string mdl_s_path =
      cache_dir.empty() ? "" : cache_dir + "/reports/mdl_" + task_name + "_spurious.json";
  if (!mdl_t_path.empty() && file_exists(mdl_t_path) && file_exists(mdl_s_path)) {
    return {parse_mdl_report_json(read_text_file(mdl_t_path)),
            parse_mdl_report_json(read_text_file(mdl_s_path))};
  }
  Rng probe_rng = Rng(cfg.master_seed).child("probe-" + task_name);
  Rng t_rng = probe_rng.child("target");
  Rng s_rng = probe_rng.child("spurious");
  MdlReport mdl_t =
      feature_mdl(model, task, "target", cfg.probe_n, cfg.probe_seeds, t_rng, cfg.probe);
  MdlReport mdl_s =
      feature_mdl(model, task, "spurious", cfg.probe_n, cfg.probe_seeds, s_rng, cfg.probe);
  if (!mdl_t_path.empty()) {
    atomic_write_file(mdl_t_path, mdl_report_json(mdl_t));
    atomic_write_file(mdl_s_path, mdl_report_json(mdl_s));
  }
  return {std::move(mdl_t), std::move(mdl_s)};
}

TaskArtifacts prepare_task(const RunConfig& cfg, const std::string& task_name,
                           const std::string& cache_dir) {
  cfg.validate();
  TaskArtifacts art;
  art.pretrained = pretrained_model(cfg, task_name, cache_dir, &art.pretrain_log);
  std::tie(art.mdl_t, art.mdl_s) = probe_reports(cfg, task_name, art.pretrained, cache_dir);
  std::tie(art.rel_mdl, art.rel_mdl_std) = relative_mdl(art.mdl_s, art.mdl_t);
  return art;
}

EvalReport run_condition(const TaskArtifacts& artifacts, const std::string& task_name, double p,
                         std::uint64_t seed, const RunConfig& cfg, TrainingLog* training_log,
                         PolicyModel* trained_out) {
  const SyntheticTask task = make_task(task_name);
  EvalReport report;
  report.task = task_name;
  report.p = p;
  report.seed = seed;
  report.rel_mdl = artifacts.rel_mdl;
  report.rel_mdl_std = artifacts.rel_mdl_std;

  Rng cond = Rng(cfg.master_seed).child("cond-" + task_name + "-p" + format_double(p), seed);
  Rng train_rng = cond.child("train-data");
  const std::vector<TrainExample> train_set = build_training_set(task, p, cfg.train_size, train_rng);
  Rng test_rng = cond.child("test-data");
  const TestSet test = build_test_set(task, cfg.test_per_quadrant, test_rng, &train_set);

  PolicyModel policy = artifacts.pretrained;
  const PolicyModel& reference = artifacts.pretrained;
  const RewardSpec spec = synthetic_reward_spec();
  Rng ppo_rng = cond.child("ppo");
  TrainingLog log = train(policy, reference, train_set, spec, cfg.ppo, ppo_rng);
  if (training_log) *training_log = std::move(log);

  Rng eval_rng = cond.child("eval");
  report.partitions = evaluate(policy, test, spec, cfg.eval_samples, cfg.ppo.completion_len,
                               1.0, eval_rng);
  report.converged =
      report.partitions[quadrant_index(Quadrant::neither)].mean_reward >= cfg.threshold;
  if (trained_out) *trained_out = std::move(policy);
  return report;
}

FilterResult filter_converged(const std::vector<EvalReport>& reports, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("filter_converged: threshold must lie in (0, 1)");
  FilterResult out;
  for (const EvalReport& r : reports) {
    const bool keep =
        !r.failed && r.partitions[quadrant_index(Quadrant::neither)].mean_reward >= threshold;
    (keep ? out.kept : out.discarded).push_back(r);
  }
  return out;
}

FitResult fit_reward_vs_relmdl(const std::vector<EvalReport>& kept,
                               const std::map<std::string, std::pair<double, double>>& rel_mdl,
                               Rng& rng) {
  std::vector<double> x, y;
  for (const EvalReport& r : kept) {
    if (r.p != 0.0) continue;
    const auto it = rel_mdl.find(r.task);
    if (it == rel_mdl.end()) continue;
    const double y_s = r.partitions[quadrant_index(Quadrant::s_only)].mean_reward;
    const double y_t = r.partitions[quadrant_index(Quadrant::t_only)].mean_reward;
    x.push_back(it->second.first);
    y.push_back(0.5 * (y_s + y_t));
  }
  return logistic_fit(x, y, rng, /*log_x=*/true);
}

std::map<std::string, Correlation> evidence_stats(const std::vector<EvalReport>& kept, Rng& rng) {
  std::map<std::string, std::vector<std::pair<double, double>>> per_task;
  for (const EvalReport& r : kept)
    per_task[r.task].emplace_back(r.p,
                                  r.partitions[quadrant_index(Quadrant::s_only)].mean_reward);
  std::map<std::string, Correlation> out;
  for (auto& [task, points] : per_task) {
    std::vector<double> ps, rewards, distinct;
    for (const auto& [p, reward] : points) {
      ps.push_back(p);
      rewards.push_back(reward);
      if (std::find(distinct.begin(), distinct.end(), p) == distinct.end()) distinct.push_back(p);
    }
    Correlation c;  // stays undefined without enough distinct evidence levels
    if (distinct.size() >= 4) {
      Rng task_rng = rng.child("evidence-" + task);
      c = permutation_test(ps, rewards, /*use_spearman=*/true, task_rng);
    }
    out[task] = c;
  }
  return out;
}

SweepResult sweep(const RunConfig& cfg, const std::string& cache_dir,
                  const std::function<void(const std::string&)>& progress) {
  cfg.validate();
  std::mutex progress_mutex;
  auto say = [&](const std::string& msg) {
    if (!progress) return;
    std::lock_guard<std::mutex> lock(progress_mutex);
    progress(msg);
  };

  SweepResult result;
  std::map<std::string, TaskArtifacts> artifacts;
  for (const std::string& task : cfg.tasks) {
    say("preparing task " + task + " (pretrain + probe)");
    artifacts.emplace(task, prepare_task(cfg, task, cache_dir));
    const TaskArtifacts& art = artifacts.at(task);
    result.rel_mdl[task] = {art.rel_mdl, art.rel_mdl_std};
    say("task " + task + " ready: rel MDL " + format_double(art.rel_mdl) + " +- " +
        format_double(art.rel_mdl_std));
  }

  struct Job {
    std::string task;
    double p;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const std::string& task : cfg.tasks)
    for (double p : cfg.p_grid)
      for (int s = 0; s < cfg.seeds; ++s)
        jobs.push_back({task, p, static_cast<std::uint64_t>(s)});

  result.reports.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  unsigned n_workers = cfg.workers > 0 ? static_cast<unsigned>(cfg.workers)
                                       : std::max(1u, std::thread::hardware_concurrency());
  n_workers = std::min<unsigned>(n_workers, static_cast<unsigned>(jobs.size()));

  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const Job& job = jobs[i];
      const std::string cache_path =
          cache_dir.empty() ? ""
                            : cache_dir + "/reports/eval_" + job.task + "_p" +
                                  format_double(job.p) + "_s" + std::to_string(job.seed) + ".json";
      EvalReport report;
      bool cached = false;
      if (!cache_path.empty() && file_exists(cache_path)) {
        report = parse_eval_report_json(read_text_file(cache_path));
        if (report.task == job.task && report.p == job.p && report.seed == job.seed &&
            !report.failed)
          cached = true;
      }
      if (!cached) {
        try {
          report = run_condition(artifacts.at(job.task), job.task, job.p, job.seed, cfg);
        } catch (const std::exception& e) {
          report = EvalReport{};
          report.task = job.task;
          report.p = job.p;
          report.seed = job.seed;
          report.failed = true;
          report.error = e.what();
        }
        // Failures are not cached: a resumed sweep retries them.
        if (!cache_path.empty() && !report.failed)
          atomic_write_file(cache_path, eval_report_json(report));
      }
      result.reports[i] = std::move(report);
      const std::size_t finished = done.fetch_add(1) + 1;
      const EvalReport& r = result.reports[i];
      std::ostringstream msg;
      msg << job.task << " p=" << format_double(job.p) << " seed=" << job.seed << " ";
      if (r.failed) {
        msg << "FAILED: " << r.error;
      } else {
        msg << "T_s-only=" << format_double(r.partitions[0].mean_reward)
            << " T_t-only=" << format_double(r.partitions[1].mean_reward)
            << " T_neither=" << format_double(r.partitions[3].mean_reward)
            << (r.converged ? "" : " [not converged]");
      }
      msg << " (" << finished << "/" << jobs.size() << ")";
      say(msg.str());
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  result.filter = filter_converged(result.reports, cfg.threshold);
  Rng stats_rng = Rng(cfg.master_seed).child("stats");
  Rng fit_rng = stats_rng.child("fit");
  std::vector<double> probe_x;
  for (const EvalReport& r : result.filter.kept)
    if (r.p == 0.0) probe_x.push_back(r.rel_mdl);
  if (probe_x.size() >= 3) {
    result.fit = fit_reward_vs_relmdl(result.filter.kept, result.rel_mdl, fit_rng);
    result.fit_valid = true;
  }
  Rng evidence_rng = stats_rng.child("evidence");
  result.evidence = evidence_stats(result.filter.kept, evidence_rng);
  return result;
}

std::string sweep_results_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream csv;
  csv << "task,p,seed,partition,mean_reward,std_reward,converged,rel_mdl,rel_mdl_std\n";
  for (const EvalReport& r : reports) {
    if (r.failed) continue;
    for (Quadrant q : kQuadrants) {
      const PartitionStats& ps = r.partitions[quadrant_index(q)];
      csv << r.task << "," << format_double(r.p) << "," << r.seed << "," << quadrant_name(q)
          << "," << format_double(ps.mean_reward) << "," << format_double(ps.std_reward) << ","
          << (r.converged ? "true" : "false") << "," << format_double(r.rel_mdl) << ","
          << format_double(r.rel_mdl_std) << "\n";
    }
  }
  return csv.str();
}

std::string filter_log_csv(const FilterResult& filter, double threshold) {
  std::ostringstream csv;
  csv << "task,p,seed,t_neither_mean,threshold,kept\n";
  auto row = [&](const EvalReport& r, bool kept) {
    csv << r.task << "," << format_double(r.p) << "," << r.seed << ","
        << format_double(r.partitions[quadrant_index(Quadrant::neither)].mean_reward) << ","
        << format_double(threshold) << "," << (kept ? "true" : "false") << "\n";
  };
  for (const EvalReport& r : filter.kept) row(r, true);
  for (const EvalReport& r : filter.discarded) row(r, false);
  return csv.str();
}

std::string failures_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream csv;
  csv << "task,p,seed,error\n";
  for (const EvalReport& r : reports) {
    if (!r.failed) continue;
    std::string msg = r.error;
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::replace(msg.begin(), msg.end(), ',', ';');
    csv << r.task << "," << format_double(r.p) << "," << r.seed << "," << msg << "\n";
  }
  return csv.str();
}

namespace {

nlohmann::json correlation_json(const Correlation& c) {
  return {{"coefficient", c.coefficient}, {"p_value", c.p_value}, {"defined", c.defined}};
}

}  // namespace

std::string fits_json(const SweepResult& result) {
  nlohmann::json j;
  j["logistic_fit"]["valid"] = result.fit_valid;
  if (result.fit_valid) {
    j["logistic_fit"]["intercept"] = result.fit.intercept;
    j["logistic_fit"]["slope"] = result.fit.slope;
    j["logistic_fit"]["intercept_ci"] = {result.fit.intercept_lo, result.fit.intercept_hi};
    j["logistic_fit"]["slope_ci"] = {result.fit.slope_lo, result.fit.slope_hi};
    j["logistic_fit"]["diverged"] = result.fit.diverged;
    j["logistic_fit"]["pearson"] = correlation_json(result.fit.pearson_xy);
    j["logistic_fit"]["spearman"] = correlation_json(result.fit.spearman_xy);
  }
  for (const auto& [task, c] : result.evidence) j["evidence"][task] = correlation_json(c);
  for (const auto& [task, rm] : result.rel_mdl)
    j["rel_mdl"][task] = {{"ratio", rm.first}, {"std", rm.second}};
  j["counts"]["total"] = result.reports.size();
  j["counts"]["kept"] = result.filter.kept.size();
  j["counts"]["discarded"] = result.filter.discarded.size();
  std::size_t failed = 0;
  for (const EvalReport& r : result.reports) failed += r.failed ? 1 : 0;
  j["counts"]["failed"] = failed;
  return j.dump(2);
}

std::vector<std::pair<std::string, std::string>> sweep_plots(const SweepResult& result) {
  std::vector<std::pair<std::string, std::string>> out;

  // Per-task reward vs p, one series per partition, converged seeds averaged.
  std::map<std::string, std::map<double, std::array<std::pair<double, int>, 4>>> grid;
  for (const EvalReport& r : result.filter.kept) {
    auto& cell = grid[r.task][r.p];
    for (std::size_t q = 0; q < 4; ++q) {
      cell[q].first += r.partitions[q].mean_reward;
      cell[q].second += 1;
    }
  }
  for (const auto& [task, by_p] : grid) {
    std::vector<Series> series(4);
    for (Quadrant q : kQuadrants)
      series[quadrant_index(q)].name = std::string("T_") + quadrant_name(q);
    for (const auto& [p, cell] : by_p)
      for (std::size_t q = 0; q < 4; ++q)
        if (cell[q].second > 0)
          series[q].points.emplace_back(p, cell[q].first / cell[q].second);
    bool any = false;
    for (const auto& s : series) any = any || !s.points.empty();
    if (!any) continue;
    out.emplace_back("reward_vs_p_" + task + ".svg",
                     svg_line_chart("Mean reward vs evidence ratio p: " + task, "p",
                                    "mean reward", series));
  }

  // p = 0 reward vs relative MDL with the fitted logistic curve.
  Series scatter;
  scatter.name = "runs at p=0";
  for (const EvalReport& r : result.filter.kept) {
    if (r.p != 0.0) continue;
    const double y_s = r.partitions[quadrant_index(Quadrant::s_only)].mean_reward;
    const double y_t = r.partitions[quadrant_index(Quadrant::t_only)].mean_reward;
    scatter.points.emplace_back(r.rel_mdl, 0.5 * (y_s + y_t));
  }
  if (!scatter.points.empty()) {
    std::vector<std::pair<double, double>> curve;
    if (result.fit_valid) {
      double lo = scatter.points[0].first, hi = lo;
      for (const auto& [x, y] : scatter.points) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
      for (int i = 0; i <= 100; ++i) {
        const double x = lo + (hi - lo) * i / 100.0;
        if (!(x > 0.0)) continue;
        curve.emplace_back(x, sigmoid(result.fit.intercept + result.fit.slope * std::log(x)));
      }
    }
    out.emplace_back("reward_vs_relmdl.svg",
                     svg_scatter_chart("Reward at p=0 vs relative MDL", "relative MDL",
                                       "mean reward on T_s-only and T_t-only", scatter, curve));
  }
  return out;
}

}  // namespace bb
