// biasbench: synthetic testbed for measuring whether RL fine-tuning inherits
// the inductive biases of pre-trained representations. Subcommands cover
// dataset generation, LM pre-training, MDL probing, PPO fine-tuning,
// evaluation, full sweeps, and report summaries.

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "biasbench/checkpoint.hpp"
#include "biasbench/config.hpp"
#include "biasbench/experiment.hpp"
#include "biasbench/io.hpp"
#include "biasbench/mdl.hpp"
#include "biasbench/model.hpp"
#include "biasbench/plot.hpp"
#include "biasbench/ppo.hpp"
#include "biasbench/pretrain.hpp"
#include "biasbench/task.hpp"
#include "biasbench/textfeat.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> run_seed;
  std::optional<std::string> task;
  std::optional<double> p;
};

void add_common(CLI::App* cmd, CommonArgs& args, const std::string& default_out) {
  cmd->add_option("--config", args.config_path, "run configuration file (sectioned key=value)");
  cmd->add_option("--seed", args.seed, "master seed (overrides [run] master_seed)");
  cmd->add_option("--out", args.out_dir, "run directory")->default_val(default_out);
}

void add_condition(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--task", args.task, "synthetic task name");
  cmd->add_option("--p", args.p, "evidence ratio p in [0,1]");
  cmd->add_option("--run-seed", args.run_seed, "per-condition seed index");
}

bb::RunConfig load_config(const CommonArgs& args) {
  bb::RunConfig cfg;
  if (!args.config_path.empty()) cfg = bb::parse_config_file(args.config_path);
  if (args.seed) cfg.master_seed = *args.seed;
  if (args.run_seed) cfg.condition_seed = *args.run_seed;
  if (args.task) cfg.task = *args.task;
  if (args.p) cfg.p = *args.p;
  cfg.validate();
  return cfg;
}

// Every command snapshots its effective configuration so the run directory is
// self-describing and reproducible.
bb::RunDir open_run_dir(const CommonArgs& args, const bb::RunConfig& cfg) {
  bb::RunDir dir(args.out_dir);
  dir.init();
  bb::atomic_write_file(dir.root + "/config.cfg", bb::serialize_config(cfg));
  return dir;
}

std::string condition_tag(const bb::RunConfig& cfg) {
  return cfg.task + "_p" + bb::format_double(cfg.p) + "_s" + std::to_string(cfg.condition_seed);
}

int cmd_gen(const CommonArgs& args) {
  bb::RunConfig cfg = load_config(args);
  bb::RunDir dir = open_run_dir(args, cfg);
  const bb::SyntheticTask task = bb::make_task(cfg.task);
  bb::Rng cond = bb::Rng(cfg.master_seed)
                     .child("cond-" + cfg.task + "-p" + bb::format_double(cfg.p),
                            cfg.condition_seed);
  bb::Rng train_rng = cond.child("train-data");
  const auto train_set = bb::build_training_set(task, cfg.p, cfg.train_size, train_rng);
  bb::Rng test_rng = cond.child("test-data");
  const bb::TestSet test = bb::build_test_set(task, cfg.test_per_quadrant, test_rng, &train_set);

  const std::string train_path = dir.datasets() + "/train_" + condition_tag(cfg) + ".csv";
  const std::string test_path = dir.datasets() + "/test_" + condition_tag(cfg) + ".csv";
  bb::atomic_write_file(train_path, bb::dataset_csv(task, train_set));
  bb::atomic_write_file(test_path, bb::test_set_csv(task, test));

  std::array<int, 4> counts{};
  for (const auto& ex : train_set) counts[bb::quadrant_index(ex.quadrant)]++;
  std::cout << "task " << cfg.task << " p=" << bb::format_double(cfg.p) << " n=" << cfg.train_size
            << "\n";
  for (bb::Quadrant q : bb::kQuadrants)
    std::cout << "  train " << bb::quadrant_name(q) << ": " << counts[bb::quadrant_index(q)]
              << "\n";
  std::cout << "  test per quadrant: " << cfg.test_per_quadrant << "\n";
  std::cout << "wrote " << train_path << "\n";
  std::cout << "wrote " << test_path << "\n";
  return 0;
}

int cmd_textgen(const CommonArgs& args, const std::string& text_task, const std::string& corpus,
                const std::string& word, int n_override) {
  bb::RunConfig cfg = load_config(args);
  bb::RunDir dir = open_run_dir(args, cfg);
  const bb::TextTask task = bb::make_text_task(text_task, word);
  const int n = n_override > 0 ? n_override : cfg.train_size;
  bb::Rng rng = bb::Rng(cfg.master_seed)
                    .child("textgen-" + task.name + "-p" + bb::format_double(cfg.p),
                           cfg.condition_seed);
  const std::string out_path =
      dir.datasets() + "/text_" + task.name + "_p" + bb::format_double(cfg.p) + ".csv";
  bb::build_text_dataset_file(corpus, task, cfg.p, n, rng, out_path);
  std::cout << "task " << task.name << " p=" << bb::format_double(cfg.p) << " n=" << n << "\n";
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_pretrain(const CommonArgs& args) {
  bb::RunConfig cfg = load_config(args);
  bb::RunDir dir = open_run_dir(args, cfg);
  std::optional<bb::PretrainResult> log;
  bb::PolicyModel model = bb::pretrained_model(cfg, cfg.task, dir.root, &log);
  const std::string ckpt = dir.checkpoints() + "/pretrain_" + cfg.task + ".bbck";
  if (log) {
    bb::atomic_write_file(dir.logs() + "/pretrain_" + cfg.task + ".csv",
                          bb::pretrain_log_csv(*log));
    std::cout << "pretrained " << cfg.task << ": " << cfg.pretrain.steps << " steps, final loss "
              << bb::format_double(log->loss_curve.back()) << " nats\n";
  } else {
    std::cout << "pretrained " << cfg.task << ": loaded cached checkpoint\n";
  }
  std::cout << "checkpoint " << ckpt << " (" << model.n_params() << " parameters)\n";
  return 0;
}

int cmd_probe(const CommonArgs& args) {
  bb::RunConfig cfg = load_config(args);
  bb::RunDir dir = open_run_dir(args, cfg);
  bb::PolicyModel model = bb::pretrained_model(cfg, cfg.task, dir.root);
  auto [mdl_t, mdl_s] = bb::probe_reports(cfg, cfg.task, model, dir.root);
  auto [ratio, ratio_std] = bb::relative_mdl(mdl_s, mdl_t);
  bb::atomic_write_file(dir.logs() + "/relmdl_" + cfg.task + ".csv",
                        bb::relative_mdl_csv_header() +
                            bb::relative_mdl_csv_row(cfg.task, mdl_s, mdl_t));
  std::cout << "task " << cfg.task << "\n";
  std::cout << "  MDL(t) = " << bb::format_double(mdl_t.mean_bits) << " +- "
            << bb::format_double(mdl_t.std_bits) << " bits\n";
  std::cout << "  MDL(s) = " << bb::format_double(mdl_s.mean_bits) << " +- "
            << bb::format_double(mdl_s.std_bits) << " bits\n";
  std::cout << "  relative MDL = " << bb::format_double(ratio) << " +- "
            << bb::format_double(ratio_std) << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args) {
  bb::RunConfig cfg = load_config(args);
  bb::RunDir dir = open_run_dir(args, cfg);
  bb::TaskArtifacts art = bb::prepare_task(cfg, cfg.task, dir.root);
  if (art.pretrain_log)
    bb::atomic_write_file(dir.logs() + "/pretrain_" + cfg.task + ".csv",
                          bb::pretrain_log_csv(*art.pretrain_log));
  std::cout << "task " << cfg.task << " rel MDL " << bb::format_double(art.rel_mdl) << " +- "
            << bb::format_double(art.rel_mdl_std) << "\n";
  bb::TrainingLog log;
  bb::PolicyModel trained;
  bb::EvalReport report =
      bb::run_condition(art, cfg.task, cfg.p, cfg.condition_seed, cfg, &log, &trained);
  const std::string tag = condition_tag(cfg);
  bb::atomic_write_file(dir.logs() + "/train_" + tag + ".csv", bb::training_log_csv(log));
  bb::save_checkpoint(dir.checkpoints() + "/policy_" + tag + ".bbck", trained);
  bb::atomic_write_file(dir.reports() + "/eval_" + tag + ".json", bb::eval_report_json(report));
  std::cout << "final training reward " << bb::format_double(log.rows.back().mean_reward) << "\n";
  for (bb::Quadrant q : bb::kQuadrants) {
    const auto& ps = report.partitions[bb::quadrant_index(q)];
    std::cout << "  T_" << bb::quadrant_name(q) << ": " << bb::format_double(ps.mean_reward)
              << " +- " << bb::format_double(ps.std_reward) << "\n";
  }
  std::cout << (report.converged ? "converged" : "not converged") << " (threshold "
            << bb::format_double(cfg.threshold) << " on T_neither)\n";
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint_path) {
  bb::RunConfig cfg = load_config(args);
  bb::RunDir dir = open_run_dir(args, cfg);
  bb::PolicyModel policy = bb::load_checkpoint(checkpoint_path);
  const bb::SyntheticTask task = bb::make_task(cfg.task);
  bb::Rng cond = bb::Rng(cfg.master_seed)
                     .child("cond-" + cfg.task + "-p" + bb::format_double(cfg.p),
                            cfg.condition_seed);
  bb::Rng train_rng = cond.child("train-data");
  const auto train_set = bb::build_training_set(task, cfg.p, cfg.train_size, train_rng);
  bb::Rng test_rng = cond.child("test-data");
  const bb::TestSet test = bb::build_test_set(task, cfg.test_per_quadrant, test_rng, &train_set);
  bb::Rng eval_rng = cond.child("eval");
  const auto partitions = bb::evaluate(policy, test, bb::synthetic_reward_spec(), cfg.eval_samples,
                                       cfg.ppo.completion_len, 1.0, eval_rng);
  bb::EvalReport report;
  report.task = cfg.task;
  report.p = cfg.p;
  report.seed = cfg.condition_seed;
  report.partitions = partitions;
  report.converged =
      partitions[bb::quadrant_index(bb::Quadrant::neither)].mean_reward >= cfg.threshold;
  bb::atomic_write_file(dir.reports() + "/eval_" + condition_tag(cfg) + ".json",
                        bb::eval_report_json(report));
  for (bb::Quadrant q : bb::kQuadrants) {
    const auto& ps = partitions[bb::quadrant_index(q)];
    std::cout << "T_" << bb::quadrant_name(q) << ": " << bb::format_double(ps.mean_reward)
              << " +- " << bb::format_double(ps.std_reward) << "\n";
  }
  return 0;
}

int cmd_sweep(const CommonArgs& args) {
  bb::RunConfig cfg = load_config(args);
  bb::RunDir dir = open_run_dir(args, cfg);
  bb::SweepResult result =
      bb::sweep(cfg, dir.root, [](const std::string& msg) { std::cout << msg << "\n"; });
  bb::atomic_write_file(dir.logs() + "/sweep_results.csv", bb::sweep_results_csv(result.reports));
  bb::atomic_write_file(dir.logs() + "/filter_log.csv",
                        bb::filter_log_csv(result.filter, cfg.threshold));
  bb::atomic_write_file(dir.logs() + "/failures.csv", bb::failures_csv(result.reports));
  bb::atomic_write_file(dir.reports() + "/fits.json", bb::fits_json(result));
  for (const auto& [name, svg] : bb::sweep_plots(result))
    bb::atomic_write_file(dir.plots() + "/" + name, svg);

  std::cout << "\nsweep complete: " << result.reports.size() << " conditions, "
            << result.filter.kept.size() << " kept, " << result.filter.discarded.size()
            << " discarded by the convergence filter\n";
  if (result.fit_valid) {
    std::cout << "logistic fit (p=0): slope " << bb::format_double(result.fit.slope) << " [95% "
              << bb::format_double(result.fit.slope_lo) << ", "
              << bb::format_double(result.fit.slope_hi) << "]\n";
  }
  for (const auto& [task, c] : result.evidence) {
    std::cout << "evidence " << task << ": ";
    if (c.defined)
      std::cout << "Spearman rho " << bb::format_double(c.coefficient) << " (perm p "
                << bb::format_double(c.p_value) << ")\n";
    else
      std::cout << "undefined (constant rewards or too few evidence levels)\n";
  }
  std::cout << "outputs in " << dir.root << "\n";
  return 0;
}

int cmd_report(const CommonArgs& args) {
  bb::RunDir dir(args.out_dir);
  const std::string csv_path = dir.logs() + "/sweep_results.csv";
  const std::string fits_path = dir.reports() + "/fits.json";
  if (!bb::file_exists(csv_path))
    throw std::runtime_error("report: no sweep results at " + csv_path + "; run sweep first");

  // (task, p, partition) -> converged-run rewards
  std::map<std::string, std::map<double, std::map<std::string, std::vector<double>>>> table;
  const auto lines = bb::read_lines(csv_path);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::vector<std::string> fields;
    std::istringstream row(lines[i]);
    std::string field;
    while (std::getline(row, field, ',')) fields.push_back(field);
    if (fields.size() != 9)
      throw std::runtime_error("report: malformed row in " + csv_path + ": " + lines[i]);
    if (fields[6] != "true") continue;
    table[fields[0]][std::stod(fields[1])][fields[3]].push_back(std::stod(fields[4]));
  }
  for (const auto& [task, by_p] : table) {
    std::cout << task << "\n";
    std::printf("  %8s %10s %10s %10s %10s\n", "p", "T_s-only", "T_t-only", "T_both", "T_neither");
    for (const auto& [p, by_part] : by_p) {
      auto cell = [&](const char* name) {
        const auto it = by_part.find(name);
        if (it == by_part.end() || it->second.empty()) return std::string("-");
        return bb::format_double(bb::mean(it->second));
      };
      std::printf("  %8s %10s %10s %10s %10s\n", bb::format_double(p).c_str(),
                  cell("s_only").c_str(), cell("t_only").c_str(), cell("both").c_str(),
                  cell("neither").c_str());
    }
  }
  if (bb::file_exists(fits_path)) {
    const nlohmann::json fits = nlohmann::json::parse(bb::read_text_file(fits_path));
    std::cout << "\nfits.json summary\n";
    if (fits.contains("logistic_fit") && fits["logistic_fit"].value("valid", false)) {
      const auto& f = fits["logistic_fit"];
      std::cout << "  logistic slope " << bb::format_double(f["slope"].get<double>()) << " [95% "
                << bb::format_double(f["slope_ci"][0].get<double>()) << ", "
                << bb::format_double(f["slope_ci"][1].get<double>()) << "]\n";
    }
    if (fits.contains("evidence"))
      for (const auto& [task, c] : fits["evidence"].items())
        if (c.value("defined", false))
          std::cout << "  " << task << ": Spearman rho "
                    << bb::format_double(c["coefficient"].get<double>()) << " (perm p "
                    << bb::format_double(c["p_value"].get<double>()) << ")\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // The training loops allocate and free large activation buffers every step;
  // keep those inside the arena instead of round-tripping through mmap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"biasbench: pre-training bias testbed (synthetic RL pipeline)"};
  app.require_subcommand(1);

  CommonArgs gen_args, textgen_args, pretrain_args, probe_args, train_args, eval_args, sweep_args,
      report_args;

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic training set and test partitions");
  add_common(gen, gen_args, "runs/gen");
  add_condition(gen, gen_args);

  CLI::App* textgen = app.add_subcommand("textgen", "plant feature pairs into a text corpus");
  add_common(textgen, textgen_args, "runs/textgen");
  textgen->add_option("--p", textgen_args.p, "evidence ratio p in [0,1]");
  textgen->add_option("--run-seed", textgen_args.run_seed, "per-dataset seed index");
  std::string text_task, corpus_path, score_word = "review";
  int textgen_n = 0;
  textgen->add_option("--task", text_task, "text task name")->required();
  textgen->add_option("--corpus", corpus_path, "corpus file, one prompt per line")->required();
  textgen->add_option("--word", score_word, "marker word for the score task (review|prompt)");
  textgen->add_option("--n", textgen_n, "dataset size (default: [data] train_size)");

  CLI::App* pretrain = app.add_subcommand("pretrain", "next-token pre-training on the prompt mixture");
  add_common(pretrain, pretrain_args, "runs/pretrain");
  pretrain->add_option("--task", pretrain_args.task, "synthetic task name");

  CLI::App* probe = app.add_subcommand("probe", "prequential MDL probes of the pre-trained model");
  add_common(probe, probe_args, "runs/probe");
  probe->add_option("--task", probe_args.task, "synthetic task name");

  CLI::App* train = app.add_subcommand("train", "PPO fine-tuning for one (task, p, seed) condition");
  add_common(train, train_args, "runs/train");
  add_condition(train, train_args);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a policy checkpoint on the test partitions");
  add_common(eval, eval_args, "runs/eval");
  add_condition(eval, eval_args);
  std::string eval_checkpoint;
  eval->add_option("--checkpoint", eval_checkpoint, "policy checkpoint to evaluate")->required();

  CLI::App* sweep = app.add_subcommand("sweep", "full task x p x seed sweep with fits and plots");
  add_common(sweep, sweep_args, "runs/sweep");

  CLI::App* report = app.add_subcommand("report", "summarize a finished sweep run directory");
  add_common(report, report_args, "runs/sweep");

  std::string stage = "usage";
  try {
    app.parse(argc, argv);
    if (gen->parsed()) return (stage = "gen", cmd_gen(gen_args));
    if (textgen->parsed())
      return (stage = "textgen", cmd_textgen(textgen_args, text_task, corpus_path, score_word,
                                             textgen_n));
    if (pretrain->parsed()) return (stage = "pretrain", cmd_pretrain(pretrain_args));
    if (probe->parsed()) return (stage = "probe", cmd_probe(probe_args));
    if (train->parsed()) return (stage = "train", cmd_train(train_args));
    if (eval->parsed()) return (stage = "eval", cmd_eval(eval_args, eval_checkpoint));
    if (sweep->parsed()) return (stage = "sweep", cmd_sweep(sweep_args));
    if (report->parsed()) return (stage = "report", cmd_report(report_args));
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code == 0) return 0;  // --help / --version
    std::cerr << bb::error_line("usage", e.what()) << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << bb::error_line(stage, e.what()) << std::endl;
    return 2;
  }
}
