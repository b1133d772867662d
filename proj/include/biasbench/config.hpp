#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "biasbench/mdl.hpp"
#include "biasbench/model.hpp"
#include "biasbench/ppo.hpp"
#include "biasbench/pretrain.hpp"

namespace bb {

// Sectioned key=value run configuration. Unknown sections or keys are
// rejected; serialization is lossless (shortest round-trip numerals), so
// parse(serialize(cfg)) == cfg.
struct RunConfig {
  // [run]
  std::uint64_t master_seed = 0;
  std::uint64_t condition_seed = 0;  // per-condition seed index for gen/train/eval
  std::string task = "contains-1";
  double p = 0.1;

  // [model]; preset "desk" or "paper" applies first, explicit keys override.
  std::string preset = "desk";
  ModelConfig model;

  // [pretrain]
  PretrainConfig pretrain;

  // [ppo]
  PpoConfig ppo;

  // [data]
  int train_size = 4096;  // |D|; the paper preset raises this to 24576
  int test_per_quadrant = 512;

  // [probe]
  int probe_n = 2048;
  int probe_seeds = 5;
  ProbeConfig probe;

  // [experiment]
  std::vector<std::string> tasks = {"contains-1", "prefix-dupl", "adj-dupl", "first-last"};
  std::vector<double> p_grid = {0.0, 0.01, 0.05, 0.1, 0.25, 0.5};
  int seeds = 3;
  double threshold = 0.8;  // convergence filter on T_neither mean reward
  int eval_samples = 1;    // completions per test prompt
  int workers = 0;         // sweep worker threads; 0 = hardware concurrency

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

RunConfig parse_config(const std::string& text);
RunConfig parse_config_file(const std::string& path);
std::string serialize_config(const RunConfig& cfg);

}  // namespace bb
