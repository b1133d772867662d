#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "biasbench/model.hpp"
#include "biasbench/rng.hpp"
#include "biasbench/task.hpp"

namespace bb {

struct ProbeConfig {
  int steps = 200;          // full-batch GD steps per block
  double lr = 0.1;
  double weight_decay = 1e-4;  // L2 on weights (not bias)
  double prob_floor = 1e-7;    // bound on -log2 p per example
  void validate() const;
  bool operator==(const ProbeConfig&) const = default;
};

// Geometric doubling boundaries t1 < t2 < ... = n with t1 = max(2,
// ceil(0.001*n)); the last boundary is clamped to n. Errors for n < 4.
std::vector<int> block_schedule(int n);

// Prequential (online-coding) codelength in bits. The first block is sent
// under the uniform 1-bit-per-label code (exactly t1 bits); every later block
// costs one selector bit plus the cheaper of the probe code (probe trained on
// all earlier examples, warm-started within this call) and the uniform code,
// so the total can never exceed n by more than the selector overhead. Data is
// shuffled by `seed`; per-block costs are appended to *block_bits if given.
double prequential_mdl(const std::vector<std::vector<float>>& representations,
                       const std::vector<int>& labels, const std::vector<int>& schedule,
                       const ProbeConfig& cfg, std::uint64_t seed,
                       std::vector<double>* block_bits = nullptr);

struct MdlReport {
  std::string task;
  std::string feature;  // "target" or "spurious"
  std::vector<double> per_seed_bits;
  double mean_bits = 0.0;
  double std_bits = 0.0;  // sample std over seeds
};

// Probe dataset composition: the target probe separates s-only (label 0) from
// both (label 1); the spurious probe separates neither (label 0) from s-only
// (label 1). Representations are the final-layer-norm output at the last
// prompt position. One dataset per call; seeds vary only the shuffle and the
// probe training, mirroring repeated transmission of the same data.
MdlReport feature_mdl(const PolicyModel& model, const SyntheticTask& task,
                      const std::string& feature, int n, int seeds, Rng& rng,
                      const ProbeConfig& cfg = {});

// Ratio of means with first-order error propagation:
// sigma_r = r * sqrt((sigma_s/mu_s)^2 + (sigma_t/mu_t)^2).
std::pair<double, double> relative_mdl(const MdlReport& report_s, const MdlReport& report_t);

std::string mdl_report_json(const MdlReport& report);
MdlReport parse_mdl_report_json(const std::string& text);
std::string relative_mdl_csv_header();
std::string relative_mdl_csv_row(const std::string& task, const MdlReport& report_s,
                                 const MdlReport& report_t);

}  // namespace bb
