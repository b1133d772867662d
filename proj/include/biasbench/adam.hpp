#pragma once

#include <vector>

#include "biasbench/model.hpp"

namespace bb {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction, no weight decay. Moments are per-parameter f32
// tensors; the update itself runs elementwise in float with double scalar
// factors, so steps are deterministic.
class Adam {
 public:
  Adam(const PolicyModel& m, AdamConfig cfg);

  // grads must align with m.params (same order, same shapes).
  void step(PolicyModel& m, const std::vector<const Tensor*>& grads);

  long steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<Tensor> m1_, m2_;
};

}  // namespace bb
