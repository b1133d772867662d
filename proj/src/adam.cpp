#include "biasbench/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace bb {

Adam::Adam(const PolicyModel& m, AdamConfig cfg) : cfg_(cfg) {
  if (cfg_.lr <= 0 || cfg_.beta1 <= 0 || cfg_.beta1 >= 1 || cfg_.beta2 <= 0 || cfg_.beta2 >= 1 ||
      cfg_.eps <= 0)
    throw std::invalid_argument("Adam: invalid hyperparameters");
  m1_.reserve(m.params.size());
  m2_.reserve(m.params.size());
  for (const auto& [name, t] : m.params) {
    m1_.push_back(Tensor::zeros(t.shape));
    m2_.push_back(Tensor::zeros(t.shape));
  }
}

void Adam::step(PolicyModel& m, const std::vector<const Tensor*>& grads) {
  if (grads.size() != m.params.size())
    throw std::invalid_argument("Adam::step: got " + std::to_string(grads.size()) +
                                " gradients for " + std::to_string(m.params.size()) +
                                " parameters");
  ++t_;
  const float b1 = static_cast<float>(cfg_.beta1);
  const float b2 = static_cast<float>(cfg_.beta2);
  const float one_b1 = 1.0f - b1;
  const float one_b2 = 1.0f - b2;
  const double corr1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double corr2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const float step_size = static_cast<float>(cfg_.lr / corr1);
  const float inv_sqrt_corr2 = static_cast<float>(1.0 / std::sqrt(corr2));
  const float eps = static_cast<float>(cfg_.eps);

  for (std::size_t i = 0; i < m.params.size(); ++i) {
    Tensor& p = m.params[i].second;
    const Tensor& g = *grads[i];
    if (!p.same_shape(g))
      throw std::invalid_argument("Adam::step: gradient shape " + g.shape_str() +
                                  " mismatches parameter " + m.params[i].first + " " +
                                  p.shape_str());
    float* pd = p.data.data();
    float* m1 = m1_[i].data.data();
    float* m2 = m2_[i].data.data();
    const float* gd = g.data.data();
    for (std::size_t j = 0; j < p.data.size(); ++j) {
      m1[j] = b1 * m1[j] + one_b1 * gd[j];
      m2[j] = b2 * m2[j] + one_b2 * gd[j] * gd[j];
      pd[j] -= step_size * m1[j] / (std::sqrt(m2[j]) * inv_sqrt_corr2 + eps);
    }
  }
}

}  // namespace bb
