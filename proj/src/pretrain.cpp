#include "biasbench/pretrain.hpp"

#include <sstream>
#include <stdexcept>

#include "biasbench/adam.hpp"
#include "biasbench/io.hpp"
#include "biasbench/tape.hpp"

namespace bb {

void PretrainConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("pretrain: steps must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("pretrain: batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("pretrain: lr must be positive");
}

PretrainResult pretrain_lm(PolicyModel& model, const SyntheticTask& task,
                           const PretrainConfig& cfg, Rng& rng,
                           const std::function<void(int, double)>& progress) {
  cfg.validate();
  const int prompt_len = task.prompt_len;
  if (prompt_len < 2) throw std::invalid_argument("pretrain: prompt_len must be >= 2");
  if (model.cfg.max_seq_len < prompt_len) {
    throw std::invalid_argument("pretrain: model max_seq_len shorter than prompts");
  }
  Adam opt(model, AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  PretrainResult result;
  result.loss_curve.reserve(static_cast<std::size_t>(cfg.steps));
  double initial_loss = 0.0;
  int bad_streak = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    Rng step_rng = rng.child("pretrain-step", static_cast<std::uint64_t>(step));
    std::vector<int> tokens;
    tokens.reserve(static_cast<std::size_t>(cfg.batch_size) * prompt_len);
    std::vector<int> labels;
    labels.reserve(tokens.capacity());
    for (int b = 0; b < cfg.batch_size; ++b) {
      Quadrant q = kQuadrants[step_rng.next_below(4)];
      std::vector<int> prompt = sample_quadrant(task, q, step_rng);
      for (int i = 0; i < prompt_len; ++i) {
        tokens.push_back(prompt[static_cast<std::size_t>(i)]);
        // Predict the next token within the prompt; the final position has
        // no successor and is masked out of the loss.
        labels.push_back(i + 1 < prompt_len ? prompt[static_cast<std::size_t>(i + 1)] : -1);
      }
    }
    Tape tape;
    Forward fwd = forward(tape, model, tokens, cfg.batch_size, prompt_len, /*needs_grad=*/true);
    NodeId loss = tape.cross_entropy(fwd.logits, labels);
    double loss_value = tape.scalar(loss);
    tape.backward(loss);
    std::vector<const Tensor*> grads;
    grads.reserve(fwd.param_nodes.size());
    for (NodeId id : fwd.param_nodes) grads.push_back(&tape.grad(id));
    opt.step(model, grads);
    result.loss_curve.push_back(loss_value);
    if (progress) progress(step, loss_value);
    if (step == 0) {
      initial_loss = loss_value;
    } else if (loss_value > 2.0 * initial_loss) {
      if (++bad_streak >= 100) {
        throw std::runtime_error(
            "pretrain: diverged on task " + task.name + " at step " + std::to_string(step) +
            " (loss " + std::to_string(loss_value) + " > 2x initial " +
            std::to_string(initial_loss) + " for 100 consecutive steps)");
      }
    } else {
      bad_streak = 0;
    }
  }
  return result;
}

std::string pretrain_log_csv(const PretrainResult& result) {
  std::ostringstream csv;
  csv << "step,loss\n";
  for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
    csv << i << "," << format_double(result.loss_curve[i]) << "\n";
  }
  return csv.str();
}

}  // namespace bb
