#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "biasbench/rng.hpp"
#include "biasbench/tape.hpp"

namespace bb {

struct ModelConfig {
  int vocab_size = 10;
  int n_layers = 4;
  int d_model = 128;
  int n_heads = 4;
  int d_ff = 512;
  int max_seq_len = 16;
  bool value_head = true;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// ~0.9M parameters; the default everywhere runtime matters.
ModelConfig desk_scale_config();
// d_model 256 with a widened FFN, ~15M parameters.
ModelConfig paper_scale_config();

// Decoder-only transformer: learned positional embeddings, pre-LN blocks,
// GELU FFN, untied LM head, optional scalar value head off the final
// layer-norm output.
struct PolicyModel {
  ModelConfig cfg;
  std::vector<std::pair<std::string, Tensor>> params;  // fixed order

  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;
  std::size_t n_params() const;
};

PolicyModel init_model(const ModelConfig& cfg, std::uint64_t seed);

struct Forward {
  NodeId logits = -1;  // [batch*seq, vocab]
  NodeId values = -1;  // [batch*seq, 1]; -1 when the model has no value head
  // hidden[0] = embedding sum; hidden[l] (1 <= l < n_layers) = residual stream
  // after block l; hidden[n_layers] = post final layer-norm (the probing
  // representation).
  std::vector<NodeId> hidden;
  std::vector<NodeId> param_nodes;  // aligned with model.params
};

// Records the full forward pass on `t`. tokens is row-major [batch, seq].
// With needs_grad=false the tape records values only (no backward closures).
Forward forward(Tape& t, const PolicyModel& m, const std::vector<int>& tokens,
                std::size_t batch, std::size_t seq, bool needs_grad);

struct Sampled {
  std::vector<int> tokens;
  std::vector<double> logprobs;  // under the model at temperature 1
};

// Autoregressive sampling of n_new tokens. Draws from softmax(logits /
// temperature); recorded log-probs are always at temperature 1 so importance
// ratios stay well-defined. greedy=true ignores temperature and takes argmax.
Sampled sample_completion(const PolicyModel& m, const std::vector<int>& prompt, int n_new,
                          double temperature, Rng& rng, bool greedy = false);

// Batched variant: one forward per generation step covering every episode.
// Prompts must share a length. Episode b draws from rng.child(label, b), so
// each episode's stream is independent of batch composition and iteration
// order; results match per-episode sample_completion calls on those streams.
std::vector<Sampled> sample_completions_batch(const PolicyModel& m,
                                              const std::vector<std::vector<int>>& prompts,
                                              int n_new, double temperature, Rng& rng,
                                              const std::string& label = "episode");

// Representation of `tokens` at (layer, position); layer indexes Forward::hidden,
// so layer == n_layers is the post-layer-norm probing vector.
Tensor hidden_at(const PolicyModel& m, const std::vector<int>& tokens, int layer, int position);

}  // namespace bb
