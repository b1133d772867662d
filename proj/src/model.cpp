#include "biasbench/model.hpp"

#include <cmath>
#include <stdexcept>

namespace bb {

void ModelConfig::validate() const {
  if (vocab_size < 2) throw std::invalid_argument("ModelConfig: vocab_size must be >= 2");
  if (n_layers < 1) throw std::invalid_argument("ModelConfig: n_layers must be >= 1");
  if (d_model < 1 || n_heads < 1 || d_ff < 1 || max_seq_len < 1)
    throw std::invalid_argument("ModelConfig: extents must be positive");
  if (d_model % n_heads != 0)
    throw std::invalid_argument("ModelConfig: d_model " + std::to_string(d_model) +
                                " not divisible by n_heads " + std::to_string(n_heads));
}

ModelConfig desk_scale_config() { return ModelConfig{}; }

ModelConfig paper_scale_config() {
  ModelConfig cfg;
  cfg.d_model = 256;
  cfg.n_heads = 8;
  cfg.d_ff = 6790;
  return cfg;
}

Tensor& PolicyModel::param(const std::string& name) {
  for (auto& [n, t] : params)
    if (n == name) return t;
  throw std::out_of_range("PolicyModel: no parameter named " + name);
}

const Tensor& PolicyModel::param(const std::string& name) const {
  for (const auto& [n, t] : params)
    if (n == name) return t;
  throw std::out_of_range("PolicyModel: no parameter named " + name);
}

std::size_t PolicyModel::n_params() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

PolicyModel init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  PolicyModel m;
  m.cfg = cfg;
  Rng rng = Rng(seed).child("model-init");

  const auto V = static_cast<std::size_t>(cfg.vocab_size);
  const auto D = static_cast<std::size_t>(cfg.d_model);
  const auto F = static_cast<std::size_t>(cfg.d_ff);
  const auto L = static_cast<std::size_t>(cfg.max_seq_len);
  const double base = 0.02;
  // Residual-branch output projections start smaller so the residual stream's
  // variance stays flat with depth.
  const double resid = base / std::sqrt(2.0 * cfg.n_layers);

  auto push = [&m](const std::string& name, Tensor t) { m.params.emplace_back(name, std::move(t)); };
  push("tok_emb", Tensor::randn({V, D}, rng, base));
  push("pos_emb", Tensor::randn({L, D}, rng, base));
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    push(p + "ln1.g", Tensor::full({D}, 1.0f));
    push(p + "ln1.b", Tensor::zeros({D}));
    push(p + "attn.w_qkv", Tensor::randn({D, 3 * D}, rng, base));
    push(p + "attn.b_qkv", Tensor::zeros({3 * D}));
    push(p + "attn.w_o", Tensor::randn({D, D}, rng, resid));
    push(p + "attn.b_o", Tensor::zeros({D}));
    push(p + "ln2.g", Tensor::full({D}, 1.0f));
    push(p + "ln2.b", Tensor::zeros({D}));
    push(p + "ffn.w1", Tensor::randn({D, F}, rng, base));
    push(p + "ffn.b1", Tensor::zeros({F}));
    push(p + "ffn.w2", Tensor::randn({F, D}, rng, resid));
    push(p + "ffn.b2", Tensor::zeros({D}));
  }
  push("final_ln.g", Tensor::full({D}, 1.0f));
  push("final_ln.b", Tensor::zeros({D}));
  push("lm_head.w", Tensor::randn({D, V}, rng, base));
  push("lm_head.b", Tensor::zeros({V}));
  if (cfg.value_head) {
    push("value_head.w", Tensor::randn({D, 1}, rng, base));
    push("value_head.b", Tensor::zeros({1}));
  }
  return m;
}

Forward forward(Tape& t, const PolicyModel& m, const std::vector<int>& tokens,
                std::size_t batch, std::size_t seq, bool needs_grad) {
  const ModelConfig& cfg = m.cfg;
  if (batch == 0 || seq == 0)
    throw std::invalid_argument("forward: batch and seq must be positive");
  if (seq > static_cast<std::size_t>(cfg.max_seq_len))
    throw std::invalid_argument("forward: seq " + std::to_string(seq) + " exceeds max_seq_len " +
                                std::to_string(cfg.max_seq_len));
  if (tokens.size() != batch * seq)
    throw std::invalid_argument("forward: got " + std::to_string(tokens.size()) +
                                " tokens for batch " + std::to_string(batch) + " x seq " +
                                std::to_string(seq));
  for (int id : tokens)
    if (id < 0 || id >= cfg.vocab_size)
      throw std::invalid_argument("forward: token id " + std::to_string(id) +
                                  " out of range [0," + std::to_string(cfg.vocab_size) + ")");

  Forward out;
  out.param_nodes.reserve(m.params.size());
  for (const auto& [name, tensor] : m.params) out.param_nodes.push_back(t.leaf(tensor, needs_grad));
  auto pn = [&](const std::string& name) -> NodeId {
    for (std::size_t i = 0; i < m.params.size(); ++i)
      if (m.params[i].first == name) return out.param_nodes[i];
    throw std::out_of_range("forward: no parameter named " + name);
  };

  std::vector<int> pos_ids(batch * seq);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < seq; ++i) pos_ids[b * seq + i] = static_cast<int>(i);

  NodeId h = t.add(t.embed(pn("tok_emb"), tokens), t.embed(pn("pos_emb"), pos_ids));
  out.hidden.push_back(h);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    NodeId a = t.layer_norm(h, pn(p + "ln1.g"), pn(p + "ln1.b"));
    NodeId qkv = t.add_bias(t.matmul(a, pn(p + "attn.w_qkv")), pn(p + "attn.b_qkv"));
    NodeId att = t.causal_attention(qkv, batch, seq, static_cast<std::size_t>(cfg.n_heads));
    NodeId proj = t.add_bias(t.matmul(att, pn(p + "attn.w_o")), pn(p + "attn.b_o"));
    h = t.add(h, proj);
    NodeId f = t.layer_norm(h, pn(p + "ln2.g"), pn(p + "ln2.b"));
    NodeId f1 = t.gelu(t.add_bias(t.matmul(f, pn(p + "ffn.w1")), pn(p + "ffn.b1")));
    NodeId f2 = t.add_bias(t.matmul(f1, pn(p + "ffn.w2")), pn(p + "ffn.b2"));
    h = t.add(h, f2);
    if (l + 1 < cfg.n_layers) out.hidden.push_back(h);
  }
  NodeId hf = t.layer_norm(h, pn("final_ln.g"), pn("final_ln.b"));
  out.hidden.push_back(hf);
  out.logits = t.add_bias(t.matmul(hf, pn("lm_head.w")), pn("lm_head.b"));
  if (cfg.value_head)
    out.values = t.add_bias(t.matmul(hf, pn("value_head.w")), pn("value_head.b"));
  return out;
}

namespace {

// Categorical draw and temperature-1 log-prob from one row of raw logits,
// both computed against the max-subtracted softmax in double precision.
struct RowDist {
  std::vector<double> probs;      // at the sampling temperature
  std::vector<double> logp_t1;    // log-probs at temperature 1
};

RowDist row_distribution(const float* logits, std::size_t n, double temperature) {
  RowDist rd;
  rd.probs.resize(n);
  rd.logp_t1.resize(n);
  double mx = logits[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, static_cast<double>(logits[j]));
  double denom1 = 0.0, denom_t = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double z = static_cast<double>(logits[j]) - mx;
    denom1 += std::exp(z);
    rd.probs[j] = std::exp(z / temperature);
    denom_t += rd.probs[j];
  }
  const double log_denom1 = std::log(denom1);
  for (std::size_t j = 0; j < n; ++j) {
    rd.probs[j] /= denom_t;
    rd.logp_t1[j] = static_cast<double>(logits[j]) - mx - log_denom1;
  }
  return rd;
}

}  // namespace

Sampled sample_completion(const PolicyModel& m, const std::vector<int>& prompt, int n_new,
                          double temperature, Rng& rng, bool greedy) {
  if (n_new < 1) throw std::invalid_argument("sample_completion: n_new must be >= 1");
  if (prompt.empty()) throw std::invalid_argument("sample_completion: empty prompt");
  if (!greedy && temperature <= 0.0)
    throw std::invalid_argument("sample_completion: temperature must be positive");
  if (prompt.size() + static_cast<std::size_t>(n_new) >
      static_cast<std::size_t>(m.cfg.max_seq_len))
    throw std::invalid_argument("sample_completion: prompt + n_new exceeds max_seq_len");

  std::vector<int> seq = prompt;
  Sampled result;
  const auto vocab = static_cast<std::size_t>(m.cfg.vocab_size);
  for (int step = 0; step < n_new; ++step) {
    Tape t;
    Forward f = forward(t, m, seq, 1, seq.size(), false);
    const Tensor& logits = t.value(f.logits);
    const float* row = logits.data.data() + (seq.size() - 1) * vocab;
    const RowDist rd = row_distribution(row, vocab, greedy ? 1.0 : temperature);
    std::size_t pick;
    if (greedy) {
      pick = 0;
      for (std::size_t j = 1; j < vocab; ++j)
        if (row[j] > row[pick]) pick = j;
    } else {
      pick = sample_categorical(rd.probs, rng);
    }
    result.tokens.push_back(static_cast<int>(pick));
    result.logprobs.push_back(rd.logp_t1[pick]);
    seq.push_back(static_cast<int>(pick));
  }
  return result;
}

std::vector<Sampled> sample_completions_batch(const PolicyModel& m,
                                              const std::vector<std::vector<int>>& prompts,
                                              int n_new, double temperature, Rng& rng,
                                              const std::string& label) {
  if (prompts.empty()) throw std::invalid_argument("sample_completions_batch: no prompts");
  if (n_new < 1) throw std::invalid_argument("sample_completions_batch: n_new must be >= 1");
  if (temperature <= 0.0)
    throw std::invalid_argument("sample_completions_batch: temperature must be positive");
  const std::size_t batch = prompts.size();
  const std::size_t plen = prompts[0].size();
  if (plen == 0) throw std::invalid_argument("sample_completions_batch: empty prompt");
  for (const auto& p : prompts)
    if (p.size() != plen)
      throw std::invalid_argument("sample_completions_batch: prompts must share a length");
  if (plen + static_cast<std::size_t>(n_new) > static_cast<std::size_t>(m.cfg.max_seq_len))
    throw std::invalid_argument("sample_completions_batch: prompt + n_new exceeds max_seq_len");

  std::vector<Rng> episode_rngs;
  episode_rngs.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) episode_rngs.push_back(rng.child(label, b));

  std::vector<std::vector<int>> seqs = prompts;
  std::vector<Sampled> out(batch);
  const auto vocab = static_cast<std::size_t>(m.cfg.vocab_size);
  for (int step = 0; step < n_new; ++step) {
    const std::size_t seq_len = plen + static_cast<std::size_t>(step);
    std::vector<int> flat;
    flat.reserve(batch * seq_len);
    for (const auto& s : seqs) flat.insert(flat.end(), s.begin(), s.end());
    Tape t;
    Forward f = forward(t, m, flat, batch, seq_len, false);
    const Tensor& logits = t.value(f.logits);
    for (std::size_t b = 0; b < batch; ++b) {
      const float* row = logits.data.data() + (b * seq_len + seq_len - 1) * vocab;
      const RowDist rd = row_distribution(row, vocab, temperature);
      const std::size_t pick = sample_categorical(rd.probs, episode_rngs[b]);
      out[b].tokens.push_back(static_cast<int>(pick));
      out[b].logprobs.push_back(rd.logp_t1[pick]);
      seqs[b].push_back(static_cast<int>(pick));
    }
  }
  return out;
}

Tensor hidden_at(const PolicyModel& m, const std::vector<int>& tokens, int layer, int position) {
  if (layer < 0 || layer > m.cfg.n_layers)
    throw std::out_of_range("hidden_at: layer " + std::to_string(layer) + " out of range [0," +
                            std::to_string(m.cfg.n_layers) + "]");
  if (position < 0 || static_cast<std::size_t>(position) >= tokens.size())
    throw std::out_of_range("hidden_at: position " + std::to_string(position) +
                            " out of range for " + std::to_string(tokens.size()) + " tokens");
  Tape t;
  Forward f = forward(t, m, tokens, 1, tokens.size(), false);
  const Tensor& h = t.value(f.hidden[static_cast<std::size_t>(layer)]);
  const std::size_t d = h.cols();
  Tensor out({d});
  std::copy_n(h.data.data() + static_cast<std::size_t>(position) * d, d, out.data.data());
  return out;
}

}  // namespace bb
