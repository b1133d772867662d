#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "biasbench/tensor.hpp"

namespace bb {

using NodeId = int;

// Reverse-mode autodiff over an append-only op tape.
//
// Values are 32-bit floats; scalar reductions additionally track a 64-bit
// value (exposed via scalar()) so losses accumulate without float drift.
// A tape is single-threaded and single-use: record forward ops, call
// backward(loss) once, read gradients.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // needs_grad marks a differentiable leaf (parameter or checked input).
  NodeId leaf(Tensor value, bool needs_grad = false);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  // x: [R,C], bias: [C] broadcast over rows.
  NodeId add_bias(NodeId x, NodeId bias);
  // table: [V,d]; out row i = table row ids[i].
  NodeId embed(NodeId table, std::vector<int> ids);
  // Per-row normalization with affine rescale; epsilon 1e-5.
  NodeId layer_norm(NodeId x, NodeId gain, NodeId bias);
  NodeId gelu(NodeId x);
  // Fused multi-head causal self-attention. qkv: [batch*seq, 3*d] laid out as
  // [q|k|v] per row; returns [batch*seq, d].
  NodeId causal_attention(NodeId qkv, std::size_t batch, std::size_t seq, std::size_t heads);
  // Row-wise, max-subtracted.
  NodeId softmax(NodeId x);
  NodeId log_softmax(NodeId x);
  // Mean negative log-likelihood over rows whose label is >= 0; label -1
  // masks a row out. Errors if every row is masked.
  NodeId cross_entropy(NodeId logits, std::vector<int> labels);
  NodeId mean(NodeId x);
  NodeId sum(NodeId x);
  NodeId scale(NodeId x, double c);
  NodeId exp(NodeId x);
  NodeId square(NodeId x);
  // Subgradient 0 outside (lo, hi).
  NodeId clamp(NodeId x, double lo, double hi);
  // Elementwise min; ties route the gradient to `a`.
  NodeId minimum(NodeId a, NodeId b);
  // out[i] = x.data[idx[i]] (flat indexing); backward scatter-adds.
  NodeId gather(NodeId x, std::vector<std::size_t> idx);

  const Tensor& value(NodeId id) const { return node(id).value; }
  // 64-bit value for scalar nodes; exact for reductions and for scalar
  // arithmetic chains built from them.
  double scalar(NodeId id) const;
  // Gradient of the last backward() target w.r.t. node id. After backward,
  // every needs_grad node has a gradient (zeros if unreachable).
  const Tensor& grad(NodeId id) const;
  bool needs_grad(NodeId id) const { return node(id).needs_grad; }
  std::size_t n_nodes() const { return nodes_.size(); }

  void backward(NodeId loss);

 private:
  friend struct TapeOps;
  struct Node {
    Tensor value;
    Tensor grad;  // empty until touched by backward
    bool needs_grad = false;
    std::optional<double> value64;  // tracked for scalar chains
    std::function<void(Tape&)> backprop;  // empty for leaves / no-grad nodes
  };

  Node& node(NodeId id);
  const Node& node(NodeId id) const;
  Tensor& grad_buf(NodeId id);
  NodeId push(Tensor value, bool needs_grad, std::function<void(Tape&)> backprop);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Relative gradient error |analytic - numeric|_2 / max(1e-8, |analytic|_2 +
// |numeric|_2), where numeric is the central finite difference of f at step
// eps (measured as the step actually achieved after float rounding). f
// receives a fresh tape and the id of its differentiable input and returns
// the loss node. The L2 aggregate keeps single-coordinate float noise from
// swamping the check while a wrong coordinate still fails it by orders of
// magnitude.
double grad_check(const std::function<NodeId(Tape&, NodeId)>& f, const Tensor& x,
                  double eps = 1e-3);

}  // namespace bb
