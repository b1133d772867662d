#include "biasbench/tape.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>

namespace bb {
namespace {

using EMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;
using EStride = Eigen::OuterStride<Eigen::Dynamic>;
using ESMap = Eigen::Map<EMat, Eigen::Unaligned, EStride>;
using ESCMap = Eigen::Map<const EMat, Eigen::Unaligned, EStride>;

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    shape_error(op, "shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2/pi)
constexpr float kGeluA = 0.044715f;

}  // namespace

Tape::Node& Tape::node(NodeId id) {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw std::out_of_range("Tape: bad node id " + std::to_string(id));
  return nodes_[static_cast<std::size_t>(id)];
}

const Tape::Node& Tape::node(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw std::out_of_range("Tape: bad node id " + std::to_string(id));
  return nodes_[static_cast<std::size_t>(id)];
}

Tensor& Tape::grad_buf(NodeId id) {
  Node& n = node(id);
  if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
  return n.grad;
}

NodeId Tape::push(Tensor value, bool needs_grad, std::function<void(Tape&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::leaf(Tensor value, bool needs_grad) {
  value.require_finite("leaf");
  return push(std::move(value), needs_grad, {});
}

double Tape::scalar(NodeId id) const {
  const Node& n = node(id);
  if (n.value64) return *n.value64;
  if (!n.value.is_scalar())
    throw std::invalid_argument("Tape::scalar: node is not scalar, shape " + n.value.shape_str());
  return static_cast<double>(n.value.data[0]);
}

const Tensor& Tape::grad(NodeId id) const {
  const Node& n = node(id);
  if (n.grad.data.empty())
    throw std::logic_error("Tape::grad: no gradient recorded for node " + std::to_string(id));
  return n.grad;
}

void Tape::backward(NodeId loss) {
  if (backward_done_) throw std::logic_error("Tape::backward: already run on this tape");
  Node& top = node(loss);
  if (!top.value.is_scalar())
    throw std::invalid_argument("Tape::backward: loss must be scalar, shape " +
                                top.value.shape_str());
  backward_done_ = true;
  grad_buf(loss).data[0] = 1.0f;
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.data.empty() || !n.backprop) continue;
    n.backprop(*this);
  }
  // Every differentiable leaf gets a gradient, zeros when unreachable.
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].needs_grad && nodes_[i].grad.data.empty())
      nodes_[i].grad = Tensor::zeros(nodes_[i].value.shape);
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  if (ta.shape.size() != 2 || tb.shape.size() != 2)
    shape_error("matmul", "need 2-D operands, have " + ta.shape_str() + " and " + tb.shape_str());
  if (ta.cols() != tb.rows())
    shape_error("matmul", "inner extents differ: " + ta.shape_str() + " x " + tb.shape_str());
  const std::size_t m = ta.rows(), k = ta.cols(), n = tb.cols();
  Tensor out({m, n});
  {
    ECMap A(ta.data.data(), m, k), B(tb.data.data(), k, n);
    EMap C(out.data.data(), m, n);
    C.noalias() = A * B;
  }
  out.require_finite("matmul");
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  NodeId id = push(std::move(out), ng, {});
  if (ng) {
    node(id).backprop = [a, b, id, m, k, n](Tape& t) {
      const Tensor& g = t.node(id).grad;
      ECMap G(g.data.data(), m, n);
      if (t.node(a).needs_grad) {
        ECMap B(t.node(b).value.data.data(), k, n);
        EMap dA(t.grad_buf(a).data.data(), m, k);
        dA.noalias() += G * B.transpose();
      }
      if (t.node(b).needs_grad) {
        ECMap A(t.node(a).value.data.data(), m, k);
        EMap dB(t.grad_buf(b).data.data(), k, n);
        dB.noalias() += A.transpose() * G;
      }
    };
  }
  return id;
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  require_same_shape("add", ta, tb);
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
  out.require_finite("add");
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  NodeId id = push(std::move(out), ng, {});
  if (node(a).value64 && node(b).value64)
    node(id).value64 = *node(a).value64 + *node(b).value64;
  if (ng) {
    node(id).backprop = [a, b, id](Tape& t) {
      const Tensor& g = t.node(id).grad;
      for (NodeId src : {a, b}) {
        if (!t.node(src).needs_grad) continue;
        Tensor& d = t.grad_buf(src);
        for (std::size_t i = 0; i < g.data.size(); ++i) d.data[i] += g.data[i];
      }
    };
  }
  return id;
}

NodeId Tape::sub(NodeId a, NodeId b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  require_same_shape("sub", ta, tb);
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= tb.data[i];
  out.require_finite("sub");
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  NodeId id = push(std::move(out), ng, {});
  if (node(a).value64 && node(b).value64)
    node(id).value64 = *node(a).value64 - *node(b).value64;
  if (ng) {
    node(id).backprop = [a, b, id](Tape& t) {
      const Tensor& g = t.node(id).grad;
      if (t.node(a).needs_grad) {
        Tensor& d = t.grad_buf(a);
        for (std::size_t i = 0; i < g.data.size(); ++i) d.data[i] += g.data[i];
      }
      if (t.node(b).needs_grad) {
        Tensor& d = t.grad_buf(b);
        for (std::size_t i = 0; i < g.data.size(); ++i) d.data[i] -= g.data[i];
      }
    };
  }
  return id;
}

NodeId Tape::mul(NodeId a, NodeId b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  require_same_shape("mul", ta, tb);
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
  out.require_finite("mul");
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  NodeId id = push(std::move(out), ng, {});
  if (node(a).value64 && node(b).value64)
    node(id).value64 = *node(a).value64 * *node(b).value64;
  if (ng) {
    node(id).backprop = [a, b, id](Tape& t) {
      const Tensor& g = t.node(id).grad;
      if (t.node(a).needs_grad) {
        Tensor& d = t.grad_buf(a);
        const Tensor& vb = t.node(b).value;
        for (std::size_t i = 0; i < g.data.size(); ++i) d.data[i] += g.data[i] * vb.data[i];
      }
      if (t.node(b).needs_grad) {
        Tensor& d = t.grad_buf(b);
        const Tensor& va = t.node(a).value;
        for (std::size_t i = 0; i < g.data.size(); ++i) d.data[i] += g.data[i] * va.data[i];
      }
    };
  }
  return id;
}

NodeId Tape::add_bias(NodeId x, NodeId bias) {
  const Tensor& tx = node(x).value;
  const Tensor& tb = node(bias).value;
  if (tx.shape.size() != 2 || tb.shape.size() != 1 || tb.shape[0] != tx.cols())
    shape_error("add_bias", "need [R,C] + [C], have " + tx.shape_str() + " and " + tb.shape_str());
  const std::size_t r = tx.rows(), c = tx.cols();
  Tensor out = tx;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] += tb.data[j];
  out.require_finite("add_bias");
  const bool ng = node(x).needs_grad || node(bias).needs_grad;
  NodeId id = push(std::move(out), ng, {});
  if (ng) {
    node(id).backprop = [x, bias, id, r, c](Tape& t) {
      const Tensor& g = t.node(id).grad;
      if (t.node(x).needs_grad) {
        Tensor& d = t.grad_buf(x);
        for (std::size_t i = 0; i < g.data.size(); ++i) d.data[i] += g.data[i];
      }
      if (t.node(bias).needs_grad) {
        Tensor& d = t.grad_buf(bias);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) d.data[j] += g.data[i * c + j];
      }
    };
  }
  return id;
}

NodeId Tape::embed(NodeId table, std::vector<int> ids) {
  const Tensor& tt = node(table).value;
  if (tt.shape.size() != 2) shape_error("embed", "table must be 2-D, have " + tt.shape_str());
  const std::size_t v = tt.rows(), d = tt.cols();
  for (int i : ids)
    if (i < 0 || static_cast<std::size_t>(i) >= v)
      shape_error("embed", "id " + std::to_string(i) + " out of range [0," + std::to_string(v) + ")");
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(tt.data.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data.data() + i * d);
  const bool ng = node(table).needs_grad;
  NodeId id = push(std::move(out), ng, {});
  if (ng) {
    auto saved = std::make_shared<std::vector<int>>(std::move(ids));
    node(id).backprop = [table, id, saved, d](Tape& t) {
      const Tensor& g = t.node(id).grad;
      Tensor& dt = t.grad_buf(table);
      for (std::size_t i = 0; i < saved->size(); ++i) {
        float* dst = dt.data.data() + static_cast<std::size_t>((*saved)[i]) * d;
        const float* src = g.data.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    };
  }
  return id;
}

NodeId Tape::layer_norm(NodeId x, NodeId gain, NodeId bias) {
  const Tensor& tx = node(x).value;
  const Tensor& tg = node(gain).value;
  const Tensor& tb = node(bias).value;
  if (tx.shape.size() != 2 || tg.shape.size() != 1 || tb.shape.size() != 1 ||
      tg.shape[0] != tx.cols() || tb.shape[0] != tx.cols())
    shape_error("layer_norm", "need x [R,C], gain [C], bias [C]; have " + tx.shape_str() + ", " +
                               tg.shape_str() + ", " + tb.shape_str());
  const std::size_t r = tx.rows(), c = tx.cols();
  constexpr double kEps = 1e-5;
  Tensor out({r, c});
  auto xhat = std::make_shared<std::vector<float>>(r * c);
  auto inv_std = std::make_shared<std::vector<float>>(r);
  for (std::size_t i = 0; i < r; ++i) {
    const float* row = tx.data.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double t = row[j] - mu;
      var += t * t;
    }
    var /= static_cast<double>(c);
    const float inv = static_cast<float>(1.0 / std::sqrt(var + kEps));
    (*inv_std)[i] = inv;
    for (std::size_t j = 0; j < c; ++j) {
      const float xh = static_cast<float>((row[j] - mu)) * inv;
      (*xhat)[i * c + j] = xh;
      out.data[i * c + j] = tg.data[j] * xh + tb.data[j];
    }
  }
  out.require_finite("layer_norm");
  const bool ng = node(x).needs_grad || node(gain).needs_grad || node(bias).needs_grad;
  NodeId id = push(std::move(out), ng, {});
  if (ng) {
    node(id).backprop = [x, gain, bias, id, xhat, inv_std, r, c](Tape& t) {
      const Tensor& g = t.node(id).grad;
      const Tensor& tg2 = t.node(gain).value;
      const bool want_x = t.node(x).needs_grad;
      const bool want_g = t.node(gain).needs_grad;
      const bool want_b = t.node(bias).needs_grad;
      Tensor* dx = want_x ? &t.grad_buf(x) : nullptr;
      Tensor* dg = want_g ? &t.grad_buf(gain) : nullptr;
      Tensor* db = want_b ? &t.grad_buf(bias) : nullptr;
      for (std::size_t i = 0; i < r; ++i) {
        const float* grow = g.data.data() + i * c;
        const float* xh = xhat->data() + i * c;
        if (want_g)
          for (std::size_t j = 0; j < c; ++j) dg->data[j] += grow[j] * xh[j];
        if (want_b)
          for (std::size_t j = 0; j < c; ++j) db->data[j] += grow[j];
        if (want_x) {
          double m1 = 0.0, m2 = 0.0;  // mean(dxhat), mean(dxhat*xhat)
          for (std::size_t j = 0; j < c; ++j) {
            const double dxh = static_cast<double>(grow[j]) * tg2.data[j];
            m1 += dxh;
            m2 += dxh * xh[j];
          }
          m1 /= static_cast<double>(c);
          m2 /= static_cast<double>(c);
          const float inv = (*inv_std)[i];
          for (std::size_t j = 0; j < c; ++j) {
            const double dxh = static_cast<double>(grow[j]) * tg2.data[j];
            dx->data[i * c + j] += static_cast<float>(inv * (dxh - m1 - xh[j] * m2));
          }
        }
      }
    };
  }
  return id;
}

NodeId Tape::gelu(NodeId x) {
  const Tensor& tx = node(x).value;
  Tensor out = tx;
  for (float& v : out.data) {
    const float u = kGeluC * (v + kGeluA * v * v * v);
    v = 0.5f * v * (1.0f + std::tanh(u));
  }
  out.require_finite("gelu");
  const bool ng = node(x).needs_grad;
  NodeId id = push(std::move(out), ng, {});
  if (ng) {
    node(id).backprop = [x, id](Tape& t) {
      const Tensor& g = t.node(id).grad;
      const Tensor& vx = t.node(x).value;
      Tensor& d = t.grad_buf(x);
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        const float v = vx.data[i];
        const float u = kGeluC * (v + kGeluA * v * v * v);
        const float th = std::tanh(u);
        const float deriv = 0.5f * (1.0f + th) +
                            0.5f * v * (1.0f - th * th) * kGeluC * (1.0f + 3.0f * kGeluA * v * v);
        d.data[i] += g.data[i] * deriv;
      }
    };
  }
  return id;
}

NodeId Tape::causal_attention(NodeId qkv, std::size_t batch, std::size_t seq, std::size_t heads) {
  const Tensor& tq = node(qkv).value;
  if (tq.shape.size() != 2 || tq.rows() != batch * seq || tq.cols() % 3 != 0)
    shape_error("causal_attention",
                "need [batch*seq, 3d], have " + tq.shape_str() + " for batch " +
                    std::to_string(batch) + " seq " + std::to_string(seq));
  const std::size_t d = tq.cols() / 3;
  if (heads == 0 || d % heads != 0)
    shape_error("causal_attention", "d=" + std::to_string(d) + " not divisible by " +
                                        std::to_string(heads) + " heads");
  const std::size_t dh = d / heads;
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dh));

  Tensor out({batch * seq, d});
  // Saved softmax rows (zero above the diagonal), per (batch, head).
  auto probs = std::make_shared<std::vector<float>>(batch * heads * seq * seq, 0.0f);

  const long srow = static_cast<long>(3 * d);
  for (std::size_t b = 0; b < batch; ++b) {
    const float* base = tq.data.data() + b * seq * 3 * d;
    for (std::size_t h = 0; h < heads; ++h) {
      ESCMap Q(base + h * dh, seq, dh, EStride(srow));
      ESCMap K(base + d + h * dh, seq, dh, EStride(srow));
      ESCMap V(base + 2 * d + h * dh, seq, dh, EStride(srow));
      EMat S(seq, seq);
      S.noalias() = Q * K.transpose();
      float* P = probs->data() + (b * heads + h) * seq * seq;
      for (std::size_t i = 0; i < seq; ++i) {
        float mx = -std::numeric_limits<float>::infinity();
        for (std::size_t j = 0; j <= i; ++j)
          mx = std::max(mx, S(static_cast<long>(i), static_cast<long>(j)) * inv_sqrt);
        float denom = 0.0f;
        for (std::size_t j = 0; j <= i; ++j) {
          const float e =
              std::exp(S(static_cast<long>(i), static_cast<long>(j)) * inv_sqrt - mx);
          P[i * seq + j] = e;
          denom += e;
        }
        const float inv_den = 1.0f / denom;
        for (std::size_t j = 0; j <= i; ++j) P[i * seq + j] *= inv_den;
      }
      ECMap Pm(P, seq, seq);
      ESMap O(out.data.data() + b * seq * d + h * dh, seq, dh, EStride(static_cast<long>(d)));
      O.noalias() = Pm * V;
    }
  }
  out.require_finite("causal_attention");
  const bool ng = node(qkv).needs_grad;
  NodeId id = push(std::move(out), ng, {});
  if (ng) {
    node(id).backprop = [qkv, id, probs, batch, seq, heads, d, dh, inv_sqrt, srow](Tape& t) {
      const Tensor& g = t.node(id).grad;
      const Tensor& tq2 = t.node(qkv).value;
      Tensor& dqkv = t.grad_buf(qkv);
      EMat dP(seq, seq), dS(seq, seq);
      for (std::size_t b = 0; b < batch; ++b) {
        const float* base = tq2.data.data() + b * seq * 3 * d;
        float* dbase = dqkv.data.data() + b * seq * 3 * d;
        for (std::size_t h = 0; h < heads; ++h) {
          ESCMap Q(base + h * dh, seq, dh, EStride(srow));
          ESCMap K(base + d + h * dh, seq, dh, EStride(srow));
          ESCMap V(base + 2 * d + h * dh, seq, dh, EStride(srow));
          ESMap dQ(dbase + h * dh, seq, dh, EStride(srow));
          ESMap dK(dbase + d + h * dh, seq, dh, EStride(srow));
          ESMap dV(dbase + 2 * d + h * dh, seq, dh, EStride(srow));
          ESCMap dO(g.data.data() + b * seq * d + h * dh, seq, dh,
                    EStride(static_cast<long>(d)));
          ECMap Pm(probs->data() + (b * heads + h) * seq * seq, seq, seq);
          dV.noalias() += Pm.transpose() * dO;
          dP.noalias() = dO * V.transpose();
          for (std::size_t i = 0; i < seq; ++i) {
            const long li = static_cast<long>(i);
            double dot = 0.0;
            for (std::size_t j = 0; j <= i; ++j)
              dot += static_cast<double>(dP(li, static_cast<long>(j))) *
                     Pm(li, static_cast<long>(j));
            for (std::size_t j = 0; j < seq; ++j) {
              const long lj = static_cast<long>(j);
              dS(li, lj) = (j <= i)
                               ? Pm(li, lj) * (dP(li, lj) - static_cast<float>(dot)) * inv_sqrt
                               : 0.0f;
            }
          }
          dQ.noalias() += dS * K;
          dK.noalias() += dS.transpose() * Q;
        }
      }
    };
  }
  return id;
}

NodeId Tape::softmax(NodeId x) {
  const Tensor& tx = node(x).value;
  if (tx.shape.size() != 2) shape_error("softmax", "need 2-D, have " + tx.shape_str());
  const std::size_t r = tx.rows(), c = tx.cols();
  Tensor out({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    const float* row = tx.data.data() + i * c;
    float* orow = out.data.data() + i * c;
    float mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const float e = std::exp(row[j] - mx);
      orow[j] = e;
      denom += e;
    }
    const float inv = static_cast<float>(1.0 / denom);
    for (std::size_t j = 0; j < c; ++j) orow[j] *= inv;
  }
  out.require_finite("softmax");
  const bool ng = node(x).needs_grad;
  NodeId id = push(std::move(out), ng, {});
  if (ng) {
    node(id).backprop = [x, id, r, c](Tape& t) {
      const Tensor& g = t.node(id).grad;
      const Tensor& p = t.node(id).value;
      Tensor& d = t.grad_buf(x);
      for (std::size_t i = 0; i < r; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += static_cast<double>(g.data[i * c + j]) * p.data[i * c + j];
        for (std::size_t j = 0; j < c; ++j)
          d.data[i * c + j] += p.data[i * c + j] * (g.data[i * c + j] - static_cast<float>(dot));
      }
    };
  }
  return id;
}

NodeId Tape::log_softmax(NodeId x) {
  const Tensor& tx = node(x).value;
  if (tx.shape.size() != 2) shape_error("log_softmax", "need 2-D, have " + tx.shape_str());
  const std::size_t r = tx.rows(), c = tx.cols();
  Tensor out({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    const float* row = tx.data.data() + i * c;
    float* orow = out.data.data() + i * c;
    float mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
    const float lse = mx + static_cast<float>(std::log(denom));
    for (std::size_t j = 0; j < c; ++j) orow[j] = row[j] - lse;
  }
  out.require_finite("log_softmax");
  const bool ng = node(x).needs_grad;
  NodeId id = push(std::move(out), ng, {});
  if (ng) {
    node(id).backprop = [x, id, r, c](Tape& t) {
      const Tensor& g = t.node(id).grad;
      const Tensor& lp = t.node(id).value;
      Tensor& d = t.grad_buf(x);
      for (std::size_t i = 0; i < r; ++i) {
        double gsum = 0.0;
        for (std::size_t j = 0; j < c; ++j) gsum += g.data[i * c + j];
        for (std::size_t j = 0; j < c; ++j)
          d.data[i * c + j] += g.data[i * c + j] -
                               static_cast<float>(gsum) * std::exp(lp.data[i * c + j]);
      }
    };
  }
  return id;
}

NodeId Tape::cross_entropy(NodeId logits, std::vector<int> labels) {
  const Tensor& tx = node(logits).value;
  if (tx.shape.size() != 2) shape_error("cross_entropy", "need 2-D logits, have " + tx.shape_str());
  const std::size_t r = tx.rows(), c = tx.cols();
  if (labels.size() != r)
    shape_error("cross_entropy", std::to_string(labels.size()) + " labels for " +
                                     std::to_string(r) + " rows");
  std::size_t m = 0;
  for (int y : labels) {
    if (y < -1 || y >= static_cast<int>(c))
      shape_error("cross_entropy", "label " + std::to_string(y) + " out of range [-1," +
                                       std::to_string(c) + ")");
    if (y >= 0) ++m;
  }
  if (m == 0) shape_error("cross_entropy", "all rows masked");
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (labels[i] < 0) continue;
    const float* row = tx.data.data() + i * c;
    float mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
    total -= static_cast<double>(row[static_cast<std::size_t>(labels[i])] - mx) - std::log(denom);
  }
  const double loss = total / static_cast<double>(m);
  Tensor out({1});
  out.data[0] = static_cast<float>(loss);
  out.require_finite("cross_entropy");
  const bool ng = node(logits).needs_grad;
  NodeId id = push(std::move(out), ng, {});
  node(id).value64 = loss;
  if (ng) {
    auto saved = std::make_shared<std::vector<int>>(std::move(labels));
    node(id).backprop = [logits, id, saved, r, c, m](Tape& t) {
      const float up = t.node(id).grad.data[0];
      const Tensor& tx2 = t.node(logits).value;
      Tensor& d = t.grad_buf(logits);
      const float invm = 1.0f / static_cast<float>(m);
      for (std::size_t i = 0; i < r; ++i) {
        const int y = (*saved)[i];
        if (y < 0) continue;
        const float* row = tx2.data.data() + i * c;
        float mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
        const float inv_den = static_cast<float>(1.0 / denom);
        for (std::size_t j = 0; j < c; ++j) {
          const float p = std::exp(row[j] - mx) * inv_den;
          const float delta = (static_cast<int>(j) == y) ? 1.0f : 0.0f;
          d.data[i * c + j] += up * (p - delta) * invm;
        }
      }
    };
  }
  return id;
}

NodeId Tape::mean(NodeId x) {
  const Tensor& tx = node(x).value;
  if (tx.numel() == 0) shape_error("mean", "empty tensor");
  double total = 0.0;
  for (float v : tx.data) total += v;
  const double mu = total / static_cast<double>(tx.numel());
  Tensor out({1});
  out.data[0] = static_cast<float>(mu);
  const bool ng = node(x).needs_grad;
  NodeId id = push(std::move(out), ng, {});
  node(id).value64 = mu;
  if (ng) {
    node(id).backprop = [x, id](Tape& t) {
      const float up = t.node(id).grad.data[0];
      Tensor& d = t.grad_buf(x);
      const float k = up / static_cast<float>(d.data.size());
      for (float& v : d.data) v += k;
    };
  }
  return id;
}

NodeId Tape::sum(NodeId x) {
  const Tensor& tx = node(x).value;
  if (tx.numel() == 0) shape_error("sum", "empty tensor");
  double total = 0.0;
  for (float v : tx.data) total += v;
  Tensor out({1});
  out.data[0] = static_cast<float>(total);
  const bool ng = node(x).needs_grad;
  NodeId id = push(std::move(out), ng, {});
  node(id).value64 = total;
  if (ng) {
    node(id).backprop = [x, id](Tape& t) {
      const float up = t.node(id).grad.data[0];
      Tensor& d = t.grad_buf(x);
      for (float& v : d.data) v += up;
    };
  }
  return id;
}

NodeId Tape::scale(NodeId x, double c) {
  const Tensor& tx = node(x).value;
  Tensor out = tx;
  const float cf = static_cast<float>(c);
  for (float& v : out.data) v *= cf;
  out.require_finite("scale");
  const bool ng = node(x).needs_grad;
  NodeId id = push(std::move(out), ng, {});
  if (node(x).value64) node(id).value64 = *node(x).value64 * c;
  if (ng) {
    node(id).backprop = [x, id, cf](Tape& t) {
      const Tensor& g = t.node(id).grad;
      Tensor& d = t.grad_buf(x);
      for (std::size_t i = 0; i < g.data.size(); ++i) d.data[i] += cf * g.data[i];
    };
  }
  return id;
}

NodeId Tape::exp(NodeId x) {
  const Tensor& tx = node(x).value;
  Tensor out = tx;
  for (float& v : out.data) v = std::exp(v);
  out.require_finite("exp");
  const bool ng = node(x).needs_grad;
  NodeId id = push(std::move(out), ng, {});
  if (ng) {
    node(id).backprop = [x, id](Tape& t) {
      const Tensor& g = t.node(id).grad;
      const Tensor& y = t.node(id).value;
      Tensor& d = t.grad_buf(x);
      for (std::size_t i = 0; i < g.data.size(); ++i) d.data[i] += g.data[i] * y.data[i];
    };
  }
  return id;
}

NodeId Tape::square(NodeId x) {
  const Tensor& tx = node(x).value;
  Tensor out = tx;
  for (float& v : out.data) v *= v;
  out.require_finite("square");
  const bool ng = node(x).needs_grad;
  NodeId id = push(std::move(out), ng, {});
  if (ng) {
    node(id).backprop = [x, id](Tape& t) {
      const Tensor& g = t.node(id).grad;
      const Tensor& vx = t.node(x).value;
      Tensor& d = t.grad_buf(x);
      for (std::size_t i = 0; i < g.data.size(); ++i) d.data[i] += 2.0f * vx.data[i] * g.data[i];
    };
  }
  return id;
}

NodeId Tape::clamp(NodeId x, double lo, double hi) {
  if (!(lo < hi)) shape_error("clamp", "lo must be < hi");
  const Tensor& tx = node(x).value;
  const float flo = static_cast<float>(lo), fhi = static_cast<float>(hi);
  Tensor out = tx;
  for (float& v : out.data) v = std::min(std::max(v, flo), fhi);
  const bool ng = node(x).needs_grad;
  NodeId id = push(std::move(out), ng, {});
  if (ng) {
    node(id).backprop = [x, id, flo, fhi](Tape& t) {
      const Tensor& g = t.node(id).grad;
      const Tensor& vx = t.node(x).value;
      Tensor& d = t.grad_buf(x);
      for (std::size_t i = 0; i < g.data.size(); ++i)
        if (vx.data[i] > flo && vx.data[i] < fhi) d.data[i] += g.data[i];
    };
  }
  return id;
}

NodeId Tape::minimum(NodeId a, NodeId b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  require_same_shape("minimum", ta, tb);
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::min(ta.data[i], tb.data[i]);
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  NodeId id = push(std::move(out), ng, {});
  if (ng) {
    node(id).backprop = [a, b, id](Tape& t) {
      const Tensor& g = t.node(id).grad;
      const Tensor& va = t.node(a).value;
      const Tensor& vb = t.node(b).value;
      const bool wa = t.node(a).needs_grad, wb = t.node(b).needs_grad;
      Tensor* da = wa ? &t.grad_buf(a) : nullptr;
      Tensor* db = wb ? &t.grad_buf(b) : nullptr;
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        if (va.data[i] <= vb.data[i]) {
          if (wa) da->data[i] += g.data[i];
        } else if (wb) {
          db->data[i] += g.data[i];
        }
      }
    };
  }
  return id;
}

NodeId Tape::gather(NodeId x, std::vector<std::size_t> idx) {
  const Tensor& tx = node(x).value;
  for (std::size_t i : idx)
    if (i >= tx.numel())
      shape_error("gather", "flat index " + std::to_string(i) + " out of range for " +
                                tx.shape_str());
  Tensor out({idx.size()});
  for (std::size_t i = 0; i < idx.size(); ++i) out.data[i] = tx.data[idx[i]];
  const bool ng = node(x).needs_grad;
  NodeId id = push(std::move(out), ng, {});
  if (ng) {
    auto saved = std::make_shared<std::vector<std::size_t>>(std::move(idx));
    node(id).backprop = [x, id, saved](Tape& t) {
      const Tensor& g = t.node(id).grad;
      Tensor& d = t.grad_buf(x);
      for (std::size_t i = 0; i < saved->size(); ++i) d.data[(*saved)[i]] += g.data[i];
    };
  }
  return id;
}

double grad_check(const std::function<NodeId(Tape&, NodeId)>& f, const Tensor& x, double eps) {
  Tensor analytic;
  {
    Tape t;
    const NodeId in = t.leaf(x, true);
    const NodeId loss = f(t, in);
    t.backward(loss);
    analytic = t.grad(in);
  }
  auto eval = [&f](const Tensor& point) {
    Tape t;
    const NodeId in = t.leaf(point, false);
    return t.scalar(f(t, in));
  };
  Tensor probe = x;
  double err_sq = 0.0;
  double a_sq = 0.0;
  double n_sq = 0.0;
  for (std::size_t i = 0; i < probe.data.size(); ++i) {
    const float orig = probe.data[i];
    const float up = orig + static_cast<float>(eps);
    const float down = orig - static_cast<float>(eps);
    probe.data[i] = up;
    const double fp = eval(probe);
    probe.data[i] = down;
    const double fm = eval(probe);
    probe.data[i] = orig;
    // Divide by the step actually taken after float rounding, not the nominal
    // one; for inputs away from zero the difference is a visible bias.
    const double numeric =
        (fp - fm) / (static_cast<double>(up) - static_cast<double>(down));
    const double a = static_cast<double>(analytic.data[i]);
    err_sq += (a - numeric) * (a - numeric);
    a_sq += a * a;
    n_sq += numeric * numeric;
  }
  return std::sqrt(err_sq) / std::max(1e-8, std::sqrt(a_sq) + std::sqrt(n_sq));
}

}  // namespace bb
