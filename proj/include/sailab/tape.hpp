#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "sailab/tensor.hpp"

namespace sailab {

enum class OpKind {
  leaf,
  matmul,
  add,
  mul,
  scale,
  relu,
  gelu,
  layer_norm,
  softmax,
  embedding_gather,
  transpose,
  reshape,
  reduce_mean,
  narrow,
  cross_entropy,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::relu: return "relu";
    case OpKind::gelu: return "gelu";
    case OpKind::layer_norm: return "layer_norm";
    case OpKind::softmax: return "softmax";
    case OpKind::embedding_gather: return "embedding_gather";
    case OpKind::transpose: return "transpose";
    case OpKind::reshape: return "reshape";
    case OpKind::reduce_mean: return "reduce_mean";
    case OpKind::narrow: return "narrow";
    case OpKind::cross_entropy: return "cross_entropy";
  }
  return "?";
}

constexpr double kLayerNormEps = 1e-5;

// Reverse-mode tape. Nodes are appended in execution order, so the record
// list is topologically sorted by construction; backward() walks it in
// exact reverse order and accumulates into leaf gradients additively.
template <class S>
class Tape {
 public:
  using NodeId = int32_t;

  struct Node {
    OpKind op = OpKind::leaf;
    NodeId in0 = -1, in1 = -1, in2 = -1;
    Tensor<S> value;
    std::vector<int64_t> idx;  // gather indices, targets, perm, narrow params
    double c = 0.0;            // scale factor
    bool requires_grad = false;
  };

  NodeId leaf(Tensor<S> v, bool trainable) {
    Node n;
    n.op = OpKind::leaf;
    n.value = std::move(v);
    n.requires_grad = trainable;
    return push(std::move(n));
  }

  NodeId constant(Tensor<S> v) { return leaf(std::move(v), false); }

  const Tensor<S>& value(NodeId id) const { return nodes_[id].value; }

  // Populated by backward(); zero tensors for untouched trainable leaves.
  const Tensor<S>& grad(NodeId id) const { return grads_[id]; }

  size_t size() const { return nodes_.size(); }

  // ---- primitives ----

  NodeId matmul(NodeId a, NodeId b) {
    const auto& A = nodes_[a].value;
    const auto& B = nodes_[b].value;
    if (A.ndim() < 2 || B.ndim() != A.ndim()) {
      throw std::invalid_argument("matmul: rank mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    }
    int nd = A.ndim();
    for (int i = 0; i + 2 < nd; ++i) {
      if (A.shape[i] != B.shape[i]) {
        throw std::invalid_argument("matmul: batch dims differ " + shape_str(A.shape) + " vs " + shape_str(B.shape));
      }
    }
    int64_t m = A.shape[nd - 2], k = A.shape[nd - 1];
    int64_t k2 = B.shape[nd - 2], n = B.shape[nd - 1];
    if (k != k2) {
      throw std::invalid_argument("matmul: inner dims differ " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    }
    auto out_shape = A.shape;
    out_shape[nd - 1] = n;
    auto out = Tensor<S>::zeros(out_shape);
    int64_t batch = A.numel() / (m * k);
    for (int64_t bi = 0; bi < batch; ++bi) {
      const S* pa = A.data.data() + bi * m * k;
      const S* pb = B.data.data() + bi * k * n;
      S* pc = out.data.data() + bi * m * n;
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t kk = 0; kk < k; ++kk) {
          S aik = pa[i * k + kk];
          if (aik == S(0)) continue;
          const S* brow = pb + kk * n;
          S* crow = pc + i * n;
          for (int64_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
      }
    }
    return push_op(OpKind::matmul, a, b, std::move(out));
  }

  // Elementwise sum; the right operand may be a trailing-shape broadcast
  // (e.g. [B,T,D] + [T,D] or [N,C] + [C]).
  NodeId add(NodeId a, NodeId b) {
    const auto& A = nodes_[a].value;
    const auto& B = nodes_[b].value;
    if (!is_suffix(B.shape, A.shape)) {
      throw std::invalid_argument("add: shape " + shape_str(B.shape) + " is not a suffix of " + shape_str(A.shape));
    }
    auto out = A;
    int64_t nb = B.numel();
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] += B.data[i % nb];
    return push_op(OpKind::add, a, b, std::move(out));
  }

  NodeId mul(NodeId a, NodeId b) {
    const auto& A = nodes_[a].value;
    const auto& B = nodes_[b].value;
    if (A.shape != B.shape) {
      throw std::invalid_argument("mul: shapes differ " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    }
    auto out = A;
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] *= B.data[i];
    return push_op(OpKind::mul, a, b, std::move(out));
  }

  NodeId scale(NodeId a, double c) {
    auto out = nodes_[a].value;
    for (auto& v : out.data) v = static_cast<S>(v * c);
    NodeId id = push_op(OpKind::scale, a, -1, std::move(out));
    nodes_[id].c = c;
    return id;
  }

  NodeId relu(NodeId a) {
    auto out = nodes_[a].value;
    for (auto& v : out.data) v = v > S(0) ? v : S(0);
    return push_op(OpKind::relu, a, -1, std::move(out));
  }

  // tanh approximation, differentiable everywhere.
  NodeId gelu(NodeId a) {
    auto out = nodes_[a].value;
    for (auto& v : out.data) {
      double x = static_cast<double>(v);
      v = static_cast<S>(0.5 * x * (1.0 + std::tanh(gelu_k() * (x + 0.044715 * x * x * x))));
    }
    return push_op(OpKind::gelu, a, -1, std::move(out));
  }

  // Normalizes the last axis to zero mean / unit variance, then applies
  // learned gain and shift (both shaped [D]).
  NodeId layer_norm(NodeId x, NodeId gain, NodeId shift) {
    const auto& X = nodes_[x].value;
    const auto& G = nodes_[gain].value;
    const auto& Bv = nodes_[shift].value;
    int64_t d = X.shape.back();
    if (G.numel() != d || Bv.numel() != d) {
      throw std::invalid_argument("layer_norm: gain/shift must match last axis " + std::to_string(d));
    }
    auto out = Tensor<S>::zeros(X.shape);
    int64_t rows = X.numel() / d;
    for (int64_t r = 0; r < rows; ++r) {
      const S* px = X.data.data() + r * d;
      S* po = out.data.data() + r * d;
      double mean = 0;
      for (int64_t j = 0; j < d; ++j) mean += px[j];
      mean /= static_cast<double>(d);
      double var = 0;
      for (int64_t j = 0; j < d; ++j) {
        double c = px[j] - mean;
        var += c * c;
      }
      var /= static_cast<double>(d);
      double inv = 1.0 / std::sqrt(var + kLayerNormEps);
      for (int64_t j = 0; j < d; ++j) {
        double xh = (px[j] - mean) * inv;
        po[j] = static_cast<S>(xh * G.data[j] + Bv.data[j]);
      }
    }
    return push_op(OpKind::layer_norm, x, gain, std::move(out), shift);
  }

  NodeId softmax(NodeId a) {
    const auto& A = nodes_[a].value;
    int64_t d = A.shape.back();
    auto out = Tensor<S>::zeros(A.shape);
    int64_t rows = A.numel() / d;
    for (int64_t r = 0; r < rows; ++r) {
      const S* px = A.data.data() + r * d;
      S* po = out.data.data() + r * d;
      double mx = px[0];
      for (int64_t j = 1; j < d; ++j) mx = std::max(mx, static_cast<double>(px[j]));
      double z = 0;
      for (int64_t j = 0; j < d; ++j) {
        double e = std::exp(px[j] - mx);
        po[j] = static_cast<S>(e);
        z += e;
      }
      double inv = 1.0 / z;
      for (int64_t j = 0; j < d; ++j) po[j] = static_cast<S>(po[j] * inv);
    }
    return push_op(OpKind::softmax, a, -1, std::move(out));
  }

  // Rows of `table` selected by integer indices; output shape is
  // idx_shape + [D]. Backward scatter-adds into the table gradient.
  NodeId embedding_gather(NodeId table, std::vector<int64_t> indices, std::vector<int64_t> idx_shape) {
    const auto& T = nodes_[table].value;
    if (T.ndim() != 2) throw std::invalid_argument("embedding_gather: table must be 2-D");
    int64_t v = T.shape[0], d = T.shape[1];
    if (shape_numel(idx_shape) != static_cast<int64_t>(indices.size())) {
      throw std::invalid_argument("embedding_gather: index shape mismatch");
    }
    auto out_shape = idx_shape;
    out_shape.push_back(d);
    auto out = Tensor<S>::zeros(out_shape);
    for (size_t i = 0; i < indices.size(); ++i) {
      int64_t ix = indices[i];
      if (ix < 0 || ix >= v) throw std::invalid_argument("embedding_gather: index out of range");
      std::copy_n(T.data.data() + ix * d, d, out.data.data() + static_cast<int64_t>(i) * d);
    }
    NodeId id = push_op(OpKind::embedding_gather, table, -1, std::move(out));
    nodes_[id].idx = std::move(indices);
    return id;
  }

  NodeId transpose(NodeId a, std::vector<int64_t> perm = {}) {
    const auto& A = nodes_[a].value;
    int nd = A.ndim();
    if (perm.empty()) {  // default: swap last two axes
      perm.resize(nd);
      std::iota(perm.begin(), perm.end(), 0);
      if (nd >= 2) std::swap(perm[nd - 1], perm[nd - 2]);
    }
    if (static_cast<int>(perm.size()) != nd) throw std::invalid_argument("transpose: bad permutation");
    auto out = permute(A, perm);
    NodeId id = push_op(OpKind::transpose, a, -1, std::move(out));
    nodes_[id].idx = std::move(perm);
    return id;
  }

  NodeId reshape(NodeId a, std::vector<int64_t> new_shape) {
    const auto& A = nodes_[a].value;
    if (shape_numel(new_shape) != A.numel()) {
      throw std::invalid_argument("reshape: element count mismatch " + shape_str(A.shape) + " -> " + shape_str(new_shape));
    }
    Tensor<S> out(new_shape, A.data);
    return push_op(OpKind::reshape, a, -1, std::move(out));
  }

  NodeId reduce_mean(NodeId a) {
    const auto& A = nodes_[a].value;
    double acc = 0;
    for (S v : A.data) acc += v;
    auto out = Tensor<S>::scalar(static_cast<S>(acc / static_cast<double>(A.numel())));
    return push_op(OpKind::reduce_mean, a, -1, std::move(out));
  }

  // Contiguous range [start, start+len) along `axis`.
  NodeId narrow(NodeId a, int axis, int64_t start, int64_t len) {
    const auto& A = nodes_[a].value;
    if (axis < 0 || axis >= A.ndim() || start < 0 || len <= 0 || start + len > A.shape[axis]) {
      throw std::invalid_argument("narrow: range out of bounds");
    }
    auto out_shape = A.shape;
    out_shape[axis] = len;
    auto out = Tensor<S>::zeros(out_shape);
    int64_t inner = 1;
    for (int i = axis + 1; i < A.ndim(); ++i) inner *= A.shape[i];
    int64_t outer = A.numel() / (A.shape[axis] * inner);
    for (int64_t o = 0; o < outer; ++o) {
      const S* src = A.data.data() + (o * A.shape[axis] + start) * inner;
      S* dst = out.data.data() + o * len * inner;
      std::copy_n(src, len * inner, dst);
    }
    NodeId id = push_op(OpKind::narrow, a, -1, std::move(out));
    nodes_[id].idx = {axis, start, len};
    return id;
  }

  // Fused log-softmax + negative log likelihood, averaged over rows.
  NodeId cross_entropy(NodeId logits, std::vector<int64_t> targets) {
    const auto& L = nodes_[logits].value;
    if (L.ndim() != 2) throw std::invalid_argument("cross_entropy: logits must be [N, C]");
    int64_t n = L.shape[0], c = L.shape[1];
    if (static_cast<int64_t>(targets.size()) != n) {
      throw std::invalid_argument("cross_entropy: target count mismatch");
    }
    double acc = 0;
    for (int64_t i = 0; i < n; ++i) {
      const S* row = L.data.data() + i * c;
      int64_t y = targets[i];
      if (y < 0 || y >= c) throw std::invalid_argument("cross_entropy: target out of range");
      double mx = row[0];
      for (int64_t j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
      double z = 0;
      for (int64_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
      acc += mx + std::log(z) - static_cast<double>(row[y]);
    }
    auto out = Tensor<S>::scalar(static_cast<S>(acc / static_cast<double>(n)));
    NodeId id = push_op(OpKind::cross_entropy, logits, -1, std::move(out));
    nodes_[id].idx = std::move(targets);
    return id;
  }

  // ---- backward ----

  void backward(NodeId loss) {
    if (nodes_[loss].value.numel() != 1) {
      throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(nodes_[loss].value.shape));
    }
    grads_.assign(nodes_.size(), Tensor<S>{});
    needs_.assign(nodes_.size(), false);
    for (size_t i = 0; i < nodes_.size(); ++i) {
      const Node& nd = nodes_[i];
      if (nd.op == OpKind::leaf) {
        needs_[i] = nd.requires_grad;
      } else {
        needs_[i] = needed(nd.in0) || needed(nd.in1) || needed(nd.in2);
      }
    }
    touch(loss);
    grads_[loss].data[0] = S(1);
    for (int32_t i = loss; i >= 0; --i) {
      if (!needs_[i] || grads_[i].data.empty()) continue;
      backprop_node(i);
    }
    // zero grads for trainable leaves the loss never touched
    for (size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].op == OpKind::leaf && nodes_[i].requires_grad && grads_[i].data.empty()) {
        grads_[i] = Tensor<S>::zeros(nodes_[i].value.shape);
      }
    }
  }

 private:
  std::vector<Node> nodes_;
  std::vector<Tensor<S>> grads_;
  std::vector<bool> needs_;

  static double gelu_k() { return std::sqrt(2.0 / std::numbers::pi); }

  bool needed(NodeId id) const { return id >= 0 && needs_[id]; }

  NodeId push(Node&& n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  NodeId push_op(OpKind op, NodeId a, NodeId b, Tensor<S>&& out, NodeId c3 = -1) {
    ensure_finite<S>(out.flat(), op_name(op));
    Node n;
    n.op = op;
    n.in0 = a;
    n.in1 = b;
    n.in2 = c3;
    n.value = std::move(out);
    n.requires_grad = false;
    return push(std::move(n));
  }

  static bool is_suffix(const std::vector<int64_t>& small, const std::vector<int64_t>& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
  }

  static Tensor<S> permute(const Tensor<S>& a, const std::vector<int64_t>& perm) {
    int nd = a.ndim();
    std::vector<int64_t> out_shape(nd), in_strides(nd), out_strides(nd);
    int64_t s = 1;
    for (int i = nd - 1; i >= 0; --i) {
      in_strides[i] = s;
      s *= a.shape[i];
    }
    for (int i = 0; i < nd; ++i) out_shape[i] = a.shape[perm[i]];
    s = 1;
    for (int i = nd - 1; i >= 0; --i) {
      out_strides[i] = s;
      s *= out_shape[i];
    }
    auto out = Tensor<S>::zeros(out_shape);
    std::vector<int64_t> coord(nd, 0);
    for (int64_t flat = 0; flat < a.numel(); ++flat) {
      int64_t rem = flat, src = 0;
      for (int i = 0; i < nd; ++i) {
        coord[i] = rem / out_strides[i];
        rem %= out_strides[i];
        src += coord[i] * in_strides[perm[i]];
      }
      out.data[flat] = a.data[src];
    }
    return out;
  }

  void touch(NodeId id) {
    if (grads_[id].data.empty()) grads_[id] = Tensor<S>::zeros(nodes_[id].value.shape);
  }

  Tensor<S>& gbuf(NodeId id) {
    touch(id);
    return grads_[id];
  }

  void backprop_node(int32_t i) {
    Node& nd = nodes_[i];
    const Tensor<S>& g = grads_[i];
    switch (nd.op) {
      case OpKind::leaf:
        break;
      case OpKind::matmul: {
        const auto& A = nodes_[nd.in0].value;
        const auto& B = nodes_[nd.in1].value;
        int rank = A.ndim();
        int64_t m = A.shape[rank - 2], k = A.shape[rank - 1], n = B.shape[rank - 1];
        int64_t batch = A.numel() / (m * k);
        if (needed(nd.in0)) {
          auto& da = gbuf(nd.in0);
          for (int64_t bi = 0; bi < batch; ++bi) {
            const S* pg = g.data.data() + bi * m * n;
            const S* pb = B.data.data() + bi * k * n;
            S* pda = da.data.data() + bi * m * k;
            for (int64_t r = 0; r < m; ++r) {
              for (int64_t j = 0; j < n; ++j) {
                S gv = pg[r * n + j];
                if (gv == S(0)) continue;
                const S* bcol = pb + j;
                S* darow = pda + r * k;
                for (int64_t kk = 0; kk < k; ++kk) darow[kk] += gv * bcol[kk * n];
              }
            }
          }
        }
        if (needed(nd.in1)) {
          auto& db = gbuf(nd.in1);
          for (int64_t bi = 0; bi < batch; ++bi) {
            const S* pg = g.data.data() + bi * m * n;
            const S* pa = A.data.data() + bi * m * k;
            S* pdb = db.data.data() + bi * k * n;
            for (int64_t r = 0; r < m; ++r) {
              for (int64_t kk = 0; kk < k; ++kk) {
                S av = pa[r * k + kk];
                if (av == S(0)) continue;
                const S* grow = pg + r * n;
                S* dbrow = pdb + kk * n;
                for (int64_t j = 0; j < n; ++j) dbrow[j] += av * grow[j];
              }
            }
          }
        }
        break;
      }
      case OpKind::add: {
        if (needed(nd.in0)) {
          auto& da = gbuf(nd.in0);
          for (int64_t j = 0; j < g.numel(); ++j) da.data[j] += g.data[j];
        }
        if (needed(nd.in1)) {
          auto& db = gbuf(nd.in1);
          int64_t nb = db.numel();
          for (int64_t j = 0; j < g.numel(); ++j) db.data[j % nb] += g.data[j];
        }
        break;
      }
      case OpKind::mul: {
        const auto& A = nodes_[nd.in0].value;
        const auto& B = nodes_[nd.in1].value;
        if (needed(nd.in0)) {
          auto& da = gbuf(nd.in0);
          for (int64_t j = 0; j < g.numel(); ++j) da.data[j] += g.data[j] * B.data[j];
        }
        if (needed(nd.in1)) {
          auto& db = gbuf(nd.in1);
          for (int64_t j = 0; j < g.numel(); ++j) db.data[j] += g.data[j] * A.data[j];
        }
        break;
      }
      case OpKind::scale: {
        auto& da = gbuf(nd.in0);
        for (int64_t j = 0; j < g.numel(); ++j) da.data[j] += static_cast<S>(g.data[j] * nd.c);
        break;
      }
      case OpKind::relu: {
        const auto& X = nodes_[nd.in0].value;
        auto& da = gbuf(nd.in0);
        for (int64_t j = 0; j < g.numel(); ++j) {
          if (X.data[j] > S(0)) da.data[j] += g.data[j];
        }
        break;
      }
      case OpKind::gelu: {
        const auto& X = nodes_[nd.in0].value;
        auto& da = gbuf(nd.in0);
        for (int64_t j = 0; j < g.numel(); ++j) {
          double x = static_cast<double>(X.data[j]);
          double u = gelu_k() * (x + 0.044715 * x * x * x);
          double t = std::tanh(u);
          double du = gelu_k() * (1.0 + 3.0 * 0.044715 * x * x);
          double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
          da.data[j] += static_cast<S>(g.data[j] * d);
        }
        break;
      }
      case OpKind::layer_norm:
        backprop_layer_norm(nd, g);
        break;
      case OpKind::softmax: {
        const auto& Y = nd.value;
        auto& da = gbuf(nd.in0);
        int64_t d = Y.shape.back();
        int64_t rows = Y.numel() / d;
        for (int64_t r = 0; r < rows; ++r) {
          const S* py = Y.data.data() + r * d;
          const S* pg = g.data.data() + r * d;
          S* pda = da.data.data() + r * d;
          double dot = 0;
          for (int64_t j = 0; j < d; ++j) dot += static_cast<double>(pg[j]) * py[j];
          for (int64_t j = 0; j < d; ++j) pda[j] += static_cast<S>(py[j] * (pg[j] - dot));
        }
        break;
      }
      case OpKind::embedding_gather: {
        auto& dt = gbuf(nd.in0);
        int64_t d = nodes_[nd.in0].value.shape[1];
        for (size_t r = 0; r < nd.idx.size(); ++r) {
          const S* pg = g.data.data() + static_cast<int64_t>(r) * d;
          S* row = dt.data.data() + nd.idx[r] * d;
          for (int64_t j = 0; j < d; ++j) row[j] += pg[j];
        }
        break;
      }
      case OpKind::transpose: {
        std::vector<int64_t> inv(nd.idx.size());
        for (size_t j = 0; j < nd.idx.size(); ++j) inv[nd.idx[j]] = static_cast<int64_t>(j);
        auto gp = permute(g, inv);
        auto& da = gbuf(nd.in0);
        for (int64_t j = 0; j < gp.numel(); ++j) da.data[j] += gp.data[j];
        break;
      }
      case OpKind::reshape: {
        auto& da = gbuf(nd.in0);
        for (int64_t j = 0; j < g.numel(); ++j) da.data[j] += g.data[j];
        break;
      }
      case OpKind::reduce_mean: {
        auto& da = gbuf(nd.in0);
        S gv = static_cast<S>(g.data[0] / static_cast<double>(da.numel()));
        for (auto& v : da.data) v += gv;
        break;
      }
      case OpKind::narrow: {
        auto& da = gbuf(nd.in0);
        const auto& A = nodes_[nd.in0].value;
        int axis = static_cast<int>(nd.idx[0]);
        int64_t start = nd.idx[1], len = nd.idx[2];
        int64_t inner = 1;
        for (int j = axis + 1; j < A.ndim(); ++j) inner *= A.shape[j];
        int64_t outer = A.numel() / (A.shape[axis] * inner);
        for (int64_t o = 0; o < outer; ++o) {
          S* dst = da.data.data() + (o * A.shape[axis] + start) * inner;
          const S* src = g.data.data() + o * len * inner;
          for (int64_t j = 0; j < len * inner; ++j) dst[j] += src[j];
        }
        break;
      }
      case OpKind::cross_entropy: {
        const auto& L = nodes_[nd.in0].value;
        auto& dl = gbuf(nd.in0);
        int64_t n = L.shape[0], c = L.shape[1];
        double gscale = static_cast<double>(g.data[0]) / static_cast<double>(n);
        for (int64_t r = 0; r < n; ++r) {
          const S* row = L.data.data() + r * c;
          S* drow = dl.data.data() + r * c;
          double mx = row[0];
          for (int64_t j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
          double z = 0;
          for (int64_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
          double inv = 1.0 / z;
          for (int64_t j = 0; j < c; ++j) {
            double p = std::exp(row[j] - mx) * inv;
            double delta = j == nd.idx[r] ? 1.0 : 0.0;
            drow[j] += static_cast<S>((p - delta) * gscale);
          }
        }
        break;
      }
    }
    check_input_grads(nd);
  }

  void backprop_layer_norm(Node& nd, const Tensor<S>& g) {
    const auto& X = nodes_[nd.in0].value;
    const auto& G = nodes_[nd.in1].value;
    int64_t d = X.shape.back();
    int64_t rows = X.numel() / d;
    Tensor<S>* dx = needed(nd.in0) ? &gbuf(nd.in0) : nullptr;
    Tensor<S>* dg = needed(nd.in1) ? &gbuf(nd.in1) : nullptr;
    Tensor<S>* db = needed(nd.in2) ? &gbuf(nd.in2) : nullptr;
    for (int64_t r = 0; r < rows; ++r) {
      const S* px = X.data.data() + r * d;
      const S* pg = g.data.data() + r * d;
      double mean = 0;
      for (int64_t j = 0; j < d; ++j) mean += px[j];
      mean /= static_cast<double>(d);
      double var = 0;
      for (int64_t j = 0; j < d; ++j) {
        double c = px[j] - mean;
        var += c * c;
      }
      var /= static_cast<double>(d);
      double inv = 1.0 / std::sqrt(var + kLayerNormEps);
      double mean_h = 0, mean_hx = 0;
      for (int64_t j = 0; j < d; ++j) {
        double xh = (px[j] - mean) * inv;
        double h = static_cast<double>(pg[j]) * G.data[j];
        mean_h += h;
        mean_hx += h * xh;
        if (dg) dg->data[j] += static_cast<S>(pg[j] * xh);
        if (db) db->data[j] += pg[j];
      }
      mean_h /= static_cast<double>(d);
      mean_hx /= static_cast<double>(d);
      if (dx) {
        S* pdx = dx->data.data() + r * d;
        for (int64_t j = 0; j < d; ++j) {
          double xh = (px[j] - mean) * inv;
          double h = static_cast<double>(pg[j]) * G.data[j];
          pdx[j] += static_cast<S>((h - mean_h - xh * mean_hx) * inv);
        }
      }
    }
  }

  void check_input_grads(const Node& nd) {
    for (NodeId in : {nd.in0, nd.in1, nd.in2}) {
      if (in >= 0 && needed(in) && !grads_[in].data.empty()) {
        for (S v : grads_[in].data) {
          if (!std::isfinite(static_cast<double>(v))) {
            throw NumericalError(std::string("non-finite gradient produced by ") + op_name(nd.op));
          }
        }
      }
    }
  }
};

}  // namespace sailab
