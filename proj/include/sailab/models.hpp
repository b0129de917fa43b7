#pragma once

#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sailab/blocks.hpp"
#include "sailab/datasets.hpp"
#include "sailab/init.hpp"
#include "sailab/tape.hpp"

namespace sailab {

enum class Activation { relu, gelu };

struct MlpSpec {
  int64_t input_dim = 2;
  std::vector<int64_t> hidden_dims;
  int64_t output_dim = 2;
  Activation activation = Activation::relu;
};

struct TinyTransformerSpec {
  int64_t vocab_size = 64;
  int64_t context_length = 32;
  int64_t d_model = 32;
  int64_t n_heads = 2;
  int64_t n_layers = 2;
  int64_t mlp_ratio = 4;
};

enum class ModelKind { mlp, tiny_transformer };

template <class S>
struct ForwardResult {
  double loss = 0;
  double batch_accuracy = 0;
};

// A model owns its parameter blocks and rebuilds a fresh tape per forward
// pass. Losses are softmax cross-entropy; backward fills every trainable
// block's gradient.
template <class S>
class Model {
 public:
  ModelKind kind() const { return kind_; }
  const MlpSpec& mlp_spec() const { return mlp_; }
  const TinyTransformerSpec& transformer_spec() const { return tf_; }

  std::vector<ParamBlock<S>>& blocks() { return blocks_; }
  const std::vector<ParamBlock<S>>& blocks() const { return blocks_; }

  int64_t total_params() const {
    int64_t d = 0;
    for (const auto& b : blocks_) d += b.numel();
    return d;
  }

  void zero_grads() {
    for (auto& b : blocks_) std::fill(b.grad.data.begin(), b.grad.data.end(), S(0));
  }

  // Forward + cross-entropy (+ backward into block grads by default).
  ForwardResult<S> forward_loss(const Batch<S>& batch, bool compute_grads = true) {
    Tape<S> tape;
    std::vector<typename Tape<S>::NodeId> leaves;
    leaves.reserve(blocks_.size());
    for (auto& b : blocks_) leaves.push_back(tape.leaf(b.value, true));
    std::vector<int64_t> targets = target_ids(batch);
    auto logits = build_logits(tape, leaves, batch);
    auto loss = tape.cross_entropy(logits, targets);
    ForwardResult<S> res;
    res.loss = static_cast<double>(tape.value(loss).data[0]);
    res.batch_accuracy = accuracy_from_logits(tape.value(logits), targets);
    if (compute_grads) {
      tape.backward(loss);
      for (size_t i = 0; i < blocks_.size(); ++i) blocks_[i].grad = tape.grad(leaves[i]);
    }
    return res;
  }

  // Evaluation path: logits only, no gradients.
  Tensor<S> forward_logits(const Batch<S>& batch) {
    Tape<S> tape;
    std::vector<typename Tape<S>::NodeId> leaves;
    leaves.reserve(blocks_.size());
    for (auto& b : blocks_) leaves.push_back(tape.leaf(b.value, false));
    auto logits = build_logits(tape, leaves, batch);
    return tape.value(logits);
  }

  double evaluate_accuracy(const Dataset<S>& ds, int64_t max_rows = -1) {
    int64_t rows = max_rows > 0 && max_rows < ds.size ? max_rows : ds.size;
    Batch<S> b = take_batch(ds, 0, rows);
    auto logits = forward_logits(b);
    return accuracy_from_logits(logits, target_ids(b));
  }

  template <class S2>
  friend Model<S2> build_mlp(const MlpSpec& spec, SeededRng& rng);
  template <class S2>
  friend Model<S2> build_tiny_transformer(const TinyTransformerSpec& spec, SeededRng& rng);

 private:
  ModelKind kind_ = ModelKind::mlp;
  MlpSpec mlp_;
  TinyTransformerSpec tf_;
  std::vector<ParamBlock<S>> blocks_;
  mutable std::unordered_map<std::string, int> name_index_;

  int find_block(const std::string& name) const {
    if (name_index_.size() != blocks_.size()) {
      name_index_.clear();
      for (size_t i = 0; i < blocks_.size(); ++i) name_index_[blocks_[i].name] = static_cast<int>(i);
    }
    auto it = name_index_.find(name);
    if (it == name_index_.end()) throw std::logic_error("missing block: " + name);
    return it->second;
  }

  static std::vector<int64_t> target_ids(const Batch<S>& batch) {
    std::vector<int64_t> out(batch.targets.data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<int64_t>(batch.targets.data[i]);
    return out;
  }

  static double accuracy_from_logits(const Tensor<S>& logits, const std::vector<int64_t>& targets) {
    int64_t c = logits.shape.back();
    int64_t n = logits.numel() / c;
    int64_t hits = 0;
    for (int64_t i = 0; i < n; ++i) {
      const S* row = logits.data.data() + i * c;
      int64_t best = 0;
      for (int64_t j = 1; j < c; ++j) {
        if (row[j] > row[best]) best = j;
      }
      if (best == targets[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
  }

  using NodeId = typename Tape<S>::NodeId;

  NodeId build_logits(Tape<S>& tape, const std::vector<NodeId>& leaves, const Batch<S>& batch) {
    return kind_ == ModelKind::mlp ? mlp_logits(tape, leaves, batch) : transformer_logits(tape, leaves, batch);
  }

  NodeId mlp_logits(Tape<S>& tape, const std::vector<NodeId>& leaves, const Batch<S>& batch) {
    NodeId x = tape.constant(batch.inputs);
    size_t n_layers = blocks_.size() / 2;
    for (size_t l = 0; l < n_layers; ++l) {
      NodeId w = leaves[2 * l];
      NodeId b = leaves[2 * l + 1];
      x = tape.add(tape.matmul(x, tape.transpose(w)), b);
      if (l + 1 < n_layers) {
        x = mlp_.activation == Activation::relu ? tape.relu(x) : tape.gelu(x);
      }
    }
    return x;
  }

  NodeId linear(Tape<S>& tape, NodeId x, NodeId w, NodeId b) {
    return tape.add(tape.matmul(x, tape.transpose(w)), b);
  }

  NodeId transformer_logits(Tape<S>& tape, const std::vector<NodeId>& leaves, const Batch<S>& batch) {
    const auto& sp = tf_;
    int64_t bsz = batch.inputs.shape[0];
    int64_t t = batch.inputs.shape[1];
    if (t > sp.context_length) throw std::invalid_argument("sequence longer than context_length");
    int64_t d = sp.d_model, h = sp.n_heads, dh = d / h;

    std::vector<int64_t> tok(batch.inputs.data.size());
    for (size_t i = 0; i < tok.size(); ++i) tok[i] = static_cast<int64_t>(batch.inputs.data[i]);
    std::vector<int64_t> pos(static_cast<size_t>(t));
    for (int64_t i = 0; i < t; ++i) pos[i] = i;

    auto leaf_of = [&](const std::string& name) { return leaves[find_block(name)]; };

    NodeId x = tape.add(tape.embedding_gather(leaf_of("tok_emb.weight"), tok, {bsz, t}),
                        tape.embedding_gather(leaf_of("pos_emb.weight"), pos, {t}));

    // additive causal mask, strictly-upper entries pushed to -1e9
    auto mask = Tensor<S>::zeros({t, t});
    for (int64_t i = 0; i < t; ++i) {
      for (int64_t j = i + 1; j < t; ++j) mask.data[i * t + j] = static_cast<S>(-1e9);
    }
    NodeId mask_node = tape.constant(std::move(mask));

    for (int64_t l = 0; l < sp.n_layers; ++l) {
      std::string p = "blocks." + std::to_string(l) + ".";
      NodeId h1 = tape.layer_norm(x, leaf_of(p + "norm1.gain"), leaf_of(p + "norm1.shift"));
      NodeId qkv = linear(tape, tape.reshape(h1, {bsz * t, d}), leaf_of(p + "attn.qkv.weight"),
                          leaf_of(p + "attn.qkv.bias"));
      qkv = tape.reshape(qkv, {bsz, t, 3 * d});
      auto split_heads = [&](int64_t off) {
        NodeId part = tape.narrow(qkv, 2, off, d);
        part = tape.reshape(part, {bsz, t, h, dh});
        return tape.transpose(part, {0, 2, 1, 3});  // [B,H,T,Dh]
      };
      NodeId q = split_heads(0);
      NodeId k = split_heads(d);
      NodeId v = split_heads(2 * d);
      NodeId scores = tape.scale(tape.matmul(q, tape.transpose(k, {0, 1, 3, 2})),
                                 1.0 / std::sqrt(static_cast<double>(dh)));
      scores = tape.add(scores, mask_node);
      NodeId attn = tape.softmax(scores);
      NodeId ctx = tape.matmul(attn, v);                      // [B,H,T,Dh]
      ctx = tape.transpose(ctx, {0, 2, 1, 3});                // [B,T,H,Dh]
      ctx = tape.reshape(ctx, {bsz * t, d});
      NodeId attn_out = linear(tape, ctx, leaf_of(p + "attn.proj.weight"), leaf_of(p + "attn.proj.bias"));
      x = tape.add(x, tape.reshape(attn_out, {bsz, t, d}));

      NodeId h2 = tape.layer_norm(x, leaf_of(p + "norm2.gain"), leaf_of(p + "norm2.shift"));
      NodeId f = linear(tape, tape.reshape(h2, {bsz * t, d}), leaf_of(p + "mlp.fc.weight"),
                        leaf_of(p + "mlp.fc.bias"));
      f = tape.gelu(f);
      f = linear(tape, f, leaf_of(p + "mlp.proj.weight"), leaf_of(p + "mlp.proj.bias"));
      x = tape.add(x, tape.reshape(f, {bsz, t, d}));
    }

    NodeId xf = tape.layer_norm(x, leaf_of("final_norm.gain"), leaf_of("final_norm.shift"));
    NodeId logits = tape.matmul(tape.reshape(xf, {bsz * t, d}), tape.transpose(leaf_of("head.weight")));
    return logits;
  }
};

// Blocks named "layer.{k}.weight" / "layer.{k}.bias"; weights Kaiming,
// biases zero. Empty hidden_dims yields a single linear layer.
template <class S>
Model<S> build_mlp(const MlpSpec& spec, SeededRng& rng) {
  if (spec.input_dim < 1 || spec.output_dim < 1) throw std::invalid_argument("build_mlp: dims must be >= 1");
  for (int64_t hdim : spec.hidden_dims) {
    if (hdim < 1) throw std::invalid_argument("build_mlp: dims must be >= 1");
  }
  Model<S> m;
  m.kind_ = ModelKind::mlp;
  m.mlp_ = spec;
  std::vector<int64_t> dims;
  dims.push_back(spec.input_dim);
  dims.insert(dims.end(), spec.hidden_dims.begin(), spec.hidden_dims.end());
  dims.push_back(spec.output_dim);
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    std::string p = "layer." + std::to_string(l) + ".";
    ParamBlock<S> w;
    w.name = p + "weight";
    w.kind = BlockKind::weight;
    w.layer_index = static_cast<int>(l);
    w.value = init_tensor<S>({dims[l + 1], dims[l]}, InitScheme::KaimingNormal(), rng);
    w.grad = Tensor<S>::zeros(w.value.shape);
    m.blocks_.push_back(std::move(w));
    ParamBlock<S> b;
    b.name = p + "bias";
    b.kind = BlockKind::bias;
    b.layer_index = static_cast<int>(l);
    b.value = Tensor<S>::zeros({dims[l + 1]});
    b.grad = Tensor<S>::zeros(b.value.shape);
    m.blocks_.push_back(std::move(b));
  }
  return m;
}

// Decoder-only transformer: learned token/position embeddings, pre-norm
// blocks with fused qkv, gelu MLP, final norm, untied output head.
template <class S>
Model<S> build_tiny_transformer(const TinyTransformerSpec& spec, SeededRng& rng) {
  if (spec.n_layers < 1) throw std::invalid_argument("build_tiny_transformer: n_layers must be >= 1");
  if (spec.d_model % spec.n_heads != 0) {
    throw std::invalid_argument("build_tiny_transformer: d_model must be divisible by n_heads");
  }
  Model<S> m;
  m.kind_ = ModelKind::tiny_transformer;
  m.tf_ = spec;
  int64_t d = spec.d_model;
  int64_t mdim = spec.mlp_ratio * d;
  auto emb = InitScheme::Normal(0.02);

  auto add = [&](std::string name, BlockKind kind, int layer, std::vector<int64_t> shape, InitScheme scheme) {
    ParamBlock<S> b;
    b.name = std::move(name);
    b.kind = kind;
    b.layer_index = layer;
    b.value = init_tensor<S>(std::move(shape), scheme, rng);
    b.grad = Tensor<S>::zeros(b.value.shape);
    m.blocks_.push_back(std::move(b));
  };

  add("tok_emb.weight", BlockKind::embedding, -1, {spec.vocab_size, d}, emb);
  add("pos_emb.weight", BlockKind::embedding, -1, {spec.context_length, d}, emb);
  for (int64_t l = 0; l < spec.n_layers; ++l) {
    std::string p = "blocks." + std::to_string(l) + ".";
    int li = static_cast<int>(l);
    add(p + "norm1.gain", BlockKind::norm_gain, li, {d}, InitScheme::Constant(1.0));
    add(p + "norm1.shift", BlockKind::norm_shift, li, {d}, InitScheme::Constant(0.0));
    add(p + "attn.qkv.weight", BlockKind::weight, li, {3 * d, d}, InitScheme::XavierUniform());
    add(p + "attn.qkv.bias", BlockKind::bias, li, {3 * d}, InitScheme::Constant(0.0));
    add(p + "attn.proj.weight", BlockKind::weight, li, {d, d}, InitScheme::XavierUniform());
    add(p + "attn.proj.bias", BlockKind::bias, li, {d}, InitScheme::Constant(0.0));
    add(p + "norm2.gain", BlockKind::norm_gain, li, {d}, InitScheme::Constant(1.0));
    add(p + "norm2.shift", BlockKind::norm_shift, li, {d}, InitScheme::Constant(0.0));
    add(p + "mlp.fc.weight", BlockKind::weight, li, {mdim, d}, InitScheme::KaimingNormal());
    add(p + "mlp.fc.bias", BlockKind::bias, li, {mdim}, InitScheme::Constant(0.0));
    add(p + "mlp.proj.weight", BlockKind::weight, li, {d, mdim}, InitScheme::XavierUniform());
    add(p + "mlp.proj.bias", BlockKind::bias, li, {d}, InitScheme::Constant(0.0));
  }
  add("final_norm.gain", BlockKind::norm_gain, -1, {d}, InitScheme::Constant(1.0));
  add("final_norm.shift", BlockKind::norm_shift, -1, {d}, InitScheme::Constant(0.0));
  add("head.weight", BlockKind::head, -1, {spec.vocab_size, d}, emb);
  return m;
}

// One block per named parameter tensor, in registration order.
template <class S>
PartitionSpec default_partition(const Model<S>& model) {
  PartitionSpec p;
  p.mode = PartitionMode::Default;
  const auto& blocks = model.blocks();
  for (size_t i = 0; i < blocks.size(); ++i) {
    p.blocks.push_back({static_cast<int>(i), 0, blocks[i].numel(), blocks[i].name, false});
    p.total_params += blocks[i].numel();
  }
  return p;
}

// Default partition refined for Adam-mini: each fused qkv weight is split
// into per-head Q and K slices plus one V slice; embedding and head tensors
// are flagged for element-wise second-moment state.
template <class S>
PartitionSpec mini_partition(const Model<S>& model) {
  PartitionSpec p;
  p.mode = PartitionMode::Mini;
  const auto& blocks = model.blocks();
  int64_t n_heads = model.kind() == ModelKind::tiny_transformer ? model.transformer_spec().n_heads : 1;
  for (size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    bool is_qkv = b.name.find("attn.qkv.weight") != std::string::npos;
    if (is_qkv) {
      // weight is [3D, D] row-major: rows [0,D) = Q, [D,2D) = K, [2D,3D) = V
      int64_t d = b.value.shape[1];
      int64_t dh = d / n_heads;
      if (d % n_heads != 0) throw std::invalid_argument("mini_partition: head dim does not divide d_model");
      for (int64_t hd = 0; hd < n_heads; ++hd) {
        p.blocks.push_back({static_cast<int>(i), hd * dh * d, dh * d,
                            b.name + ".q.h" + std::to_string(hd), false});
      }
      for (int64_t hd = 0; hd < n_heads; ++hd) {
        p.blocks.push_back({static_cast<int>(i), (d + hd * dh) * d, dh * d,
                            b.name + ".k.h" + std::to_string(hd), false});
      }
      p.blocks.push_back({static_cast<int>(i), 2 * d * d, d * d, b.name + ".v", false});
    } else {
      bool elementwise = b.kind == BlockKind::embedding || b.kind == BlockKind::head;
      p.blocks.push_back({static_cast<int>(i), 0, b.numel(), b.name, elementwise});
    }
    p.total_params += b.numel();
  }
  return p;
}

}  // namespace sailab
