#pragma once

#include <cmath>
#include <memory>
#include <string_view>

#include "sailab/blocks.hpp"
#include "sailab/gsnr.hpp"
#include "sailab/models.hpp"

namespace sailab {

// Shared hyperparameter record. Fields are validated on construction of an
// optimizer; `maximize` flips the gradient sign first in every method.
struct Hyper {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double momentum = 0.9;   // mu (SGDM / SGD-SaI)
  double dampening = 0.0;  // tau (SGDM)
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double d0 = 1e-6;  // Prodigy initial d
  bool maximize = false;

  void validate() const {
    if (!(lr > 0)) throw std::invalid_argument("hyper: lr must be > 0");
    if (!(weight_decay >= 0)) throw std::invalid_argument("hyper: weight_decay must be >= 0");
    if (!(momentum >= 0 && momentum < 1)) throw std::invalid_argument("hyper: momentum must be in [0,1)");
    if (!(dampening >= 0 && dampening <= 1)) throw std::invalid_argument("hyper: dampening must be in [0,1]");
    if (!(beta1 >= 0 && beta1 < 1)) throw std::invalid_argument("hyper: beta1 must be in [0,1)");
    if (!(beta2 >= 0 && beta2 < 1)) throw std::invalid_argument("hyper: beta2 must be in [0,1)");
    if (!(eps > 0)) throw std::invalid_argument("hyper: eps must be > 0");
    if (!(d0 > 0)) throw std::invalid_argument("hyper: d0 must be > 0");
  }
};

struct StepReport {
  int64_t step = 0;
  std::vector<double> direction_norms;  // per partition block, ||D_t||
  std::vector<double> delta_norms;      // per partition block, ||theta_t - theta_{t-1}||
};

enum class OptKind { sgdm, adam, adamw, adam_mini, prodigy, sgd_sai };

inline OptKind parse_opt_kind(const std::string& s) {
  if (s == "sgdm") return OptKind::sgdm;
  if (s == "adam") return OptKind::adam;
  if (s == "adamw") return OptKind::adamw;
  if (s == "adam-mini") return OptKind::adam_mini;
  if (s == "prodigy") return OptKind::prodigy;
  if (s == "sgd-sai") return OptKind::sgd_sai;
  throw ConfigError("unknown optimizer: '" + s + "'");
}

inline const char* opt_kind_name(OptKind k) {
  switch (k) {
    case OptKind::sgdm: return "sgdm";
    case OptKind::adam: return "adam";
    case OptKind::adamw: return "adamw";
    case OptKind::adam_mini: return "adam-mini";
    case OptKind::prodigy: return "prodigy";
    case OptKind::sgd_sai: return "sgd-sai";
  }
  return "?";
}

// Common step interface over partitioned blocks. Gradients must be freshly
// populated for the step; parameters are updated in place.
template <class S>
class Optimizer {
 public:
  virtual ~Optimizer() = default;

  virtual OptKind kind() const = 0;
  virtual StepReport step(std::vector<ParamBlock<S>>& blocks) = 0;

  // Exact byte count of allocated state arrays (step counters and global
  // scalars excluded).
  virtual uint64_t state_bytes() const = 0;

  // SGD-SaI computes its frozen scales from the first batch's gradients.
  virtual bool needs_first_batch_init() const { return false; }
  virtual void init_from_first_gradients(std::vector<ParamBlock<S>>&) {}

  void set_lr(double lr) { hyper_.lr = lr; }
  const Hyper& hyper() const { return hyper_; }
  const PartitionSpec& partition() const { return partition_; }
  int64_t steps_taken() const { return t_; }

 protected:
  Optimizer(PartitionSpec partition, Hyper hyper) : partition_(std::move(partition)), hyper_(hyper) {
    hyper_.validate();
  }

  S signed_grad(S g) const { return hyper_.maximize ? -g : g; }

  void check_block_finite(std::span<const S> values, const std::string& name) const {
    for (S v : values) {
      if (!std::isfinite(static_cast<double>(v))) {
        throw NumericalError("non-finite update in block '" + name + "'");
      }
    }
  }

  StepReport fresh_report() const {
    StepReport r;
    r.step = t_;
    r.direction_norms.assign(partition_.blocks.size(), 0.0);
    r.delta_norms.assign(partition_.blocks.size(), 0.0);
    return r;
  }

  PartitionSpec partition_;
  Hyper hyper_;
  int64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// SGDM: coupled weight decay (g <- g + lambda*theta), momentum
// m <- mu*m + (1-tau)*g with m <- g on the first step, theta <- theta - eta*m.
template <class S>
class SgdmOptimizer final : public Optimizer<S> {
 public:
  SgdmOptimizer(const std::vector<ParamBlock<S>>& blocks, PartitionSpec partition, Hyper hyper)
      : Optimizer<S>(std::move(partition), hyper) {
    m_.reserve(blocks.size());
    for (const auto& b : blocks) m_.push_back(std::vector<S>(b.value.data.size(), S(0)));
  }

  OptKind kind() const override { return OptKind::sgdm; }

  StepReport step(std::vector<ParamBlock<S>>& blocks) override {
    ++this->t_;
    auto rep = this->fresh_report();
    const Hyper& h = this->hyper_;
    for (size_t bi = 0; bi < this->partition_.blocks.size(); ++bi) {
      const BlockRef& ref = this->partition_.blocks[bi];
      auto theta = value_view(blocks, ref);
      auto grad = grad_view(blocks, ref);
      S* m = m_[ref.block].data() + ref.offset;
      double dn = 0, deln = 0;
      for (int64_t j = 0; j < ref.count; ++j) {
        S g = this->signed_grad(grad[j]);
        if (h.weight_decay != 0.0) g = static_cast<S>(g + h.weight_decay * theta[j]);
        if (h.momentum != 0.0 && this->t_ > 1) {
          m[j] = static_cast<S>(h.momentum * m[j] + (1.0 - h.dampening) * g);
        } else {
          m[j] = g;
        }
        double upd = h.lr * static_cast<double>(m[j]);
        theta[j] = static_cast<S>(theta[j] - upd);
        dn += static_cast<double>(m[j]) * m[j];
        deln += upd * upd;
      }
      rep.direction_norms[bi] = std::sqrt(dn);
      rep.delta_norms[bi] = std::sqrt(deln);
      this->check_block_finite(theta, ref.name);
    }
    return rep;
  }

  uint64_t state_bytes() const override {
    uint64_t n = 0;
    for (const auto& m : m_) n += m.size();
    return n * sizeof(S);
  }

 private:
  std::vector<std::vector<S>> m_;  // per parent tensor
};

// ---------------------------------------------------------------------------
// Adam / AdamW share the update; they differ only in where weight decay is
// applied: Adam couples it into the gradient, AdamW shrinks the parameters
// directly (decoupled) before the update. At lambda == 0 the trajectories
// coincide bitwise.
template <class S>
class AdamOptimizer : public Optimizer<S> {
 public:
  AdamOptimizer(const std::vector<ParamBlock<S>>& blocks, PartitionSpec partition, Hyper hyper,
                bool decoupled)
      : Optimizer<S>(std::move(partition), hyper), decoupled_(decoupled) {
    m_.reserve(blocks.size());
    v_.reserve(blocks.size());
    for (const auto& b : blocks) {
      m_.push_back(std::vector<S>(b.value.data.size(), S(0)));
      v_.push_back(std::vector<S>(b.value.data.size(), S(0)));
    }
  }

  OptKind kind() const override { return decoupled_ ? OptKind::adamw : OptKind::adam; }

  StepReport step(std::vector<ParamBlock<S>>& blocks) override {
    ++this->t_;
    auto rep = this->fresh_report();
    const Hyper& h = this->hyper_;
    double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(this->t_));
    double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(this->t_));
    for (size_t bi = 0; bi < this->partition_.blocks.size(); ++bi) {
      const BlockRef& ref = this->partition_.blocks[bi];
      auto theta = value_view(blocks, ref);
      auto grad = grad_view(blocks, ref);
      S* m = m_[ref.block].data() + ref.offset;
      S* v = v_[ref.block].data() + ref.offset;
      double dn = 0, deln = 0;
      for (int64_t j = 0; j < ref.count; ++j) {
        S g = this->signed_grad(grad[j]);
        double old_theta = static_cast<double>(theta[j]);
        if (h.weight_decay != 0.0) {
          if (decoupled_) {
            theta[j] = static_cast<S>(theta[j] - h.weight_decay * h.lr * theta[j]);
          } else {
            g = static_cast<S>(g + h.weight_decay * theta[j]);
          }
        }
        m[j] = static_cast<S>(h.beta1 * m[j] + (1.0 - h.beta1) * g);
        v[j] = static_cast<S>(h.beta2 * v[j] + (1.0 - h.beta2) * g * g);
        double mhat = static_cast<double>(m[j]) / bc1;
        double vhat = static_cast<double>(v[j]) / bc2;
        double dir = mhat / (std::sqrt(vhat) + h.eps);
        theta[j] = static_cast<S>(theta[j] - h.lr * dir);
        dn += dir * dir;
        double delta = static_cast<double>(theta[j]) - old_theta;
        deln += delta * delta;
      }
      rep.direction_norms[bi] = std::sqrt(dn);
      rep.delta_norms[bi] = std::sqrt(deln);
      this->check_block_finite(theta, ref.name);
    }
    return rep;
  }

  uint64_t state_bytes() const override {
    uint64_t n = 0;
    for (const auto& m : m_) n += m.size();
    return 2 * n * sizeof(S);
  }

  const std::vector<std::vector<S>>& second_moment() const { return v_; }

 private:
  bool decoupled_;
  std::vector<std::vector<S>> m_, v_;
};

// ---------------------------------------------------------------------------
// Adam-mini over the Mini partition: embedding/head blocks keep element-wise
// second moments; every other block shares one scalar
//   v <- beta2*v + (1-beta2)*mean(g^2)
// computed by a per-block reduction before the element updates (two-phase).
// Weight decay is decoupled. On the first step the scalar path uses
// (1-beta2)*mean(g^2) so the state shape stays consistent.
template <class S>
class AdamMiniOptimizer final : public Optimizer<S> {
 public:
  AdamMiniOptimizer(const std::vector<ParamBlock<S>>& blocks, PartitionSpec partition, Hyper hyper)
      : Optimizer<S>(std::move(partition), hyper) {
    m_.reserve(blocks.size());
    for (const auto& b : blocks) m_.push_back(std::vector<S>(b.value.data.size(), S(0)));
    v_elem_.resize(blocks.size());
    for (const auto& ref : this->partition_.blocks) {
      if (ref.elementwise_v && v_elem_[ref.block].empty()) {
        v_elem_[ref.block].assign(blocks[ref.block].value.data.size(), S(0));
      }
    }
    v_scalar_.assign(this->partition_.blocks.size(), S(0));
  }

  OptKind kind() const override { return OptKind::adam_mini; }

  StepReport step(std::vector<ParamBlock<S>>& blocks) override {
    ++this->t_;
    auto rep = this->fresh_report();
    const Hyper& h = this->hyper_;
    double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(this->t_));
    double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(this->t_));
    // phase 1: per-block reductions for the shared second moments
    for (size_t bi = 0; bi < this->partition_.blocks.size(); ++bi) {
      const BlockRef& ref = this->partition_.blocks[bi];
      if (ref.elementwise_v) continue;
      auto grad = grad_view(blocks, ref);
      double acc = 0;
      for (int64_t j = 0; j < ref.count; ++j) {
        double g = static_cast<double>(this->signed_grad(grad[j]));
        acc += g * g;
      }
      double mean_sq = acc / static_cast<double>(ref.count);
      v_scalar_[bi] = static_cast<S>(h.beta2 * v_scalar_[bi] + (1.0 - h.beta2) * mean_sq);
    }
    // phase 2: element updates
    for (size_t bi = 0; bi < this->partition_.blocks.size(); ++bi) {
      const BlockRef& ref = this->partition_.blocks[bi];
      auto theta = value_view(blocks, ref);
      auto grad = grad_view(blocks, ref);
      S* m = m_[ref.block].data() + ref.offset;
      S* ve = ref.elementwise_v ? v_elem_[ref.block].data() + ref.offset : nullptr;
      double dn = 0, deln = 0;
      for (int64_t j = 0; j < ref.count; ++j) {
        S g = this->signed_grad(grad[j]);
        double old_theta = static_cast<double>(theta[j]);
        if (h.weight_decay != 0.0) theta[j] = static_cast<S>(theta[j] - h.weight_decay * h.lr * theta[j]);
        m[j] = static_cast<S>(h.beta1 * m[j] + (1.0 - h.beta1) * g);
        double vhat;
        if (ve) {
          ve[j] = static_cast<S>(h.beta2 * ve[j] + (1.0 - h.beta2) * g * g);
          vhat = static_cast<double>(ve[j]) / bc2;
        } else {
          vhat = static_cast<double>(v_scalar_[bi]) / bc2;
        }
        double mhat = static_cast<double>(m[j]) / bc1;
        double dir = mhat / (std::sqrt(vhat) + h.eps);
        theta[j] = static_cast<S>(theta[j] - h.lr * dir);
        dn += dir * dir;
        double delta = static_cast<double>(theta[j]) - old_theta;
        deln += delta * delta;
      }
      rep.direction_norms[bi] = std::sqrt(dn);
      rep.delta_norms[bi] = std::sqrt(deln);
      this->check_block_finite(theta, ref.name);
    }
    return rep;
  }

  uint64_t state_bytes() const override {
    uint64_t n = 0;
    for (const auto& m : m_) n += m.size();
    for (const auto& v : v_elem_) n += v.size();
    uint64_t scalars = 0;
    for (const auto& ref : this->partition_.blocks) {
      if (!ref.elementwise_v) ++scalars;
    }
    return (n + scalars) * sizeof(S);
  }

  S scalar_v(size_t partition_block) const { return v_scalar_[partition_block]; }

 private:
  std::vector<std::vector<S>> m_;
  std::vector<std::vector<S>> v_elem_;  // allocated only for flagged tensors
  std::vector<S> v_scalar_;             // per partition block; unused entries stay 0
};

// ---------------------------------------------------------------------------
// Prodigy: D-Adaptation style step-size estimation. Keeps m, v, s and the
// initial parameters x0 (four arrays of parameter size) plus global scalars
// d and r. d is non-decreasing; the update uses the current d_t while the
// max rule advances it for the next step. Weight decay is decoupled.
template <class S>
class ProdigyOptimizer final : public Optimizer<S> {
 public:
  ProdigyOptimizer(const std::vector<ParamBlock<S>>& blocks, PartitionSpec partition, Hyper hyper)
      : Optimizer<S>(std::move(partition), hyper), d_(hyper.d0) {
    m_.reserve(blocks.size());
    v_.reserve(blocks.size());
    s_.reserve(blocks.size());
    x0_.reserve(blocks.size());
    for (const auto& b : blocks) {
      m_.push_back(std::vector<S>(b.value.data.size(), S(0)));
      v_.push_back(std::vector<S>(b.value.data.size(), S(0)));
      s_.push_back(std::vector<S>(b.value.data.size(), S(0)));
      x0_.push_back(b.value.data);
    }
  }

  OptKind kind() const override { return OptKind::prodigy; }

  double d_value() const { return d_; }

  StepReport step(std::vector<ParamBlock<S>>& blocks) override {
    ++this->t_;
    auto rep = this->fresh_report();
    const Hyper& h = this->hyper_;
    double sqrt_b2 = std::sqrt(h.beta2);
    double dot = 0, s_l1 = 0;
    // phase 1: state updates and the global reductions behind d
    for (size_t bi = 0; bi < this->partition_.blocks.size(); ++bi) {
      const BlockRef& ref = this->partition_.blocks[bi];
      auto theta = value_view(blocks, ref);
      auto grad = grad_view(blocks, ref);
      S* m = m_[ref.block].data() + ref.offset;
      S* v = v_[ref.block].data() + ref.offset;
      S* s = s_[ref.block].data() + ref.offset;
      const S* x0 = x0_[ref.block].data() + ref.offset;
      for (int64_t j = 0; j < ref.count; ++j) {
        double g = static_cast<double>(this->signed_grad(grad[j]));
        m[j] = static_cast<S>(h.beta1 * m[j] + (1.0 - h.beta1) * d_ * g);
        v[j] = static_cast<S>(h.beta2 * v[j] + (1.0 - h.beta2) * d_ * d_ * g * g);
        dot += g * (static_cast<double>(x0[j]) - static_cast<double>(theta[j]));
        s[j] = static_cast<S>(sqrt_b2 * s[j] + (1.0 - sqrt_b2) * h.lr * d_ * d_ * g);
        s_l1 += std::abs(static_cast<double>(s[j]));
      }
    }
    r_ = sqrt_b2 * r_ + (1.0 - sqrt_b2) * h.lr * d_ * d_ * dot;
    double d_next = d_;
    if (s_l1 > 0) d_next = std::max(d_, r_ / s_l1);
    // phase 2: decoupled decay + parameter update with the current d
    for (size_t bi = 0; bi < this->partition_.blocks.size(); ++bi) {
      const BlockRef& ref = this->partition_.blocks[bi];
      auto theta = value_view(blocks, ref);
      S* m = m_[ref.block].data() + ref.offset;
      S* v = v_[ref.block].data() + ref.offset;
      double dn = 0, deln = 0;
      for (int64_t j = 0; j < ref.count; ++j) {
        double old_theta = static_cast<double>(theta[j]);
        if (h.weight_decay != 0.0) theta[j] = static_cast<S>(theta[j] - h.weight_decay * h.lr * theta[j]);
        double dir = d_ * static_cast<double>(m[j]) /
                     (std::sqrt(static_cast<double>(v[j])) + d_ * h.eps);
        theta[j] = static_cast<S>(theta[j] - h.lr * dir);
        dn += dir * dir;
        double delta = static_cast<double>(theta[j]) - old_theta;
        deln += delta * delta;
      }
      rep.direction_norms[bi] = std::sqrt(dn);
      rep.delta_norms[bi] = std::sqrt(deln);
      this->check_block_finite(theta, ref.name);
    }
    d_ = d_next;
    return rep;
  }

  uint64_t state_bytes() const override {
    uint64_t n = 0;
    for (const auto& m : m_) n += m.size();
    return 4 * n * sizeof(S);
  }

 private:
  std::vector<std::vector<S>> m_, v_, s_, x0_;
  double d_ = 1e-6;
  double r_ = 0.0;
};

// ---------------------------------------------------------------------------
// SGD-SaI: SGDM with decoupled weight decay whose per-block learning-rate
// gains are the normalized g-SNR scales of the first batch, computed once
// and frozen. Momentum is the EMA m <- mu*m + (1-mu)*g, seeded with m <- g
// by init_from_first_gradients.
template <class S>
class SaiOptimizer final : public Optimizer<S> {
 public:
  SaiOptimizer(const std::vector<ParamBlock<S>>& blocks, PartitionSpec partition, Hyper hyper,
               double gsnr_eps = kDefaultGsnrEps)
      : Optimizer<S>(std::move(partition), hyper), gsnr_eps_(gsnr_eps) {
    m_.reserve(blocks.size());
    for (const auto& b : blocks) m_.push_back(std::vector<S>(b.value.data.size(), S(0)));
    scales_.assign(this->partition_.blocks.size(), S(1));  // frozen by init
  }

  OptKind kind() const override { return OptKind::sgd_sai; }
  bool needs_first_batch_init() const override { return initialized_ == false; }

  // Computes and freezes the scale table from the first batch's gradients
  // and seeds the momentum with m <- g. Calling it again is an error: the
  // scales are frozen for the whole run.
  void init_from_first_gradients(std::vector<ParamBlock<S>>& blocks) override {
    if (initialized_) throw std::logic_error("sgd-sai: scales are frozen once; init called twice");
    if (this->hyper_.maximize) {
      for (auto& b : blocks) {
        for (auto& g : b.grad.data) g = -g;
      }
    }
    table_ = compute_scales(blocks, this->partition_, gsnr_eps_);
    scales_.resize(table_.scales.size());
    for (size_t i = 0; i < scales_.size(); ++i) scales_[i] = static_cast<S>(table_.scales[i]);
    for (const auto& ref : this->partition_.blocks) {
      auto grad = grad_view(blocks, ref);
      S* m = m_[ref.block].data() + ref.offset;
      for (int64_t j = 0; j < ref.count; ++j) m[j] = grad[j];
    }
    if (this->hyper_.maximize) {  // restore caller-visible gradients
      for (auto& b : blocks) {
        for (auto& g : b.grad.data) g = -g;
      }
    }
    initialized_ = true;
  }

  // Replaces the frozen scales; diagnostic hook used by the reduction
  // identity checks (e.g. all scales forced to 1 reproduces SGDM).
  void override_scales(const std::vector<double>& scales) {
    if (scales.size() != this->partition_.blocks.size()) {
      throw std::invalid_argument("override_scales: size mismatch");
    }
    table_.scales = scales;
    scales_.resize(scales.size());
    for (size_t i = 0; i < scales.size(); ++i) scales_[i] = static_cast<S>(scales[i]);
  }

  const ScaleTable& scale_table() const {
    if (!initialized_) throw std::logic_error("sgd-sai: scales not initialized");
    return table_;
  }

  StepReport step(std::vector<ParamBlock<S>>& blocks) override {
    if (!initialized_) throw std::logic_error("sgd-sai: step before init_from_first_gradients");
    ++this->t_;
    auto rep = this->fresh_report();
    const Hyper& h = this->hyper_;
    for (size_t bi = 0; bi < this->partition_.blocks.size(); ++bi) {
      const BlockRef& ref = this->partition_.blocks[bi];
      auto theta = value_view(blocks, ref);
      auto grad = grad_view(blocks, ref);
      S* m = m_[ref.block].data() + ref.offset;
      S scale = scales_[bi];
      double dn = 0, deln = 0;
      for (int64_t j = 0; j < ref.count; ++j) {
        double old_theta = static_cast<double>(theta[j]);
        if (this->t_ > 1) {
          S g = this->signed_grad(grad[j]);
          m[j] = static_cast<S>(h.momentum * m[j] + (1.0 - h.momentum) * g);
        }
        if (h.weight_decay != 0.0) theta[j] = static_cast<S>(theta[j] - h.weight_decay * h.lr * theta[j]);
        double dir = static_cast<double>(scale) * m[j];
        theta[j] = static_cast<S>(theta[j] - h.lr * dir);
        dn += dir * dir;
        double delta = static_cast<double>(theta[j]) - old_theta;
        deln += delta * delta;
      }
      rep.direction_norms[bi] = std::sqrt(dn);
      rep.delta_norms[bi] = std::sqrt(deln);
      this->check_block_finite(theta, ref.name);
    }
    return rep;
  }

  uint64_t state_bytes() const override {
    uint64_t n = 0;
    for (const auto& m : m_) n += m.size();
    return (n + scales_.size()) * sizeof(S);
  }

 private:
  double gsnr_eps_;
  bool initialized_ = false;
  std::vector<std::vector<S>> m_;
  std::vector<S> scales_;  // per partition block, applied in model precision
  ScaleTable table_;
};

// ---------------------------------------------------------------------------

template <class S>
std::unique_ptr<Optimizer<S>> make_optimizer(OptKind kind, const Model<S>& model, const Hyper& hyper,
                                             double gsnr_eps = kDefaultGsnrEps) {
  PartitionSpec part = kind == OptKind::adam_mini ? mini_partition(model) : default_partition(model);
  const auto& blocks = model.blocks();
  switch (kind) {
    case OptKind::sgdm: return std::make_unique<SgdmOptimizer<S>>(blocks, std::move(part), hyper);
    case OptKind::adam: return std::make_unique<AdamOptimizer<S>>(blocks, std::move(part), hyper, false);
    case OptKind::adamw: return std::make_unique<AdamOptimizer<S>>(blocks, std::move(part), hyper, true);
    case OptKind::adam_mini: return std::make_unique<AdamMiniOptimizer<S>>(blocks, std::move(part), hyper);
    case OptKind::prodigy: return std::make_unique<ProdigyOptimizer<S>>(blocks, std::move(part), hyper);
    case OptKind::sgd_sai: return std::make_unique<SaiOptimizer<S>>(blocks, std::move(part), hyper, gsnr_eps);
  }
  throw std::logic_error("unreachable optimizer kind");
}

}  // namespace sailab
