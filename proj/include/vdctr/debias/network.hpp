#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vdctr/errors.hpp"
#include "vdctr/io/checkpoint.hpp"
#include "vdctr/numerics/layers.hpp"
#include "vdctr/numerics/losses.hpp"

namespace vdctr::debias {

enum class GateMode { kElementwise, kScalar };

struct DebiasConfig {
  std::vector<std::size_t> hidden{128, 16, 128};
  std::vector<Activation> hidden_activations{Activation::kRelu, Activation::kTanh,
                                             Activation::kRelu};
  GateMode gate = GateMode::kElementwise;
  bool gate_bias = false;
  double gate_bias_init = 0.0;  // positive values start the gate leaning toward v^S2
  double temperature = 1.0;
  bool literal_denominator = false;
};

/// Debias MLP D -> 128 -> 16 -> 128 -> D plus the gate that fuses v^S2 with
/// v^D: alpha = sigmoid([v^S2, v^D] W + b), v_p = alpha v^S2 + (1 - alpha) v^D.
class DebiasModel {
 public:
  DebiasModel() = default;

  DebiasModel(std::size_t dim, DebiasConfig cfg, std::uint64_t seed)
      : dim_(dim), cfg_(std::move(cfg)) {
    if (cfg_.hidden.size() != cfg_.hidden_activations.size()) {
      throw ConfigError("debias: one activation per hidden layer");
    }
    std::vector<std::size_t> sizes{dim_};
    sizes.insert(sizes.end(), cfg_.hidden.begin(), cfg_.hidden.end());
    sizes.push_back(dim_);
    auto acts = cfg_.hidden_activations;
    acts.push_back(Activation::kIdentity);
    Rng rng = make_rng(seed, "debias-init");
    mlp_ = Mlp("debias.mlp", sizes, acts, rng);
    const std::size_t gate_out = cfg_.gate == GateMode::kScalar ? 1 : dim_;
    gate_w_ = Parameter{"debias.gate.weight", glorot_uniform(2 * dim_, gate_out, rng)};
    gate_b_ = Parameter{"debias.gate.bias", Tensor(Shape{gate_out}, cfg_.gate_bias ? cfg_.gate_bias_init : 0.0)};
  }

  std::size_t dim() const { return dim_; }
  const DebiasConfig& config() const { return cfg_; }
  Mlp& mlp() { return mlp_; }
  Parameter& gate_weight() { return gate_w_; }
  Parameter& gate_bias() { return gate_b_; }

  /// v^D = MLP(v^S2), unnormalized. Rows of [n x D].
  Var forward(Tape& tape, const Var& v_s2) { return mlp_.forward(tape, v_s2); }

  /// alpha in (0,1), [n x D] (elementwise gate) or [n x 1] (scalar gate).
  Var gate(Tape& tape, const Var& v_s2, const Var& v_d) {
    Var z = ops::matmul(ops::concat_cols(v_s2, v_d), tape.param(gate_w_));
    if (cfg_.gate_bias) z = ops::add_row_bias(z, tape.param(gate_b_));
    return ops::sigmoid(z);
  }

  /// v_p = v^D + alpha * (v^S2 - v^D).
  Var fuse(Tape& tape, const Var& v_s2, const Var& v_d) {
    Var alpha = gate(tape, v_s2, v_d);
    Var diff = ops::sub(v_s2, v_d);
    Var mixed = cfg_.gate == GateMode::kScalar ? ops::mul_col_broadcast(alpha, diff)
                                               : ops::mul(alpha, diff);
    return ops::add(v_d, mixed);
  }

  std::vector<Parameter*> parameters() {
    auto p = mlp_.parameters();
    p.push_back(&gate_w_);
    if (cfg_.gate_bias) p.push_back(&gate_b_);
    return p;
  }

  void append_checkpoint(std::vector<io::NamedTensor>& out) const {
    out.push_back(io::meta_entry("debias.gate", cfg_.gate == GateMode::kScalar ? "scalar" : "elementwise"));
    out.push_back(io::meta_entry("debias.gate_bias", cfg_.gate_bias ? "1" : "0"));
    for (const Parameter* p : mlp_.parameters()) out.push_back({p->name, p->value});
    out.push_back({gate_w_.name, gate_w_.value});
    out.push_back({gate_b_.name, gate_b_.value});
  }

  void load_tensors(const std::vector<io::NamedTensor>& tensors) {
    auto load = [&](Parameter& p) {
      const Tensor& t = io::find_tensor(tensors, p.name);
      require_same_shape(p.value, t, "debias checkpoint");
      p.value = t;
    };
    for (Parameter* p : mlp_.parameters()) load(*p);
    load(gate_w_);
    load(gate_b_);
  }

 private:
  std::size_t dim_ = 0;
  DebiasConfig cfg_;
  Mlp mlp_;
  Parameter gate_w_;
  Parameter gate_b_;
};

struct DebiasLoss {
  Var loss;
  std::size_t anchors_used = 0;
  std::size_t anchors_skipped = 0;
};

namespace detail {

inline std::vector<std::size_t> anchors_with_positive(const std::vector<long>& positive_rows, std::size_t n,
                                                      std::vector<std::size_t>& pos_rows) {
  if (n < 2) throw std::invalid_argument("debias loss needs a batch of at least 2");
  if (positive_rows.size() != n) throw DimensionError("debias loss: one positive slot per anchor");
  std::vector<std::size_t> anchor_rows;
  for (std::size_t r = 0; r < n; ++r) {
    if (positive_rows[r] < 0) continue;
    anchor_rows.push_back(r);
    pos_rows.push_back(static_cast<std::size_t>(positive_rows[r]));
  }
  if (anchor_rows.empty()) {
    throw std::runtime_error("debias loss inactive: every anchor lacks a mined positive");
  }
  return anchor_rows;
}

}  // namespace detail

/// In-batch contrastive loss on debiased features already computed: `batch_v_d`
/// is v^D of the batch items, `positives_v_d` v^D of the mined positives.
inline DebiasLoss debias_contrastive_loss_from(const DebiasModel& model, const Var& batch_v_d,
                                               const Var& positives_v_d,
                                               const std::vector<long>& positive_rows) {
  const std::size_t n = batch_v_d.value().rows();
  std::vector<std::size_t> pos_rows;
  const auto anchor_rows = detail::anchors_with_positive(positive_rows, n, pos_rows);
  Var vd = ops::l2_normalize(batch_v_d);
  Var vd_pos = ops::l2_normalize(ops::gather_rows(positives_v_d, pos_rows));
  Var anchors = ops::gather_rows(vd, anchor_rows);
  const auto& cfg = model.config();
  Var rows = in_batch_contrastive_rows(anchors, vd_pos, vd, anchor_rows, cfg.literal_denominator,
                                       cfg.temperature);
  return DebiasLoss{ops::mean(rows), anchor_rows.size(), n - anchor_rows.size()};
}

/// In-batch contrastive loss on debiased features.
///
/// `batch_v_s2` holds v^S2 of the batch items [n x D]; `positive_rows[r]` is
/// the row in `positives_v_s2` of item r's mined positive, or -1 when it has
/// none. Each anchor with a positive is contrasted against its positive and
/// every other batch item; v^D is L2-normalized before the cosine terms.
/// Throws when the batch is smaller than 2 or every anchor is skipped.
inline DebiasLoss debias_contrastive_loss(DebiasModel& model, Tape& tape, const Var& batch_v_s2,
                                          const Var& positives_v_s2,
                                          const std::vector<long>& positive_rows) {
  std::vector<std::size_t> pos_rows;
  detail::anchors_with_positive(positive_rows, batch_v_s2.value().rows(), pos_rows);
  return debias_contrastive_loss_from(model, model.forward(tape, batch_v_s2),
                                      model.forward(tape, positives_v_s2), positive_rows);
}

}  // namespace vdctr::debias
