#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "vdctr/ctr/model.hpp"
#include "vdctr/debias/index.hpp"
#include "vdctr/eval/metrics.hpp"
#include "vdctr/numerics/adagrad.hpp"
#include "vdctr/numerics/losses.hpp"

namespace vdctr::ctr {

struct MinedPair {
  std::int64_t anchor_id = 0;
  std::int64_t positive_id = 0;
  double sim = 0.0;
  int epoch = 0;
};

/// anchor item id -> mined positive item id
using PositiveMap = std::unordered_map<std::int64_t, std::int64_t>;

struct CtrLoss {
  Var total;
  Var l_pred;
  std::optional<Var> l_d;
  std::size_t anchors_used = 0;
  std::size_t anchors_skipped = 0;
};

/// L = mean bce + lambda * L_D on one tape. L_D runs over the distinct items
/// of the batch and is left out when the model has no debias network, when
/// lambda is 0, or when no positives are supplied.
inline CtrLoss l_ctr(CtrModel& model, Tape& tape, const std::vector<const TrainSample*>& batch,
                     const PositiveMap* positives) {
  if (batch.size() < 2) throw std::invalid_argument("l_ctr needs a batch of at least 2");
  std::vector<double> labels;
  for (const TrainSample* s : batch) labels.push_back(s->label);
  auto items = model.batch_items(batch);
  Var v_s2 = tape.constant(std::move(items.v_s2));
  const double lambda = model.config().lambda;
  if (!model.has_debias() || lambda == 0.0 || !positives) {
    Var y_hat = model.predict_from(tape, batch, model.item_feature(tape, v_s2), items.rows);
    Var l_pred = ops::mean(ops::bce(y_hat, labels));
    return CtrLoss{l_pred, l_pred, std::nullopt, 0, 0};
  }

  auto& deb = model.debias();
  Var v_d = deb.forward(tape, v_s2);
  Var y_hat = model.predict_from(tape, batch, deb.fuse(tape, v_s2, v_d), items.rows);
  Var l_pred = ops::mean(ops::bce(y_hat, labels));

  const std::size_t d = model.dim();
  std::vector<long> pos_rows(items.ids.size(), -1);
  std::vector<std::int64_t> pos_ids;
  for (std::size_t r = 0; r < items.ids.size(); ++r) {
    auto it = positives->find(items.ids[r]);
    if (it == positives->end()) continue;
    pos_rows[r] = static_cast<long>(pos_ids.size());
    pos_ids.push_back(it->second);
  }
  Tensor pos(Shape{std::max<std::size_t>(pos_ids.size(), 1), d});
  for (std::size_t r = 0; r < pos_ids.size(); ++r) {
    const auto v = model.item_visual(pos_ids[r], nullptr);
    std::copy(v.begin(), v.end(), pos.row(r).begin());
  }
  auto ld = debias::debias_contrastive_loss_from(deb, v_d, deb.forward(tape, tape.constant(std::move(pos))),
                                                 pos_rows);
  return CtrLoss{ops::add(l_pred, ops::scale(ld.loss, lambda)), l_pred, ld.loss, ld.anchors_used,
                 ld.anchors_skipped};
}

/// One positive per distinct anchor, drawn against the fixed index with a
/// stream keyed by (seed, epoch, item id).
inline PositiveMap mine_epoch(const std::vector<std::int64_t>& anchors, const debias::SimilarityIndex& index,
                              std::size_t k, std::uint64_t seed, int epoch, std::vector<MinedPair>* audit) {
  PositiveMap out;
  for (std::int64_t a : anchors) {
    Rng rng = make_rng(seed, "mine-" + std::to_string(epoch), static_cast<std::uint64_t>(a));
    auto c = debias::mine_positive(a, index, k, rng);
    if (!c) continue;
    out[a] = c->item_id;
    if (audit) audit->push_back(MinedPair{a, c->item_id, c->sim, epoch});
  }
  return out;
}

struct StepLog {
  std::size_t step = 0;
  int epoch = 0;
  double loss = 0.0;
  double l_pred = 0.0;
  double l_d = 0.0;
};

struct EpochMetrics {
  int epoch = 0;
  double mean_loss = 0.0;
  double train_auc = 0.0;
  std::optional<double> val_auc;
  double skip_rate = 0.0;
};

struct CtrTrainResult {
  std::vector<EpochMetrics> epochs;
  std::vector<StepLog> steps;
  std::vector<MinedPair> mined;
};

inline std::optional<double> sample_auc(const std::vector<TrainSample>& samples, const std::vector<double>& y_hat) {
  std::vector<eval::ScoredLabel> s;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    s.push_back({y_hat[i], static_cast<int>(samples[i].label)});
    pos += static_cast<std::size_t>(samples[i].label);
  }
  if (pos == 0 || pos == s.size()) return std::nullopt;
  return eval::auc(std::move(s));
}

inline constexpr double kMaxSkipRate = 0.5;

/// Joint training of tables, tower and (optionally) the debias network. The
/// encoder never receives a gradient: its features enter as constants.
inline CtrTrainResult train_ctr(CtrModel& model, const std::vector<TrainSample>& train,
                                const std::vector<TrainSample>& val, const debias::SimilarityIndex* index) {
  if (train.empty()) throw std::invalid_argument("train_ctr: empty training log");
  const CtrConfig& cfg = model.config();
  const bool use_ld = model.has_debias() && cfg.lambda != 0.0;
  if (use_ld && !index) throw std::invalid_argument("train_ctr: debias loss needs a similarity index");
  if (cfg.batch_size < 2) throw ConfigError("ctr batch_size must be at least 2");

  std::vector<std::int64_t> anchors;
  {
    std::vector<char> seen;
    for (const auto& s : train) {
      const auto id = static_cast<std::size_t>(s.item_id);
      if (id >= seen.size()) seen.resize(id + 1, 0);
      if (!seen[id]) anchors.push_back(s.item_id);
      seen[id] = 1;
    }
    std::sort(anchors.begin(), anchors.end());
  }

  Adagrad opt(cfg.optimizer);
  CtrTrainResult result;
  std::size_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochMetrics em;
    em.epoch = epoch;
    PositiveMap positives;
    if (use_ld) {
      positives = mine_epoch(anchors, *index, cfg.top_k, cfg.seed, epoch, &result.mined);
      em.skip_rate = 1.0 - static_cast<double>(positives.size()) / static_cast<double>(anchors.size());
      if (em.skip_rate >= kMaxSkipRate) {
        throw std::runtime_error("debias skip rate " + std::to_string(em.skip_rate) +
                                 " at epoch " + std::to_string(epoch) + " (limit 0.5)");
      }
    }
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng order_rng = make_rng(cfg.seed, "ctr-order", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    std::size_t n_steps = 0;
    for (std::size_t start = 0; start + 2 <= train.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(train.size(), start + cfg.batch_size);
      std::vector<const TrainSample*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train[order[i]]);
      Tape tape;
      CtrLoss loss = l_ctr(model, tape, batch, use_ld ? &positives : nullptr);
      StepLog log{step++, epoch, loss.total.value().item(), loss.l_pred.value().item(),
                  loss.l_d ? loss.l_d->value().item() : 0.0};
      result.steps.push_back(log);
      loss_sum += log.loss;
      ++n_steps;
      opt.step(tape.backward(loss.total));
    }
    em.mean_loss = n_steps ? loss_sum / static_cast<double>(n_steps) : 0.0;
    em.train_auc = sample_auc(train, model.predict_all(train)).value_or(0.5);
    if (!val.empty()) em.val_auc = sample_auc(val, model.predict_all(val));
    result.epochs.push_back(em);
  }
  return result;
}

}  // namespace vdctr::ctr
