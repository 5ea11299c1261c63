#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "vdctr/dataset/types.hpp"
#include "vdctr/encoder/augment.hpp"
#include "vdctr/encoder/model.hpp"
#include "vdctr/errors.hpp"
#include "vdctr/numerics/adagrad.hpp"
#include "vdctr/numerics/losses.hpp"

namespace vdctr::encoder {

enum class Stage { kClassifier, kS1, kS2 };

inline const char* stage_tag(Stage s) {
  switch (s) {
    case Stage::kClassifier: return "classifier";
    case Stage::kS1: return "S1";
    case Stage::kS2: return "S2";
  }
  return "?";
}

/// Per-category item ids, ascending within each category.
class NegativePool {
 public:
  NegativePool() = default;

  explicit NegativePool(const std::vector<data::Item>& items) {
    if (items.empty()) throw std::invalid_argument("negative pool: empty catalog");
    for (const auto& it : items) {
      by_category_[it.category_id].push_back(it.item_id);
      category_of_[it.item_id] = it.category_id;
    }
    for (auto& [c, ids] : by_category_) std::sort(ids.begin(), ids.end());
  }

  const std::vector<std::int64_t>& pool(int category) const {
    static const std::vector<std::int64_t> kEmpty;
    auto it = by_category_.find(category);
    return it == by_category_.end() ? kEmpty : it->second;
  }
  int category_of(std::int64_t item_id) const { return category_of_.at(item_id); }
  const std::map<int, std::vector<std::int64_t>>& pools() const { return by_category_; }

 private:
  std::map<int, std::vector<std::int64_t>> by_category_;
  std::unordered_map<std::int64_t, int> category_of_;
};

inline NegativePool build_negative_pool(const std::vector<data::Item>& items) {
  return NegativePool(items);
}

/// m distinct ids from pool(category of positive) excluding the positive.
inline std::vector<std::int64_t> sample_negatives(const NegativePool& pool,
                                                  std::int64_t positive_id, std::size_t m,
                                                  Rng& rng) {
  const int c = pool.category_of(positive_id);
  const auto& ids = pool.pool(c);
  if (ids.size() < m + 1) {
    throw std::invalid_argument("negative pool for category " + std::to_string(c) + " has " +
                                std::to_string(ids.size()) + " items, need at least " +
                                std::to_string(m + 1));
  }
  std::vector<std::int64_t> out;
  out.reserve(m);
  std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
  while (out.size() < m) {
    const std::int64_t cand = ids[pick(rng)];
    if (cand == positive_id || std::find(out.begin(), out.end(), cand) != out.end()) continue;
    out.push_back(cand);
  }
  return out;
}

struct StageConfig {
  int epochs = 10;
  std::size_t batch_size = 128;
  std::size_t negatives = 31;  // m, S2 only
  AdagradConfig optimizer{};
  std::uint64_t seed = 7;
};

/// Inputs a stage may draw on. S1 and the classifier read items; S2 reads
/// queries, items and the clicked training events.
struct StageData {
  const std::vector<data::Item>* items = nullptr;
  const std::vector<data::Query>* queries = nullptr;
  const std::vector<data::ClickEvent>* clicks = nullptr;
  AugmentationConfig augmentation{};
  int n_categories = 0;
};

struct StageResult {
  std::vector<double> loss_curve;
};

/// In-batch S1 loss: anchors are raw images, positives their augmented
/// views, negatives the other raw images of the batch.
inline Var s1_batch_loss(EncoderModel& model, Tape& tape,
                         const std::vector<const std::vector<double>*>& batch,
                         const AugmentationConfig& aug, Rng& rng) {
  if (batch.size() < 2) throw std::invalid_argument("S1 batch needs at least 2 images");
  std::vector<std::vector<double>> views;
  views.reserve(batch.size());
  for (const auto* img : batch) views.push_back(augment(*img, aug, rng));
  std::vector<const std::vector<double>*> view_ptrs;
  for (const auto& v : views) view_ptrs.push_back(&v);
  Var anchors = model.embed(tape, stack_rows(batch, model.input_dim()));
  Var positives = model.embed(tape, stack_rows(view_ptrs, model.input_dim()));
  std::vector<std::size_t> rows(batch.size());
  std::iota(rows.begin(), rows.end(), 0);
  const auto& cfg = model.config();
  return ops::mean(in_batch_contrastive_rows(anchors, positives, anchors, rows,
                                             cfg.literal_denominator, cfg.temperature));
}

struct ClickPair {
  const std::vector<double>* query_image;
  std::int64_t item_id;
};

/// S2 batch loss: query anchors, clicked item positives, m negatives
/// per pair from the clicked item's category pool.
inline Var s2_batch_loss(EncoderModel& model, Tape& tape, const std::vector<ClickPair>& pairs,
                         const std::vector<data::Item>& items, const NegativePool& pool,
                         std::size_t m, Rng& rng) {
  if (pairs.empty()) throw std::invalid_argument("S2 batch is empty");
  std::vector<std::int64_t> unique_ids;
  std::unordered_map<std::int64_t, std::size_t> slot;
  auto row_of = [&](std::int64_t id) {
    auto [it, fresh] = slot.emplace(id, unique_ids.size());
    if (fresh) unique_ids.push_back(id);
    return it->second;
  };
  std::vector<std::size_t> pos_rows, neg_rows;
  std::vector<const std::vector<double>*> query_images;
  for (const ClickPair& p : pairs) {
    query_images.push_back(p.query_image);
    pos_rows.push_back(row_of(p.item_id));
    const int c = pool.category_of(p.item_id);
    for (std::int64_t n : sample_negatives(pool, p.item_id, m, rng)) {
      if (n == p.item_id || pool.category_of(n) != c) {
        throw std::logic_error("S2 negative violates the same-category pool contract");
      }
      neg_rows.push_back(row_of(n));
    }
  }
  std::vector<const std::vector<double>*> item_images;
  for (std::int64_t id : unique_ids) item_images.push_back(&items.at(static_cast<std::size_t>(id)).image);
  Var q = model.embed(tape, stack_rows(query_images, model.input_dim()));
  Var z = model.embed(tape, stack_rows(item_images, model.input_dim()));
  Var pos = ops::gather_rows(z, pos_rows);
  return ops::mean(sampled_contrastive_rows(q, pos, z, neg_rows, m, model.config().temperature));
}

/// Softmax cross-entropy of the category head on normalized embeddings.
inline Var classifier_batch_loss(EncoderModel& model, Tape& tape,
                                 const std::vector<const std::vector<double>*>& batch,
                                 const std::vector<int>& categories) {
  const std::size_t n = batch.size();
  Var logits = model.head().forward(tape, model.embed(tape, stack_rows(batch, model.input_dim())));
  const std::size_t c = logits.value().cols();
  std::vector<std::size_t> target_idx(n);
  std::vector<char> mask(n * (c + 1), 1);
  for (std::size_t r = 0; r < n; ++r) {
    target_idx[r] = r * c + static_cast<std::size_t>(categories[r]);
    mask[r * (c + 1) + 1 + categories[r]] = 0;
  }
  Var target = ops::reshape(ops::gather_rows(ops::reshape(logits, Shape{n * c}), target_idx),
                            Shape{n, 1});
  return ops::mean(ops::masked_row_xent(ops::concat_cols(target, logits), std::move(mask)));
}

namespace detail {

inline std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

template <typename LossFn>
void run_epochs(const StageConfig& cfg, std::size_t n_examples,
                std::size_t min_batch, const char* stream, LossFn&& loss_fn,
                StageResult& result) {
  Adagrad opt(cfg.optimizer);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng order_rng = make_rng(cfg.seed, std::string(stream) + "-order", epoch);
    Rng rng = make_rng(cfg.seed, std::string(stream) + "-sample", epoch);
    const auto order = shuffled(n_examples, order_rng);
    for (std::size_t start = 0; start < n_examples; start += cfg.batch_size) {
      const std::size_t end = std::min(n_examples, start + cfg.batch_size);
      if (end - start < min_batch) break;
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);
      Tape tape;
      Var loss = loss_fn(tape, idx, rng);
      result.loss_curve.push_back(loss.value().item());
      opt.step(tape.backward(loss));
    }
  }
}

}  // namespace detail

/// Trains one encoder stage in place and stamps its provenance. With
/// `require_s1_parent`, S2 refuses to start from anything but an S1 checkpoint.
inline StageResult train_stage(EncoderModel& model, Stage stage, const StageData& data,
                               const StageConfig& cfg, bool require_s1_parent = false) {
  if (model.frozen()) throw FrozenParameterError("cannot train a frozen encoder");
  if (stage == Stage::kS2 && require_s1_parent && model.provenance().stage != "S1") {
    throw ProvenanceError("S2 in S1+S2 mode needs an S1 checkpoint, got stage '" +
                          model.provenance().stage + "'");
  }
  if (!data.items || data.items->empty()) throw std::invalid_argument("train_stage: no items");
  const std::string parent = model.hash();
  StageResult result;
  const auto& items = *data.items;

  switch (stage) {
    case Stage::kS1: {
      data.augmentation.validate();
      if (!data.augmentation.any_active()) throw ConfigError("S1 needs an active augmentation");
      detail::run_epochs(cfg, items.size(), 2, "s1",
                         [&](Tape& tape, const std::vector<std::size_t>& idx, Rng& rng) {
                           std::vector<const std::vector<double>*> batch;
                           for (std::size_t i : idx) batch.push_back(&items[i].image);
                           return s1_batch_loss(model, tape, batch, data.augmentation, rng);
                         },
                         result);
      break;
    }
    case Stage::kS2: {
      if (!data.queries || !data.clicks) throw std::invalid_argument("S2 needs queries and clicks");
      std::vector<ClickPair> pairs;
      for (const auto& e : *data.clicks) {
        if (e.clicked != 1) continue;
        pairs.push_back(ClickPair{&data.queries->at(static_cast<std::size_t>(e.query_id)).image,
                                  e.item_id});
      }
      if (pairs.empty()) throw std::invalid_argument("S2 needs at least one click");
      const NegativePool pool(items);
      detail::run_epochs(cfg, pairs.size(), 1, "s2",
                         [&](Tape& tape, const std::vector<std::size_t>& idx, Rng& rng) {
                           std::vector<ClickPair> batch;
                           for (std::size_t i : idx) batch.push_back(pairs[i]);
                           return s2_batch_loss(model, tape, batch, items, pool, cfg.negatives, rng);
                         },
                         result);
      break;
    }
    case Stage::kClassifier: {
      if (data.n_categories <= 0) throw std::invalid_argument("classifier needs n_categories");
      if (!model.has_head()) model.add_category_head(data.n_categories, cfg.seed);
      detail::run_epochs(cfg, items.size(), 1, "classifier",
                         [&](Tape& tape, const std::vector<std::size_t>& idx, Rng&) {
                           std::vector<const std::vector<double>*> batch;
                           std::vector<int> cats;
                           for (std::size_t i : idx) {
                             batch.push_back(&items[i].image);
                             cats.push_back(items[i].category_id);
                           }
                           return classifier_batch_loss(model, tape, batch, cats);
                         },
                         result);
      break;
    }
  }
  if (cfg.epochs > 0) model.provenance() = Provenance{stage_tag(stage), parent};
  return result;
}

}  // namespace vdctr::encoder
