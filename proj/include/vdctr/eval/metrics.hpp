#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vdctr/dataset/types.hpp"
#include "vdctr/errors.hpp"
#include "vdctr/numerics/tensor.hpp"

namespace vdctr::eval {

struct Ranking {
  std::int64_t query_id = 0;
  std::vector<std::int64_t> items;  // best first
  std::vector<double> scores;       // cosine, aligned with items
};

/// Full ranking of every item for every query by cosine (dot product of unit
/// rows), ties broken by ascending item id.
inline std::vector<Ranking> rank_all(const std::vector<std::int64_t>& query_ids, const Tensor& query_embs,
                                     const std::vector<std::int64_t>& item_ids, const Tensor& item_embs) {
  if (query_embs.rank() != 2 || item_embs.rank() != 2 || query_embs.cols() != item_embs.cols()) {
    throw DimensionError("rank_all: embedding dimensions " + shape_string(query_embs.shape()) +
                         " vs " + shape_string(item_embs.shape()));
  }
  if (query_ids.size() != query_embs.rows() || item_ids.size() != item_embs.rows()) {
    throw DimensionError("rank_all: ids and embedding rows disagree");
  }
  std::vector<Ranking> out;
  out.reserve(query_ids.size());
  std::vector<std::pair<double, std::int64_t>> scored(item_ids.size());
  for (std::size_t q = 0; q < query_ids.size(); ++q) {
    for (std::size_t i = 0; i < item_ids.size(); ++i) {
      scored[i] = {dot(query_embs.row(q), item_embs.row(i)), item_ids[i]};
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    Ranking r{query_ids[q], {}, {}};
    r.items.reserve(scored.size());
    r.scores.reserve(scored.size());
    for (const auto& [s, id] : scored) {
      r.items.push_back(id);
      r.scores.push_back(s);
    }
    out.push_back(std::move(r));
  }
  return out;
}

/// HR = sum_q |relevant_q  top-n_q| / sum_q n_q with n_q = |relevant_q|.
inline double hit_ratio(const std::vector<Ranking>& rankings,
                        const std::vector<data::RelevanceAnnotation>& annotations) {
  std::unordered_map<std::int64_t, const data::RelevanceAnnotation*> by_query;
  for (const auto& a : annotations) by_query[a.query_id] = &a;
  std::vector<std::int64_t> missing;
  for (const auto& r : rankings) {
    if (!by_query.count(r.query_id)) missing.push_back(r.query_id);
  }
  if (!missing.empty()) {
    std::string ids;
    for (std::size_t i = 0; i < missing.size(); ++i) ids += (i ? "," : "") + std::to_string(missing[i]);
    throw std::invalid_argument("hit_ratio: queries without annotation: " + ids);
  }
  double hits = 0.0, total = 0.0;
  for (const auto& r : rankings) {
    const auto& rel = by_query[r.query_id]->relevant_item_ids;
    const std::set<std::int64_t> truth(rel.begin(), rel.end());
    const std::size_t n = std::min(truth.size(), r.items.size());
    for (std::size_t i = 0; i < n; ++i) hits += truth.count(r.items[i]) ? 1.0 : 0.0;
    total += static_cast<double>(truth.size());
  }
  if (total == 0.0) throw std::invalid_argument("hit_ratio: no relevant items");
  return hits / total;
}

namespace detail {

inline void require_k(const std::vector<Ranking>& rankings, std::size_t k) {
  if (k == 0) throw std::invalid_argument("K must be positive");
  for (const auto& r : rankings) {
    if (r.items.size() < k) {
      throw std::invalid_argument("K=" + std::to_string(k) + " exceeds ranking length " +
                                  std::to_string(r.items.size()));
    }
  }
  if (rankings.empty()) throw std::invalid_argument("no rankings");
}

}  // namespace detail

/// LR@K = sum_q |low  top-K_q| / sum_q K.
inline double lr_at_k(const std::vector<Ranking>& rankings, const std::set<std::int64_t>& low_impression,
                      std::size_t k) {
  detail::require_k(rankings, k);
  double hits = 0.0;
  for (const auto& r : rankings)
    for (std::size_t i = 0; i < k; ++i) hits += low_impression.count(r.items[i]) ? 1.0 : 0.0;
  return hits / static_cast<double>(rankings.size() * k);
}

/// CR@K = sum_q |same-category  top-K_q| / sum_q K.
inline double cr_at_k(const std::vector<Ranking>& rankings,
                      const std::unordered_map<std::int64_t, int>& item_category,
                      const std::unordered_map<std::int64_t, int>& query_category, std::size_t k) {
  detail::require_k(rankings, k);
  double hits = 0.0;
  for (const auto& r : rankings) {
    const int qc = query_category.at(r.query_id);
    for (std::size_t i = 0; i < k; ++i) hits += item_category.at(r.items[i]) == qc ? 1.0 : 0.0;
  }
  return hits / static_cast<double>(rankings.size() * k);
}

struct ScoredLabel {
  double score = 0.0;
  int label = 0;
};

/// Probability that a random positive outscores a random negative, ties
/// counting one half, via the rank-sum with midranks.
inline double auc(std::vector<ScoredLabel> scores) {
  std::size_t n_pos = 0;
  for (const auto& s : scores) {
    if (s.label != 0 && s.label != 1) throw std::invalid_argument("auc: labels must be 0/1");
    n_pos += static_cast<std::size_t>(s.label);
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auc: both classes required");
  std::sort(scores.begin(), scores.end(),
            [](const ScoredLabel& a, const ScoredLabel& b) { return a.score < b.score; });
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < scores.size();) {
    std::size_t j = i;
    while (j < scores.size() && scores[j].score == scores[i].score) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      if (scores[t].label == 1) pos_rank_sum += midrank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

enum class Decile { kBottom, kTop };

struct ScoredEvent {
  std::int64_t item_id = 0;
  double score = 0.0;
  int label = 0;
};

/// Items of the chosen impression decile among the distinct scored items.
/// Bottom orders by impressions ascending, top by impressions descending; both
/// break ties by ascending item id. The bucket holds ceil(n/10) items.
inline std::set<std::int64_t> decile_items(const std::vector<ScoredEvent>& events,
                                           const std::unordered_map<std::int64_t, std::int64_t>& impressions,
                                           Decile decile) {
  std::set<std::int64_t> distinct;
  for (const auto& e : events) distinct.insert(e.item_id);
  std::vector<std::pair<std::int64_t, std::int64_t>> order;  // (impressions, id)
  for (std::int64_t id : distinct) {
    auto it = impressions.find(id);
    if (it == impressions.end()) {
      throw std::invalid_argument("no impression count for item " + std::to_string(id));
    }
    order.emplace_back(it->second, id);
  }
  std::sort(order.begin(), order.end(), [decile](const auto& a, const auto& b) {
    if (a.first != b.first) return decile == Decile::kBottom ? a.first < b.first : a.first > b.first;
    return a.second < b.second;
  });
  const std::size_t take = (order.size() + 9) / 10;
  std::set<std::int64_t> out;
  for (std::size_t i = 0; i < take; ++i) out.insert(order[i].second);
  return out;
}

/// AUC over events whose item is in the chosen impression decile; empty when
/// that subset holds a single class.
inline std::optional<double> auc_bucketed(const std::vector<ScoredEvent>& events,
                                          const std::unordered_map<std::int64_t, std::int64_t>& impressions,
                                          Decile decile) {
  const auto bucket = decile_items(events, impressions, decile);
  std::vector<ScoredLabel> sub;
  std::size_t pos = 0;
  for (const auto& e : events) {
    if (!bucket.count(e.item_id)) continue;
    sub.push_back({e.score, e.label});
    pos += static_cast<std::size_t>(e.label);
  }
  if (pos == 0 || pos == sub.size()) return std::nullopt;
  return auc(std::move(sub));
}

inline std::vector<ScoredLabel> to_scored_labels(const std::vector<ScoredEvent>& events) {
  std::vector<ScoredLabel> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back({e.score, e.label});
  return out;
}

}  // namespace vdctr::eval
