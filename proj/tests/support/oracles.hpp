#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "vdctr/rng.hpp"

// Brute-force references for the evaluation metrics. They share no code with
// the library: ranks come from pairwise counting, AUC from counting pairs.

namespace vdctr::testing::oracle {

struct Instance {
  std::size_t n_items = 0;
  std::size_t dim = 0;
  std::vector<std::vector<double>> items;    // unit rows
  std::vector<std::vector<double>> queries;  // unit rows
  std::vector<int> item_cat;
  std::vector<int> query_cat;
  std::vector<std::set<std::int64_t>> relevant;  // per query, non-empty
  std::set<std::int64_t> low;
};

inline std::vector<double> unit(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

/// Random instance; coordinates are coarsely quantized so exact score ties occur.
inline Instance random_instance(std::uint64_t seed, std::size_t max_items = 500) {
  Rng rng = make_rng(seed, "oracle-instance");
  Instance in;
  in.n_items = 20 + rng() % (max_items - 19);
  in.dim = 2 + rng() % 4;
  const std::size_t n_q = 1 + rng() % 12;
  const int n_cat = 1 + static_cast<int>(rng() % 4);
  auto vec = [&] {
    std::vector<double> v(in.dim);
    do {
      for (double& x : v) x = static_cast<double>(static_cast<int>(rng() % 5) - 2);
    } while (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }));
    return unit(v);
  };
  for (std::size_t i = 0; i < in.n_items; ++i) {
    in.items.push_back(vec());
    in.item_cat.push_back(static_cast<int>(rng() % n_cat));
    if (rng() % 3 == 0) in.low.insert(static_cast<std::int64_t>(i));
  }
  for (std::size_t q = 0; q < n_q; ++q) {
    in.queries.push_back(vec());
    in.query_cat.push_back(static_cast<int>(rng() % n_cat));
    std::set<std::int64_t> rel;
    const std::size_t want = 1 + rng() % 15;
    while (rel.size() < want) rel.insert(static_cast<std::int64_t>(rng() % in.n_items));
    in.relevant.push_back(rel);
  }
  return in;
}

inline double score(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Position of `item` in the ranking of query q: the number of items that beat it.
inline std::size_t rank_of(const Instance& in, std::size_t q, std::size_t item) {
  const double s = score(in.queries[q], in.items[item]);
  std::size_t r = 0;
  for (std::size_t j = 0; j < in.n_items; ++j) {
    const double sj = score(in.queries[q], in.items[j]);
    if (sj > s || (sj == s && j < item)) ++r;
  }
  return r;
}

inline double hr(const Instance& in) {
  double hits = 0.0, total = 0.0;
  for (std::size_t q = 0; q < in.queries.size(); ++q) {
    const std::size_t n = in.relevant[q].size();
    for (std::int64_t it : in.relevant[q]) hits += rank_of(in, q, static_cast<std::size_t>(it)) < n ? 1.0 : 0.0;
    total += static_cast<double>(n);
  }
  return hits / total;
}

inline double lr(const Instance& in, std::size_t k) {
  double hits = 0.0;
  for (std::size_t q = 0; q < in.queries.size(); ++q)
    for (std::size_t i = 0; i < in.n_items; ++i)
      if (in.low.count(static_cast<std::int64_t>(i)) && rank_of(in, q, i) < k) hits += 1.0;
  return hits / static_cast<double>(in.queries.size() * k);
}

inline double cr(const Instance& in, std::size_t k) {
  double hits = 0.0;
  for (std::size_t q = 0; q < in.queries.size(); ++q)
    for (std::size_t i = 0; i < in.n_items; ++i)
      if (in.item_cat[i] == in.query_cat[q] && rank_of(in, q, i) < k) hits += 1.0;
  return hits / static_cast<double>(in.queries.size() * k);
}

struct Event {
  std::int64_t item = 0;
  double score = 0.0;
  int label = 0;
};

/// Pair counting: wins plus half the ties over all positive/negative pairs.
inline std::optional<double> auc(const std::vector<Event>& ev) {
  double num = 0.0, pairs = 0.0;
  for (const auto& p : ev) {
    if (p.label != 1) continue;
    for (const auto& n : ev) {
      if (n.label != 0) continue;
      pairs += 1.0;
      num += p.score > n.score ? 1.0 : (p.score == n.score ? 0.5 : 0.0);
    }
  }
  if (pairs == 0.0) return std::nullopt;
  return num / pairs;
}

/// AUC over events whose item sits in the bottom (or top) ceil(n/10) of the
/// distinct scored items ordered by impressions, ties by ascending id.
inline std::optional<double> auc_decile(const std::vector<Event>& ev, const std::map<std::int64_t, std::int64_t>& imp,
                                        bool bottom) {
  std::set<std::int64_t> items;
  for (const auto& e : ev) items.insert(e.item);
  const std::size_t take = (items.size() + 9) / 10;
  std::vector<Event> sub;
  for (const auto& e : ev) {
    std::size_t before = 0;
    for (std::int64_t j : items) {
      const auto a = imp.at(j), b = imp.at(e.item);
      const bool earlier = bottom ? (a < b) : (a > b);
      if (earlier || (a == b && j < e.item)) ++before;
    }
    if (before < take) sub.push_back(e);
  }
  return auc(sub);
}

}  // namespace vdctr::testing::oracle
