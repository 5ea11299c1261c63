#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "support/oracles.hpp"
#include "vdctr/debias/index.hpp"
#include "vdctr/eval/metrics.hpp"

// Randomized oracle comparisons shared by the unit suite and the acceptance
// binary.

namespace vdctr::testing {

struct MetricDiffs {
  std::size_t instances = 0;
  double hr = 0.0, lr = 0.0, cr = 0.0, auc = 0.0, auc_bottom = 0.0, auc_top = 0.0;
  std::size_t undefined_mismatches = 0;  // library and oracle disagree on "undefined"

  double worst() const { return std::max({hr, lr, cr, auc, auc_bottom, auc_top}); }
};

namespace detail {

inline Tensor to_tensor(const std::vector<std::vector<double>>& rows) {
  Tensor t(Shape{rows.size(), rows.front().size()});
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), t.row(r).begin());
  return t;
}

inline void track(double& worst, double a, double b) { worst = std::max(worst, std::abs(a - b)); }

}  // namespace detail

/// Library metrics against brute-force counting on `n` seeded instances.
inline MetricDiffs metric_oracle_suite(std::size_t n, std::uint64_t base_seed = 0) {
  MetricDiffs d;
  for (std::size_t s = 0; s < n; ++s) {
    const std::uint64_t seed = base_seed + s;
    const auto in = oracle::random_instance(seed);
    Rng rng = make_rng(seed, "oracle-k");
    std::vector<std::int64_t> qids, iids;
    for (std::size_t q = 0; q < in.queries.size(); ++q) qids.push_back(static_cast<std::int64_t>(q));
    for (std::size_t i = 0; i < in.n_items; ++i) iids.push_back(static_cast<std::int64_t>(i));
    const auto rankings = eval::rank_all(qids, detail::to_tensor(in.queries), iids, detail::to_tensor(in.items));
    std::vector<data::RelevanceAnnotation> ann;
    std::unordered_map<std::int64_t, int> icat, qcat;
    for (std::size_t q = 0; q < in.queries.size(); ++q) {
      ann.push_back({static_cast<std::int64_t>(q), {in.relevant[q].begin(), in.relevant[q].end()}});
      qcat[static_cast<std::int64_t>(q)] = in.query_cat[q];
    }
    for (std::size_t i = 0; i < in.n_items; ++i) icat[static_cast<std::int64_t>(i)] = in.item_cat[i];
    const std::size_t k = 1 + rng() % in.n_items;
    detail::track(d.hr, eval::hit_ratio(rankings, ann), oracle::hr(in));
    detail::track(d.lr, eval::lr_at_k(rankings, in.low, k), oracle::lr(in, k));
    detail::track(d.cr, eval::cr_at_k(rankings, icat, qcat, k), oracle::cr(in, k));

    // CTR events over a subset of items with tied scores and impressions.
    const std::size_t n_ev = 2 + rng() % 300;
    const double p_click = 0.02 + 0.5 * uniform01(rng);
    std::vector<oracle::Event> ev;
    std::vector<eval::ScoredEvent> lib;
    std::map<std::int64_t, std::int64_t> imp_map;
    std::unordered_map<std::int64_t, std::int64_t> imp;
    for (std::size_t i = 0; i < in.n_items; ++i) {
      const auto v = static_cast<std::int64_t>(rng() % 8);
      imp_map[static_cast<std::int64_t>(i)] = v;
      imp[static_cast<std::int64_t>(i)] = v;
    }
    for (std::size_t e = 0; e < n_ev; ++e) {
      const auto item = static_cast<std::int64_t>(rng() % in.n_items);
      const double sc = std::floor(uniform01(rng) * 20.0) / 20.0;
      const int label = uniform01(rng) < p_click ? 1 : 0;
      ev.push_back({item, sc, label});
      lib.push_back({item, sc, label});
    }
    const auto o_all = oracle::auc(ev);
    if (o_all) {
      detail::track(d.auc, eval::auc(eval::to_scored_labels(lib)), *o_all);
    } else {
      bool threw = false;
      try {
        eval::auc(eval::to_scored_labels(lib));
      } catch (const std::invalid_argument&) {
        threw = true;
      }
      if (!threw) ++d.undefined_mismatches;
    }
    for (bool bottom : {true, false}) {
      const auto o = oracle::auc_decile(ev, imp_map, bottom);
      const auto l = eval::auc_bucketed(lib, imp, bottom ? eval::Decile::kBottom : eval::Decile::kTop);
      if (o.has_value() != l.has_value()) {
        ++d.undefined_mismatches;
      } else if (o) {
        detail::track(bottom ? d.auc_bottom : d.auc_top, *l, *o);
      }
    }
    ++d.instances;
  }
  return d;
}

/// Random catalog and S1 table for index tests.
struct MiningFixture {
  std::vector<data::Item> items;
  io::EmbeddingTable s1;
};

inline MiningFixture mining_fixture(std::uint64_t seed, std::size_t n = 300, std::size_t dim = 6) {
  Rng rng = make_rng(seed, "mining-fixture");
  MiningFixture f;
  f.s1.rows = Tensor(Shape{n, dim});
  for (std::size_t i = 0; i < n; ++i) {
    data::Item it;
    it.item_id = static_cast<std::int64_t>(i);
    it.category_id = static_cast<int>(rng() % 3);
    it.impressions = rng() % 2 == 0 ? 0 : static_cast<std::int64_t>(rng() % 6);
    f.items.push_back(it);
    f.s1.ids.push_back(i);
    std::vector<double> v(dim);
    for (double& x : v) x = standard_normal(rng) + 0.8;  // mostly positive cosines
    v = oracle::unit(v);
    std::copy(v.begin(), v.end(), f.s1.rows.row(i).begin());
  }
  return f;
}

/// Brute-force top-K: same category, impressions below threshold, not the
/// anchor, sorted by cosine descending then id ascending.
inline std::vector<debias::Candidate> brute_top_k(const MiningFixture& f, std::int64_t anchor, std::size_t k,
                                                  std::int64_t threshold) {
  std::vector<debias::Candidate> all;
  const auto a = static_cast<std::size_t>(anchor);
  for (std::size_t j = 0; j < f.items.size(); ++j) {
    if (j == a || f.items[j].category_id != f.items[a].category_id || f.items[j].impressions >= threshold) continue;
    double s = 0.0;
    for (std::size_t c = 0; c < f.s1.rows.cols(); ++c) s += f.s1.rows.at(a, c) * f.s1.rows.at(j, c);
    all.push_back({static_cast<std::int64_t>(j), s});
  }
  std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) {
    return x.sim != y.sim ? x.sim > y.sim : x.item_id < y.item_id;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

struct MiningCheck {
  std::size_t anchors_checked = 0;
  std::size_t topk_mismatches = 0;
  std::size_t contract_violations = 0;  // wrong category, displayed, or the anchor itself
};

inline MiningCheck mining_correctness(std::uint64_t seed, std::size_t k = 15, std::int64_t threshold = 1) {
  const auto f = mining_fixture(seed);
  const auto index = debias::build_index(f.s1, f.items, threshold);
  MiningCheck out;
  Rng rng = make_rng(seed, "mining-draws");
  for (const auto& it : f.items) {
    const auto got = index.top_k(it.item_id, k);
    const auto want = brute_top_k(f, it.item_id, k, threshold);
    ++out.anchors_checked;
    bool same = got.size() == want.size();
    for (std::size_t i = 0; same && i < got.size(); ++i) {
      same = got[i].item_id == want[i].item_id && got[i].sim == want[i].sim;
    }
    if (!same) ++out.topk_mismatches;
    for (int draw = 0; draw < 5; ++draw) {
      const auto c = debias::mine_positive(it.item_id, index, k, rng);
      if (!c) continue;
      const auto& p = f.items[static_cast<std::size_t>(c->item_id)];
      if (p.category_id != it.category_id || p.impressions >= threshold || p.item_id == it.item_id) {
        ++out.contract_violations;
      }
    }
  }
  return out;
}

struct ChiSquare {
  double statistic = 0.0;
  double dof = 0.0;
  double p_value = 0.0;
};

/// Pearson test of mined-positive frequencies against the clamped-similarity
/// proportions for one anchor. Cells expecting fewer than 5 draws are pooled.
inline ChiSquare mining_chi_square(std::uint64_t seed, std::size_t draws = 10000, std::size_t k = 15) {
  const auto f = mining_fixture(seed);
  const auto index = debias::build_index(f.s1, f.items, 1);
  std::int64_t anchor = 0;
  while (index.top_k(anchor, k).size() < k) ++anchor;
  const auto cands = index.top_k(anchor, k);
  const auto probs = debias::selection_probabilities(cands);
  std::map<std::int64_t, std::size_t> slot;
  for (std::size_t i = 0; i < cands.size(); ++i) slot[cands[i].item_id] = i;
  std::vector<double> observed(cands.size(), 0.0);
  Rng rng = make_rng(seed, "chi-square-draws");
  for (std::size_t t = 0; t < draws; ++t) observed[slot.at(debias::mine_positive(anchor, index, k, rng)->item_id)] += 1.0;
  double stat = 0.0, pooled_o = 0.0, pooled_e = 0.0;
  std::size_t cells = 0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const double e = probs[i] * static_cast<double>(draws);
    if (e < 5.0) {
      pooled_o += observed[i];
      pooled_e += e;
      continue;
    }
    stat += (observed[i] - e) * (observed[i] - e) / e;
    ++cells;
  }
  if (pooled_e > 0.0) {
    stat += (pooled_o - pooled_e) * (pooled_o - pooled_e) / pooled_e;
    ++cells;
  }
  ChiSquare out{stat, static_cast<double>(cells - 1), 0.0};
  out.p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared(out.dof), stat));
  return out;
}

}  // namespace vdctr::testing
