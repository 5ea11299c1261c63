#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "vdctr/dataset/types.hpp"
#include "vdctr/errors.hpp"
#include "vdctr/numerics/tensor.hpp"
#include "vdctr/rng.hpp"

namespace vdctr::data {

struct GeneratorConfig {
  std::int64_t n_items = 5000;
  std::int64_t n_queries = 500;
  std::int64_t n_users = 200;
  int n_categories = 5;
  std::size_t d_latent = 16;
  std::size_t d_obs = 32;
  double obs_noise = 0.2;         // sigma_obs
  std::size_t d_nuisance = 8;     // style-irrelevant visual factors
  double nuisance_scale = 0.15;
  double style_spread = 0.9;      // within-category latent spread (total norm)
  double category_max_cosine = 0.3;
  double pareto_shape = 1.5;
  double popularity_style_coupling = 1.0;  // beta: popular styles cluster along a per-category trend
  int slots_per_query = 10;
  int sessions_per_query = 40;
  int n_days = 4;
  double exposure_gamma = 4.0;
  double relevance_gain = 12.0;   // a
  double click_bias = -9.0;       // b
  double position_decay = 0.9;
  double relevance_threshold = 0.85;
  bool identity_lift = false;     // requires d_obs == d_latent
  std::uint64_t seed = 7;

  void validate() const {
    if (n_items <= 0 || n_queries <= 0 || n_users <= 0 || n_categories <= 0 ||
        d_latent == 0 || d_obs == 0 || slots_per_query <= 0 ||
        sessions_per_query <= 0 || n_days <= 0) {
      throw ConfigError("generator: all counts must be positive");
    }
    if (d_obs < d_latent) {
      throw ConfigError("generator: d_obs (" + std::to_string(d_obs) +
                        ") must be at least d_latent (" + std::to_string(d_latent) + ")");
    }
    if (identity_lift && d_obs != d_latent) {
      throw ConfigError("generator: identity lift needs d_obs == d_latent");
    }
    if (!(relevance_threshold > 0.0 && relevance_threshold < 1.0)) {
      throw ConfigError("generator: relevance threshold must lie in (0,1)");
    }
    if (!(obs_noise >= 0.0) || !(style_spread >= 0.0) || !(pareto_shape > 0.0) ||
        !(position_decay > 0.0 && position_decay <= 1.0) || !(exposure_gamma >= 0.0) ||
        !(nuisance_scale >= 0.0)) {
      throw ConfigError("generator: invalid distribution parameter");
    }
  }
};

inline constexpr double kRelevanceFloor = 1e-6;

inline double round_to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

/// Fixed random linear map latent -> observation, [d_obs x d_latent].
inline Tensor observation_lift(const GeneratorConfig& cfg) {
  Tensor lift(Shape{cfg.d_obs, cfg.d_latent});
  if (cfg.identity_lift) {
    for (std::size_t i = 0; i < cfg.d_latent; ++i) lift.at(i, i) = 1.0;
    return lift;
  }
  Rng rng = make_rng(cfg.seed, "lift");
  const double s = 1.0 / std::sqrt(static_cast<double>(cfg.d_latent));
  for (std::size_t i = 0; i < lift.size(); ++i) lift[i] = s * standard_normal(rng);
  return lift;
}

/// Random map for the nuisance factors, [d_obs x d_nuisance]. Empty when the
/// generator has none.
inline Tensor nuisance_lift(const GeneratorConfig& cfg) {
  if (cfg.d_nuisance == 0) return Tensor(Shape{cfg.d_obs, 0});
  Tensor lift(Shape{cfg.d_obs, cfg.d_nuisance});
  Rng rng = make_rng(cfg.seed, "nuisance-lift");
  const double s = 1.0 / std::sqrt(static_cast<double>(cfg.d_nuisance));
  for (std::size_t i = 0; i < lift.size(); ++i) lift[i] = s * standard_normal(rng);
  return lift;
}

/// Unit category means with pairwise cosine below cfg.category_max_cosine.
inline std::vector<std::vector<double>> category_means(const GeneratorConfig& cfg) {
  Rng rng = make_rng(cfg.seed, "category-means");
  std::vector<std::vector<double>> means;
  int attempts = 0;
  while (static_cast<int>(means.size()) < cfg.n_categories) {
    if (++attempts > 100000) {
      throw ConfigError("generator: cannot place " + std::to_string(cfg.n_categories) +
                        " category means below the cosine bound");
    }
    std::vector<double> m(cfg.d_latent);
    for (double& v : m) v = standard_normal(rng);
    const double n = l2_norm(m);
    if (n <= kNormFloor) continue;
    for (double& v : m) v /= n;
    bool ok = true;
    for (const auto& other : means) ok = ok && dot(m, other) < cfg.category_max_cosine;
    if (ok) means.push_back(std::move(m));
  }
  return means;
}

/// One unit direction per category along which popularity rises when
/// popularity_style_coupling is positive.
inline std::vector<std::vector<double>> trend_directions(const GeneratorConfig& cfg) {
  Rng rng = make_rng(cfg.seed, "trend");
  std::vector<std::vector<double>> out;
  for (int c = 0; c < cfg.n_categories; ++c) {
    std::vector<double> u(cfg.d_latent);
    double n = 0.0;
    while (!(n > kNormFloor)) {
      for (double& v : u) v = standard_normal(rng);
      n = l2_norm(u);
    }
    for (double& v : u) v /= n;
    out.push_back(std::move(u));
  }
  return out;
}

namespace detail {

inline std::vector<double> sample_latent(const std::vector<double>& mean, double spread, Rng& rng) {
  const double s = spread / std::sqrt(static_cast<double>(mean.size()));
  std::vector<double> z(mean);
  for (double& v : z) v += s * standard_normal(rng);
  return z;
}

/// lift * latent + nuisance_lift * z + noise, z ~ N(0, scale^2 I) per image.
inline std::vector<double> observe(const Tensor& lift, const Tensor& nuisance, double nuisance_scale,
                                   const std::vector<double>& latent, double noise, Rng& rng) {
  const std::size_t d_obs = lift.rows();
  const std::size_t d_n = nuisance.cols();
  std::vector<double> z(d_n);
  for (double& v : z) v = nuisance_scale * standard_normal(rng);
  std::vector<double> img(d_obs);
  for (std::size_t i = 0; i < d_obs; ++i) {
    double v = dot(lift.row(i), latent);
    for (std::size_t j = 0; j < d_n; ++j) v += nuisance.at(i, j) * z[j];
    if (noise > 0.0) v += noise * standard_normal(rng);
    img[i] = round_to_float(v);
  }
  return img;
}

}  // namespace detail

/// Items with category-clustered latents, Pareto (Lomax) popularity and lifted
/// observations. Impressions and clicks start at zero.
inline std::vector<Item> generate_catalog(const GeneratorConfig& cfg) {
  cfg.validate();
  const Tensor lift = observation_lift(cfg);
  const Tensor nuisance = nuisance_lift(cfg);
  const auto means = category_means(cfg);
  const auto trends = trend_directions(cfg);
  Rng rng = make_rng(cfg.seed, "catalog");
  std::vector<Item> items(static_cast<std::size_t>(cfg.n_items));
  for (std::size_t i = 0; i < items.size(); ++i) {
    Item& it = items[i];
    it.item_id = static_cast<std::int64_t>(i);
    it.category_id = static_cast<int>(i % static_cast<std::size_t>(cfg.n_categories));
    it.latent_style = detail::sample_latent(means[it.category_id], cfg.style_spread, rng);
    const double u = uniform01(rng);
    it.popularity = std::pow(1.0 - u, -1.0 / cfg.pareto_shape) - 1.0 + 1e-3;
    if (cfg.popularity_style_coupling != 0.0 && cfg.style_spread > 0.0) {
      const auto& m = means[it.category_id];
      double z = 0.0;
      for (std::size_t j = 0; j < m.size(); ++j) z += (it.latent_style[j] - m[j]) * trends[it.category_id][j];
      z /= cfg.style_spread / std::sqrt(static_cast<double>(cfg.d_latent));
      it.popularity *= std::exp(cfg.popularity_style_coupling * z);
    }
    it.image = detail::observe(lift, nuisance, cfg.nuisance_scale, it.latent_style, cfg.obs_noise, rng);
  }
  return items;
}

inline std::vector<Query> generate_queries(const GeneratorConfig& cfg) {
  cfg.validate();
  const Tensor lift = observation_lift(cfg);
  const Tensor nuisance = nuisance_lift(cfg);
  const auto means = category_means(cfg);
  Rng rng = make_rng(cfg.seed, "queries");
  std::vector<Query> queries(static_cast<std::size_t>(cfg.n_queries));
  for (std::size_t q = 0; q < queries.size(); ++q) {
    Query& qu = queries[q];
    qu.query_id = static_cast<std::int64_t>(q);
    qu.category_id = static_cast<int>(q % static_cast<std::size_t>(cfg.n_categories));
    qu.latent_style = detail::sample_latent(means[qu.category_id], cfg.style_spread, rng);
    qu.image = detail::observe(lift, nuisance, cfg.nuisance_scale, qu.latent_style, cfg.obs_noise, rng);
  }
  return queries;
}

inline double click_probability(const GeneratorConfig& cfg, double relevance, int position) {
  const double z = cfg.relevance_gain * relevance + cfg.click_bias;
  const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return s * std::pow(cfg.position_decay, position);
}

/// Simulates exposure-biased traffic. Each query is issued sessions_per_query
/// times; each session shows slots_per_query distinct items drawn without
/// replacement with weight popularity * max(cos, floor)^gamma, placed in draw
/// order. Item impression/click counters are updated in place.
inline std::vector<ClickEvent> simulate_traffic(std::vector<Item>& items,
                                                const std::vector<Query>& queries,
                                                const GeneratorConfig& cfg) {
  cfg.validate();
  if (items.empty()) throw std::invalid_argument("simulate_traffic: empty catalog");
  const std::size_t n = items.size();
  const std::size_t slots = std::min<std::size_t>(static_cast<std::size_t>(cfg.slots_per_query), n);
  std::vector<ClickEvent> events;
  events.reserve(queries.size() * cfg.sessions_per_query * slots);
  std::vector<double> rel(n), weight(n);
  std::vector<std::pair<double, std::size_t>> keys(n);
  for (const Query& q : queries) {
    for (std::size_t p = 0; p < n; ++p) {
      rel[p] = cosine(q.latent_style, items[p].latent_style);
      weight[p] = items[p].popularity *
                  std::pow(std::max(rel[p], kRelevanceFloor), cfg.exposure_gamma);
    }
    Rng rng = make_rng(cfg.seed, "traffic", static_cast<std::uint64_t>(q.query_id));
    std::uniform_int_distribution<std::int64_t> user_dist(0, cfg.n_users - 1);
    std::uniform_int_distribution<int> day_dist(0, cfg.n_days - 1);
    for (int s = 0; s < cfg.sessions_per_query; ++s) {
      const std::int64_t user = user_dist(rng);
      const int day = day_dist(rng);
      // Efraimidis-Spirakis: smallest -log(u)/w are a weighted draw without
      // replacement, in draw order.
      for (std::size_t p = 0; p < n; ++p) {
        double u = uniform01(rng);
        if (u <= 0.0) u = std::numeric_limits<double>::min();
        keys[p] = {weight[p] > 0.0 ? -std::log(u) / weight[p]
                                   : std::numeric_limits<double>::infinity(),
                   p};
      }
      std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(slots), keys.end());
      for (std::size_t pos = 0; pos < slots; ++pos) {
        const std::size_t p = keys[pos].second;
        const double pc = click_probability(cfg, rel[p], static_cast<int>(pos));
        const int clicked = uniform01(rng) < pc ? 1 : 0;
        events.push_back(ClickEvent{q.query_id, user, items[p].item_id,
                                    static_cast<int>(pos), clicked,
                                    static_cast<std::int64_t>(pos), day});
        items[p].impressions += 1;
        items[p].clicks += clicked;
      }
    }
  }
  return events;
}

/// Relevant iff cos(latent_q, latent_p) >= threshold. Queries with no relevant
/// item are left out of the result and listed in `dropped`.
inline std::vector<RelevanceAnnotation> annotate_relevance(
    const std::vector<Query>& queries, const std::vector<Item>& items, double threshold,
    std::vector<std::int64_t>* dropped = nullptr) {
  std::vector<RelevanceAnnotation> out;
  for (const Query& q : queries) {
    RelevanceAnnotation a{q.query_id, {}};
    for (const Item& it : items) {
      if (cosine(q.latent_style, it.latent_style) >= threshold) {
        a.relevant_item_ids.push_back(it.item_id);
      }
    }
    std::sort(a.relevant_item_ids.begin(), a.relevant_item_ids.end());
    if (a.relevant_item_ids.empty()) {
      if (dropped) dropped->push_back(q.query_id);
    } else {
      out.push_back(std::move(a));
    }
  }
  return out;
}

/// Item ids with impressions strictly below `threshold`.
inline std::set<std::int64_t> low_impression_set(const std::vector<Item>& items,
                                                 std::int64_t threshold) {
  std::set<std::int64_t> out;
  for (const Item& it : items) {
    if (it.impressions < threshold) out.insert(it.item_id);
  }
  return out;
}

inline Dataset generate_dataset(const GeneratorConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.items = generate_catalog(cfg);
  ds.queries = generate_queries(cfg);
  ds.traffic = simulate_traffic(ds.items, ds.queries, cfg);
  ds.relevance = annotate_relevance(ds.queries, ds.items, cfg.relevance_threshold,
                                    &ds.dropped_queries);
  ds.n_days = cfg.n_days;
  ds.n_users = cfg.n_users;
  ds.n_contexts = cfg.slots_per_query;
  ds.n_categories = cfg.n_categories;
  return ds;
}

/// Events from every day but the last (training) or from the last day only.
inline std::vector<ClickEvent> split_traffic(const std::vector<ClickEvent>& events,
                                             int n_days, bool test) {
  std::vector<ClickEvent> out;
  for (const ClickEvent& e : events) {
    if ((e.day == n_days - 1) == test) out.push_back(e);
  }
  return out;
}

}  // namespace vdctr::data
