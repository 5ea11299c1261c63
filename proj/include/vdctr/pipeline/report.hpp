#pragma once

#include <charconv>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "vdctr/dataset/generator.hpp"
#include "vdctr/eval/metrics.hpp"
#include "vdctr/io/embeddings.hpp"
#include "vdctr/pipeline/config.hpp"

namespace vdctr::pipeline {

using ojson = nlohmann::ordered_json;

/// One row of the ablation table. Metrics that were not measured, and bucket
/// AUCs whose bucket holds a single class, stay empty.
struct MetricReport {
  std::string mode;
  std::optional<double> hr;
  std::map<std::size_t, double> lr_at;
  std::map<std::size_t, double> cr_at;
  std::optional<double> auc_overall;
  std::optional<double> auc_bottom_decile;
  std::optional<double> auc_top_decile;

  /// Fills the fields `other` measured and this report did not.
  void merge(const MetricReport& other) {
    if (other.hr) hr = other.hr;
    for (const auto& [k, v] : other.lr_at) lr_at[k] = v;
    for (const auto& [k, v] : other.cr_at) cr_at[k] = v;
    if (other.auc_overall) auc_overall = other.auc_overall;
    if (other.auc_bottom_decile) auc_bottom_decile = other.auc_bottom_decile;
    if (other.auc_top_decile) auc_top_decile = other.auc_top_decile;
  }
};

inline ojson config_echo(const PipelineConfig& cfg) {
  return ojson{{"seed", cfg.seed},
               {"k_list", cfg.eval.k_list},
               {"low_impression_threshold", cfg.eval.low_impression_threshold},
               {"low_impression_window", "whole simulation"},
               {"decile_basis", "item count, ties by ascending item_id"},
               {"relevance_threshold", cfg.generator.relevance_threshold}};
}

namespace detail {

inline ojson opt(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

inline std::optional<double> read_opt(const ojson& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

inline std::string csv_number(const std::optional<double>& v) {
  if (!v) return "";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, *v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline ojson to_json(const MetricReport& r) {
  ojson lr = ojson::object(), cr = ojson::object();
  for (const auto& [k, v] : r.lr_at) lr[std::to_string(k)] = v;
  for (const auto& [k, v] : r.cr_at) cr[std::to_string(k)] = v;
  return ojson{{"mode", r.mode},
               {"hr", detail::opt(r.hr)},
               {"lr_at", lr},
               {"cr_at", cr},
               {"auc_overall", detail::opt(r.auc_overall)},
               {"auc_bottom_decile", detail::opt(r.auc_bottom_decile)},
               {"auc_top_decile", detail::opt(r.auc_top_decile)}};
}

inline MetricReport report_from_json(const ojson& j) {
  MetricReport r;
  r.mode = j.at("mode").get<std::string>();
  r.hr = detail::read_opt(j, "hr");
  for (const auto& [k, v] : j.at("lr_at").items()) r.lr_at[std::stoul(k)] = v.get<double>();
  for (const auto& [k, v] : j.at("cr_at").items()) r.cr_at[std::stoul(k)] = v.get<double>();
  r.auc_overall = detail::read_opt(j, "auc_overall");
  r.auc_bottom_decile = detail::read_opt(j, "auc_bottom_decile");
  r.auc_top_decile = detail::read_opt(j, "auc_top_decile");
  return r;
}

inline constexpr const char* kCsvHeader =
    "mode,HR,LR@10,LR@100,CR@10,CR@100,AUC_overall,AUC_bottom10,AUC_top10";

/// One CSV row in kCsvHeader order; K values outside {10, 100} only reach the
/// JSON report.
inline std::string csv_row(const MetricReport& r) {
  auto at = [](const std::map<std::size_t, double>& m, std::size_t k) -> std::optional<double> {
    auto it = m.find(k);
    return it == m.end() ? std::nullopt : std::optional<double>(it->second);
  };
  using detail::csv_number;
  return r.mode + "," + csv_number(r.hr) + "," + csv_number(at(r.lr_at, 10)) + "," +
         csv_number(at(r.lr_at, 100)) + "," + csv_number(at(r.cr_at, 10)) + "," +
         csv_number(at(r.cr_at, 100)) + "," + csv_number(r.auc_overall) + "," +
         csv_number(r.auc_bottom_decile) + "," + csv_number(r.auc_top_decile);
}

inline std::string csv_table(const std::vector<MetricReport>& rows) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : rows) out += csv_row(r) + "\n";
  return out;
}

/// HR, LR@K and CR@K of one embedding space. Only annotated queries are ranked.
inline MetricReport search_metrics(const io::EmbeddingTable& items, const io::EmbeddingTable& queries,
                                   const data::Dataset& ds, const EvalConfig& ecfg) {
  std::unordered_map<std::uint64_t, std::size_t> qrow;
  for (std::size_t r = 0; r < queries.ids.size(); ++r) qrow[queries.ids[r]] = r;
  std::vector<std::int64_t> qids;
  Tensor qemb(Shape{ds.relevance.size(), queries.rows.cols()});
  for (std::size_t i = 0; i < ds.relevance.size(); ++i) {
    const auto id = ds.relevance[i].query_id;
    auto it = qrow.find(static_cast<std::uint64_t>(id));
    if (it == qrow.end()) throw MissingArtifactError("no embedding for query " + std::to_string(id));
    qids.push_back(id);
    auto src = queries.rows.row(it->second);
    std::copy(src.begin(), src.end(), qemb.row(i).begin());
  }
  std::vector<std::int64_t> iids(items.ids.begin(), items.ids.end());
  const auto rankings = eval::rank_all(qids, qemb, iids, items.rows);

  std::unordered_map<std::int64_t, int> item_cat, query_cat;
  for (const auto& it : ds.items) item_cat[it.item_id] = it.category_id;
  for (const auto& q : ds.queries) query_cat[q.query_id] = q.category_id;
  const auto low = data::low_impression_set(ds.items, ecfg.low_impression_threshold);

  MetricReport r;
  r.hr = eval::hit_ratio(rankings, ds.relevance);
  for (std::size_t k : ecfg.k_list) {
    r.lr_at[k] = eval::lr_at_k(rankings, low, k);
    r.cr_at[k] = eval::cr_at_k(rankings, item_cat, query_cat, k);
  }
  return r;
}

/// Overall and impression-decile AUC of scored test events.
inline MetricReport ctr_metrics(const std::vector<eval::ScoredEvent>& events, const std::vector<data::Item>& items) {
  std::unordered_map<std::int64_t, std::int64_t> impressions;
  for (const auto& it : items) impressions[it.item_id] = it.impressions;
  MetricReport r;
  r.auc_overall = eval::auc(eval::to_scored_labels(events));
  r.auc_bottom_decile = eval::auc_bucketed(events, impressions, eval::Decile::kBottom);
  r.auc_top_decile = eval::auc_bucketed(events, impressions, eval::Decile::kTop);
  return r;
}

/// Mean cosine gap between popular items and their closest non-displayed
/// look-alikes, measured in the S2 space and in the fused space.
struct GeometryReport {
  std::size_t pairs = 0;
  double gap_s2 = 0.0;
  double gap_fused = 0.0;
};

inline ojson to_json(const GeometryReport& g) {
  return ojson{{"pairs", g.pairs}, {"gap_s2", g.gap_s2}, {"gap_fused", g.gap_fused}};
}

}  // namespace vdctr::pipeline
