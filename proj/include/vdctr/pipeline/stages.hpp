#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vdctr/ctr/training.hpp"
#include "vdctr/debias/index.hpp"
#include "vdctr/encoder/training.hpp"
#include "vdctr/io/embeddings.hpp"
#include "vdctr/pipeline/artifacts.hpp"
#include "vdctr/pipeline/report.hpp"

// The pipeline steps shared by the ablation driver and the single-step
// commands. Each step has an in-memory form and a writer.

namespace vdctr::pipeline {

struct EncoderRun {
  encoder::EncoderModel model;
  std::string stage;
  std::vector<double> loss_curve;
};

inline encoder::StageData stage_data(const RunData& rd, const PipelineConfig& cfg) {
  return encoder::StageData{&rd.ds.items, &rd.ds.queries, &rd.train, cfg.augmentation, rd.ds.n_categories};
}

/// Trains the encoder of `mode`. S1+S2 continues from `s1`, which must carry S1
/// provenance; every other mode starts from a fresh initialization.
inline EncoderRun train_encoder(const PipelineConfig& cfg, const RunData& rd, Mode mode,
                                const encoder::EncoderModel* s1 = nullptr) {
  const auto data = stage_data(rd, cfg);
  auto fresh = [&] { return encoder::EncoderModel(cfg.generator.d_obs, cfg.encoder, cfg.seed); };
  switch (encoder_mode(mode)) {
    case Mode::kClassifier: {
      EncoderRun r{fresh(), "classifier", {}};
      r.loss_curve = encoder::train_stage(r.model, encoder::Stage::kClassifier, data, cfg.classifier).loss_curve;
      return r;
    }
    case Mode::kS1: {
      EncoderRun r{fresh(), "S1", {}};
      r.loss_curve = encoder::train_stage(r.model, encoder::Stage::kS1, data, cfg.s1).loss_curve;
      return r;
    }
    case Mode::kS2: {
      EncoderRun r{fresh(), "S2", {}};
      r.loss_curve = encoder::train_stage(r.model, encoder::Stage::kS2, data, cfg.s2).loss_curve;
      return r;
    }
    default: {
      if (!s1) throw MissingArtifactError("S1+S2 needs the S1 encoder checkpoint");
      EncoderRun r{*s1, "S2", {}};
      r.loss_curve = encoder::train_stage(r.model, encoder::Stage::kS2, data, cfg.s2, true).loss_curve;
      return r;
    }
  }
}

inline std::vector<fs::path> write_encoder(const Layout& out, Mode mode, const EncoderRun& run) {
  run.model.save(out.encoder(mode));
  std::vector<nlohmann::json> rows;
  for (std::size_t i = 0; i < run.loss_curve.size(); ++i) {
    rows.push_back({{"step", i}, {"loss", run.loss_curve[i]}, {"components", {{run.stage, run.loss_curve[i]}}}});
  }
  data::detail::write_jsonl(out.encoder_loss(mode), rows);
  return {out.encoder(mode), out.encoder_loss(mode)};
}

struct Embeddings {
  io::EmbeddingTable items;
  io::EmbeddingTable queries;
};

inline Embeddings encode_all(const encoder::EncoderModel& model, const data::Dataset& ds) {
  return {encoder::encode_catalog(model, ds.items), encoder::encode_queries(model, ds.queries)};
}

inline std::vector<fs::path> write_embeddings(const Layout& out, Mode mode, const Embeddings& e) {
  io::save_embeddings(out.item_embeddings(mode), e.items);
  io::save_embeddings(out.query_embeddings(mode), e.queries);
  return {out.item_embeddings(mode), out.query_embeddings(mode)};
}

inline debias::SimilarityIndex debias_index(const PipelineConfig& cfg, const io::EmbeddingTable& s1_items,
                                            const data::Dataset& ds) {
  return debias::build_index(s1_items, ds.items, cfg.ctr.non_displayed_threshold);
}

/// Popular items (top impression decile, ties by ascending id) paired with
/// their closest non-displayed look-alike under S1, and the mean 1 - cos of
/// those pairs in v^S2 space and in the fused space of `model`.
inline GeometryReport debias_geometry(ctr::CtrModel& model, const debias::SimilarityIndex& index,
                                      const std::vector<data::Item>& items) {
  std::vector<const data::Item*> order;
  for (const auto& it : items) order.push_back(&it);
  std::sort(order.begin(), order.end(), [](const data::Item* a, const data::Item* b) {
    return a->impressions != b->impressions ? a->impressions > b->impressions : a->item_id < b->item_id;
  });
  order.resize((order.size() + 9) / 10);
  std::vector<std::int64_t> ids;
  for (const data::Item* a : order) {
    const auto c = index.top_k(a->item_id, 1);
    if (c.empty()) continue;
    ids.push_back(a->item_id);
    ids.push_back(c.front().item_id);
  }
  GeometryReport g;
  g.pairs = ids.size() / 2;
  if (g.pairs == 0) return g;
  Tensor v(Shape{ids.size(), model.dim()});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto row = model.item_visual(ids[r], nullptr);
    std::copy(row.begin(), row.end(), v.row(r).begin());
  }
  Tape tape;
  const Tensor fused = model.item_feature(tape, tape.constant(v)).value();
  auto gap = [](std::span<const double> a, std::span<const double> b) {
    return 1.0 - dot(a, b) / (l2_norm(a) * l2_norm(b));
  };
  for (std::size_t p = 0; p < g.pairs; ++p) {
    g.gap_s2 += gap(v.row(2 * p), v.row(2 * p + 1));
    g.gap_fused += gap(fused.row(2 * p), fused.row(2 * p + 1));
  }
  g.gap_s2 /= static_cast<double>(g.pairs);
  g.gap_fused /= static_cast<double>(g.pairs);
  return g;
}

struct CtrRun {
  ctr::CtrModel model;
  ctr::CtrTrainResult result;
  std::vector<ctr::TrainSample> test;
  std::vector<double> scores;
  std::string encoder_hash_before;
  std::string encoder_hash_after;
  std::optional<GeometryReport> geometry;
};

/// Trains the CTR model of `mode` on the training days and scores the held-out
/// day. The debias row needs the S1 similarity index.
inline CtrRun run_ctr(const PipelineConfig& cfg, const RunData& rd, Mode mode, const encoder::EncoderModel& enc,
                      const debias::SimilarityIndex* index) {
  ctr::CtrConfig cc = cfg.ctr;
  cc.use_debias = mode == Mode::kS1S2D;
  if (cc.use_debias && !index) throw MissingArtifactError("S1+S2+D needs the S1 similarity index");
  const auto train = ctr::make_samples(rd.train, rd.ds.items, rd.ds.queries);
  CtrRun run{ctr::CtrModel(enc, rd.ds.items, rd.ds.queries, train, cc), {},
             ctr::make_samples(rd.test, rd.ds.items, rd.ds.queries), {}, enc.hash(), "", std::nullopt};
  run.result = ctr::train_ctr(run.model, train, {}, cc.use_debias ? index : nullptr);
  run.encoder_hash_after = run.model.encoder().hash();
  run.scores = run.model.predict_all(run.test);
  for (double y : run.scores) {
    if (!std::isfinite(y)) throw NumericalError("non-finite CTR score in mode " + mode_name(mode));
  }
  if (cc.use_debias) run.geometry = debias_geometry(run.model, *index, rd.ds.items);
  return run;
}

inline std::vector<eval::ScoredEvent> scored_events(const CtrRun& run) {
  std::vector<eval::ScoredEvent> out;
  for (std::size_t i = 0; i < run.test.size(); ++i) {
    out.push_back({run.test[i].item_id, run.scores[i], static_cast<int>(run.test[i].label)});
  }
  return out;
}

inline fs::path ctr_train_summary(const Layout& l, Mode m) { return l.ctr_dir(m) / "train.json"; }

inline std::vector<fs::path> write_ctr(const Layout& out, Mode mode, const CtrRun& run) {
  using nlohmann::json;
  run.model.save(out.ctr_model(mode));
  std::vector<json> rows;
  for (std::size_t i = 0; i < run.test.size(); ++i) {
    const auto& s = run.test[i];
    rows.push_back({{"query_id", s.query_id}, {"item_id", s.item_id}, {"y", s.label}, {"y_hat", run.scores[i]}});
  }
  data::detail::write_jsonl(out.scores(mode), rows);
  rows.clear();
  for (const auto& s : run.result.steps) {
    json comp = {{"l_pred", s.l_pred}};
    if (run.model.has_debias()) comp["l_d"] = s.l_d;
    rows.push_back({{"step", s.step}, {"epoch", s.epoch}, {"loss", s.loss}, {"components", comp}});
  }
  data::detail::write_jsonl(out.ctr_loss(mode), rows);
  rows.clear();
  for (const auto& e : run.result.epochs) {
    rows.push_back({{"epoch", e.epoch},
                    {"mean_loss", e.mean_loss},
                    {"train_auc", e.train_auc},
                    {"val_auc", e.val_auc ? json(*e.val_auc) : json(nullptr)},
                    {"skip_rate", e.skip_rate}});
  }
  data::detail::write_jsonl(out.ctr_epochs(mode), rows);
  std::vector<fs::path> written{out.ctr_model(mode), out.scores(mode), out.ctr_loss(mode), out.ctr_epochs(mode)};
  if (run.model.has_debias()) {
    rows.clear();
    for (const auto& p : run.result.mined) {
      rows.push_back({{"epoch", p.epoch}, {"anchor", p.anchor_id}, {"positive", p.positive_id}, {"sim", p.sim}});
    }
    data::detail::write_jsonl(out.mined_pairs(mode), rows);
    written.push_back(out.mined_pairs(mode));
  }
  ojson summary{{"mode", mode_name(mode)},
                {"encoder_hash_before", run.encoder_hash_before},
                {"encoder_hash_after", run.encoder_hash_after},
                {"ctr_hash", run.model.hash()},
                {"geometry", run.geometry ? to_json(*run.geometry) : ojson(nullptr)}};
  io::write_file(ctr_train_summary(out, mode), summary.dump(2) + "\n");
  written.push_back(ctr_train_summary(out, mode));
  return written;
}

inline std::vector<eval::ScoredEvent> read_scores(const fs::path& path) {
  require_artifact(path, "CTR scores");
  std::vector<eval::ScoredEvent> out;
  for (const auto& r : data::detail::read_jsonl(path)) {
    out.push_back({r.at("item_id").get<std::int64_t>(), r.at("y_hat").get<double>(), r.at("y").get<int>()});
  }
  return out;
}

/// Writes reports/<mode>/<kind>.json (config echo plus the report) and the
/// matching single-row CSV.
inline std::vector<fs::path> write_partial_report(const Layout& out, const PipelineConfig& cfg,
                                                  const MetricReport& r, bool search) {
  const Mode m = parse_mode(r.mode);
  const fs::path json_path = search ? out.search_report(m) : out.ctr_report(m);
  const fs::path csv_path = search ? out.search_row(m) : out.ctr_row(m);
  io::write_file(json_path, ojson{{"config", config_echo(cfg)}, {"report", to_json(r)}}.dump(2) + "\n");
  io::write_file(csv_path, csv_table({r}));
  return {json_path, csv_path};
}

/// Merges every per-mode report present under `out` into report.json and
/// table.csv, rows in mode order.
inline std::vector<fs::path> assemble_report(const Layout& out, const PipelineConfig& cfg,
                                             std::vector<MetricReport>* rows_out = nullptr) {
  std::vector<MetricReport> rows;
  ojson modes = ojson::array(), frozen = ojson::object(), geometry = nullptr;
  for (Mode m : kModes) {
    const bool has_search = fs::exists(out.search_report(m));
    const bool has_ctr = fs::exists(out.ctr_report(m));
    if (!has_search && !has_ctr) continue;
    MetricReport r;
    r.mode = mode_name(m);
    if (has_search) r.merge(report_from_json(ojson::parse(io::read_file(out.search_report(m))).at("report")));
    if (has_ctr) r.merge(report_from_json(ojson::parse(io::read_file(out.ctr_report(m))).at("report")));
    if (fs::exists(ctr_train_summary(out, m))) {
      const auto s = ojson::parse(io::read_file(ctr_train_summary(out, m)));
      frozen[r.mode] = {{"before", s.at("encoder_hash_before")}, {"after", s.at("encoder_hash_after")}};
      if (!s.at("geometry").is_null()) geometry = s.at("geometry");
    }
    modes.push_back(to_json(r));
    rows.push_back(r);
  }
  if (rows.empty()) throw MissingArtifactError("no per-mode reports under " + out.root.string());
  ojson report{{"config", config_echo(cfg)},
               {"csv_header", kCsvHeader},
               {"modes", modes},
               {"frozen_encoder", frozen},
               {"debias_geometry", geometry}};
  io::write_file(out.report(), report.dump(2) + "\n");
  io::write_file(out.table(), csv_table(rows));
  if (rows_out) *rows_out = rows;
  return {out.report(), out.table()};
}

}  // namespace vdctr::pipeline
