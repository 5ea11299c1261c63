#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "vdctr/dataset/generator.hpp"
#include "vdctr/dataset/io.hpp"
#include "vdctr/errors.hpp"
#include "vdctr/pipeline/config.hpp"

namespace vdctr::pipeline {

namespace fs = std::filesystem;

enum class Mode { kClassifier, kS1, kS2, kS1S2, kS1S2D };

inline constexpr std::array<Mode, 5> kModes{Mode::kClassifier, Mode::kS1, Mode::kS2, Mode::kS1S2,
                                            Mode::kS1S2D};

inline std::string mode_name(Mode m) {
  switch (m) {
    case Mode::kClassifier: return "classifier";
    case Mode::kS1: return "S1";
    case Mode::kS2: return "S2";
    case Mode::kS1S2: return "S1+S2";
    case Mode::kS1S2D: return "S1+S2+D";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  for (Mode m : kModes) {
    if (mode_name(m) == s) return m;
  }
  throw ConfigError("unknown mode '" + s + "' (classifier, S1, S2, S1+S2, S1+S2+D)");
}

/// The encoder a mode reads. The debias row reuses the S1+S2 encoder.
inline Mode encoder_mode(Mode m) { return m == Mode::kS1S2D ? Mode::kS1S2 : m; }

/// Where every artifact of a run lives, relative to the output root.
struct Layout {
  fs::path root;

  fs::path data_dir() const { return root / "data"; }
  fs::path catalog() const { return data_dir() / "catalog.jsonl"; }
  fs::path queries() const { return data_dir() / "queries.jsonl"; }
  fs::path traffic() const { return data_dir() / "traffic.jsonl"; }
  fs::path relevance() const { return data_dir() / "relevance.jsonl"; }
  fs::path truth() const { return data_dir() / "truth.jsonl"; }

  fs::path encoder(Mode m) const { return root / "encoders" / (mode_name(encoder_mode(m)) + ".ctrl"); }
  fs::path encoder_loss(Mode m) const {
    return root / "encoders" / (mode_name(encoder_mode(m)) + ".loss.jsonl");
  }
  fs::path item_embeddings(Mode m) const {
    return root / "embeddings" / (mode_name(encoder_mode(m)) + ".items.vemb");
  }
  fs::path query_embeddings(Mode m) const {
    return root / "embeddings" / (mode_name(encoder_mode(m)) + ".queries.vemb");
  }

  fs::path ctr_dir(Mode m) const { return root / "ctr" / mode_name(m); }
  fs::path ctr_model(Mode m) const { return ctr_dir(m) / "model.ctrl"; }
  fs::path scores(Mode m) const { return ctr_dir(m) / "scores.jsonl"; }
  fs::path ctr_loss(Mode m) const { return ctr_dir(m) / "loss.jsonl"; }
  fs::path ctr_epochs(Mode m) const { return ctr_dir(m) / "epochs.jsonl"; }
  fs::path mined_pairs(Mode m) const { return ctr_dir(m) / "pairs.jsonl"; }

  fs::path report_dir(Mode m) const { return root / "reports" / mode_name(m); }
  fs::path search_report(Mode m) const { return report_dir(m) / "search.json"; }
  fs::path search_row(Mode m) const { return report_dir(m) / "search.csv"; }
  fs::path ctr_report(Mode m) const { return report_dir(m) / "ctr.json"; }
  fs::path ctr_row(Mode m) const { return report_dir(m) / "ctr.csv"; }

  fs::path table() const { return root / "table.csv"; }
  fs::path report() const { return root / "report.json"; }
  fs::path resolved_config() const { return root / "config.toml"; }
  fs::path manifest(const std::string& name) const { return root / (name + ".json"); }

  std::string relative(const fs::path& p) const { return fs::relative(p, root).generic_string(); }
};

inline void require_artifact(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw MissingArtifactError(what + " not found: " + p.string());
}

/// Generated data plus the train/test split (last day held out).
struct RunData {
  data::Dataset ds;
  std::vector<data::ClickEvent> train;
  std::vector<data::ClickEvent> test;
};

inline RunData split(data::Dataset ds) {
  RunData d;
  d.train = data::split_traffic(ds.traffic, ds.n_days, false);
  d.test = data::split_traffic(ds.traffic, ds.n_days, true);
  if (d.train.empty() || d.test.empty()) throw ConfigError("generator: need at least two days of traffic");
  d.ds = std::move(ds);
  return d;
}

inline RunData generate_data(const PipelineConfig& cfg) { return split(data::generate_dataset(cfg.generator)); }

inline std::vector<fs::path> write_data(const Layout& out, const data::Dataset& ds) {
  fs::create_directories(out.data_dir());
  data::write_catalog(out.catalog(), ds.items);
  data::write_queries(out.queries(), ds.queries);
  data::write_traffic(out.traffic(), ds.traffic);
  data::write_relevance(out.relevance(), ds.relevance);
  data::write_truth(out.truth(), ds.items, ds.queries);
  return {out.catalog(), out.queries(), out.traffic(), out.relevance(), out.truth()};
}

/// Reads the data files back. Scalar facts not stored in the files come from
/// the generator section of the config.
inline RunData load_data(const Layout& in, const PipelineConfig& cfg) {
  for (const auto& p : {in.catalog(), in.queries(), in.traffic(), in.relevance()}) {
    require_artifact(p, "data file");
  }
  data::Dataset ds;
  ds.items = data::read_catalog(in.catalog());
  ds.queries = data::read_queries(in.queries());
  ds.traffic = data::read_traffic(in.traffic());
  ds.relevance = data::read_relevance(in.relevance());
  if (fs::exists(in.truth())) data::read_truth(in.truth(), ds.items, ds.queries);
  ds.n_days = cfg.generator.n_days;
  ds.n_users = cfg.generator.n_users;
  ds.n_contexts = cfg.generator.slots_per_query;
  ds.n_categories = cfg.generator.n_categories;
  return split(std::move(ds));
}

}  // namespace vdctr::pipeline
