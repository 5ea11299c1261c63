#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vdctr/pipeline/manifest.hpp"
#include "vdctr/pipeline/stages.hpp"

namespace vdctr::pipeline {

struct AblationResult {
  std::vector<MetricReport> rows;
  GeometryReport geometry;
  std::map<std::string, std::pair<std::string, std::string>> encoder_hashes;  // mode -> (before, after)
};

using ProgressFn = std::function<void(const std::string&)>;

/// Runs the full matrix (classifier, S1, S2, S1+S2, S1+S2+D) under `out_dir`
/// and writes every artifact plus report.json, table.csv and manifest.json.
/// A failing step is rethrown with the mode it belongs to.
inline AblationResult run_ablation(const PipelineConfig& cfg, const fs::path& out_dir,
                                   const ProgressFn& progress = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Layout out{out_dir};
  RunManifest manifest;
  manifest.command = "ablation";
  manifest.seed = cfg.seed;
  for (Mode m : kModes) manifest.modes.push_back(mode_name(m));
  std::vector<fs::path> written;
  auto keep = [&](const std::vector<fs::path>& ps) { written.insert(written.end(), ps.begin(), ps.end()); };
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };
  auto guarded = [](Mode m, auto&& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      // Keep the error's category for exit-code mapping; only prefix the mode.
      const std::string msg = "mode " + mode_name(m) + ": " + e.what();
      if (dynamic_cast<const ConfigError*>(&e)) throw ConfigError(msg);
      if (dynamic_cast<const MissingArtifactError*>(&e)) throw MissingArtifactError(msg);
      if (dynamic_cast<const ProvenanceError*>(&e)) throw ProvenanceError(msg);
      if (dynamic_cast<const NumericalError*>(&e)) throw NumericalError(msg);
      if (dynamic_cast<const DegenerateVectorError*>(&e)) throw DegenerateVectorError(msg);
      throw std::runtime_error(msg);
    }
  };

  fs::create_directories(out.root);
  io::write_file(out.resolved_config(), to_text(cfg));
  keep({out.resolved_config()});
  say("generating data");
  const RunData rd = generate_data(cfg);
  keep(write_data(out, rd.ds));

  std::map<Mode, encoder::EncoderModel> encoders;
  std::map<Mode, Embeddings> embeddings;
  for (Mode m : {Mode::kClassifier, Mode::kS1, Mode::kS2, Mode::kS1S2}) {
    say("training encoder " + mode_name(m));
    guarded(m, [&] {
      const encoder::EncoderModel* parent = m == Mode::kS1S2 ? &encoders.at(Mode::kS1) : nullptr;
      EncoderRun run = train_encoder(cfg, rd, m, parent);
      keep(write_encoder(out, m, run));
      embeddings.emplace(m, encode_all(run.model, rd.ds));
      keep(write_embeddings(out, m, embeddings.at(m)));
      manifest.provenance.push_back({out.relative(out.encoder(m)), run.model.provenance().stage,
                                     run.model.hash(), run.model.provenance().parent_hash});
      encoders.emplace(m, std::move(run.model));
      return 0;
    });
  }

  for (Mode m : kModes) {
    guarded(m, [&] {
      const auto& e = embeddings.at(encoder_mode(m));
      MetricReport r = search_metrics(e.items, e.queries, rd.ds, cfg.eval);
      r.mode = mode_name(m);
      keep(write_partial_report(out, cfg, r, true));
      return 0;
    });
  }

  const auto index = debias_index(cfg, embeddings.at(Mode::kS1).items, rd.ds);
  AblationResult result;
  for (Mode m : kModes) {
    say("training CTR " + mode_name(m));
    guarded(m, [&] {
      CtrRun run = run_ctr(cfg, rd, m, encoders.at(encoder_mode(m)), &index);
      keep(write_ctr(out, m, run));
      MetricReport r = ctr_metrics(scored_events(run), rd.ds.items);
      r.mode = mode_name(m);
      keep(write_partial_report(out, cfg, r, false));
      manifest.provenance.push_back({out.relative(out.ctr_model(m)), "CTR", run.model.hash(),
                                     run.encoder_hash_before});
      result.encoder_hashes[mode_name(m)] = {run.encoder_hash_before, run.encoder_hash_after};
      if (run.geometry) result.geometry = *run.geometry;
      return 0;
    });
  }

  keep(assemble_report(out, cfg, &result.rows));
  for (const auto& p : written) manifest.add_output(out, p);
  manifest.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(out, "manifest", manifest);
  return result;
}

}  // namespace vdctr::pipeline
