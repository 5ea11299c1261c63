#include <chrono>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vdctr/pipeline/ablation.hpp"

using namespace vdctr;
using namespace vdctr::pipeline;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string mode;
};

PipelineConfig resolve(const Options& o) {
  PipelineConfig cfg = o.config_path.empty() ? PipelineConfig{} : load_config(o.config_path);
  if (o.seed) cfg.apply_seed(*o.seed);
  if (!o.out.empty()) cfg.out = o.out;
  cfg.validate();
  return cfg;
}

Mode required_mode(const Options& o) {
  if (o.mode.empty()) throw ConfigError("--mode is required for this command");
  return parse_mode(o.mode);
}

void log(const std::string& msg) { std::cerr << "[vdctr] " << msg << "\n"; }

class Command {
 public:
  Command(const PipelineConfig& cfg, std::string name)
      : out_{cfg.out}, name_(std::move(name)), t0_(std::chrono::steady_clock::now()) {
    manifest_.command = name_;
    manifest_.seed = cfg.seed;
  }

  const Layout& out() const { return out_; }
  RunManifest& manifest() { return manifest_; }
  void input(const fs::path& p) { manifest_.add_input(out_, p); }
  void inputs(const std::vector<fs::path>& ps) {
    for (const auto& p : ps) input(p);
  }
  void outputs(const std::vector<fs::path>& ps) {
    for (const auto& p : ps) manifest_.add_output(out_, p);
  }

  void finish() {
    manifest_.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    std::string file = "manifest." + name_;
    for (const auto& m : manifest_.modes) file += "." + m;
    write_manifest(out_, file, manifest_);
  }

 private:
  Layout out_;
  std::string name_;
  RunManifest manifest_;
  std::chrono::steady_clock::time_point t0_;
};

std::vector<fs::path> data_files(const Layout& l) {
  std::vector<fs::path> out{l.catalog(), l.queries(), l.traffic(), l.relevance()};
  if (fs::exists(l.truth())) out.push_back(l.truth());
  return out;
}

encoder::EncoderModel load_encoder(const Layout& l, Mode m) {
  require_artifact(l.encoder(m), "encoder checkpoint for " + mode_name(encoder_mode(m)));
  return encoder::EncoderModel::load(l.encoder(m));
}

void cmd_gen_data(const PipelineConfig& cfg) {
  Command c(cfg, "gen-data");
  log("generating data into " + cfg.out);
  const RunData rd = generate_data(cfg);
  c.outputs(write_data(c.out(), rd.ds));
  io::write_file(c.out().resolved_config(), to_text(cfg));
  c.outputs({c.out().resolved_config()});
  log(std::to_string(rd.ds.items.size()) + " items, " + std::to_string(rd.ds.traffic.size()) + " events");
  c.finish();
}

void cmd_train_encoder(const PipelineConfig& cfg, Mode mode) {
  Command c(cfg, "train");
  c.manifest().modes.push_back(mode_name(mode));
  const RunData rd = load_data(c.out(), cfg);
  c.inputs(data_files(c.out()));
  std::optional<encoder::EncoderModel> parent;
  if (mode == Mode::kS1S2) {
    parent = load_encoder(c.out(), Mode::kS1);
    c.input(c.out().encoder(Mode::kS1));
  }
  log("training encoder " + mode_name(mode));
  EncoderRun run = train_encoder(cfg, rd, mode, parent ? &*parent : nullptr);
  c.outputs(write_encoder(c.out(), mode, run));
  c.manifest().provenance.push_back({c.out().relative(c.out().encoder(mode)), run.model.provenance().stage,
                                     run.model.hash(), run.model.provenance().parent_hash});
  c.finish();
}

void cmd_train_ctr(const PipelineConfig& cfg, Mode mode) {
  Command c(cfg, "train-ctr");
  c.manifest().modes.push_back(mode_name(mode));
  const RunData rd = load_data(c.out(), cfg);
  c.inputs(data_files(c.out()));
  const auto enc = load_encoder(c.out(), mode);
  c.input(c.out().encoder(mode));
  std::optional<debias::SimilarityIndex> index;
  if (mode == Mode::kS1S2D) {
    io::EmbeddingTable s1;
    if (fs::exists(c.out().item_embeddings(Mode::kS1))) {
      s1 = io::load_embeddings(c.out().item_embeddings(Mode::kS1));
      c.input(c.out().item_embeddings(Mode::kS1));
    } else {
      s1 = encoder::encode_catalog(load_encoder(c.out(), Mode::kS1), rd.ds.items);
      c.input(c.out().encoder(Mode::kS1));
    }
    index = debias_index(cfg, s1, rd.ds);
  }
  log("training CTR " + mode_name(mode));
  CtrRun run = run_ctr(cfg, rd, mode, enc, index ? &*index : nullptr);
  c.outputs(write_ctr(c.out(), mode, run));
  c.manifest().provenance.push_back(
      {c.out().relative(c.out().ctr_model(mode)), "CTR", run.model.hash(), run.encoder_hash_before});
  c.finish();
}

void cmd_encode(const PipelineConfig& cfg, Mode mode) {
  Command c(cfg, "encode");
  c.manifest().modes.push_back(mode_name(encoder_mode(mode)));
  const RunData rd = load_data(c.out(), cfg);
  c.inputs({c.out().catalog(), c.out().queries()});
  const auto enc = load_encoder(c.out(), mode);
  c.input(c.out().encoder(mode));
  c.outputs(write_embeddings(c.out(), mode, encode_all(enc, rd.ds)));
  c.finish();
}

void cmd_eval(const PipelineConfig& cfg, bool search, Mode mode) {
  Command c(cfg, search ? "eval-search" : "eval-ctr");
  c.manifest().modes.push_back(mode_name(mode));
  MetricReport r;
  if (search) {
    const RunData rd = load_data(c.out(), cfg);
    for (const auto& p : {c.out().item_embeddings(mode), c.out().query_embeddings(mode)}) {
      require_artifact(p, "embeddings");
      c.input(p);
    }
    c.inputs({c.out().catalog(), c.out().queries(), c.out().relevance()});
    r = search_metrics(io::load_embeddings(c.out().item_embeddings(mode)),
                       io::load_embeddings(c.out().query_embeddings(mode)), rd.ds, cfg.eval);
  } else {
    require_artifact(c.out().catalog(), "catalog");
    const auto events = read_scores(c.out().scores(mode));
    c.inputs({c.out().scores(mode), c.out().catalog()});
    r = ctr_metrics(events, data::read_catalog(c.out().catalog()));
  }
  r.mode = mode_name(mode);
  c.outputs(write_partial_report(c.out(), cfg, r, search));
  std::cout << csv_table({r});
  c.finish();
}

void cmd_report(const PipelineConfig& cfg) {
  Command c(cfg, "report");
  std::vector<MetricReport> rows;
  c.outputs(assemble_report(c.out(), cfg, &rows));
  std::cout << csv_table(rows);
  c.finish();
}

void cmd_ablation(const PipelineConfig& cfg) {
  const auto result = run_ablation(cfg, cfg.out, log);
  std::cout << csv_table(result.rows);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visual feature pipeline: data generation, encoder stages, CTR with debiasing, evaluation."};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub, bool with_mode) {
    sub->add_option("--config", o.config_path, "Pipeline config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Root seed (overrides the config)");
    sub->add_option("--out", o.out, "Output directory (overrides the config)");
    if (with_mode) sub->add_option("--mode", o.mode, "classifier | S1 | S2 | S1+S2 | S1+S2+D");
  };

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic catalog, queries and traffic");
  add_common(gen, false);
  auto* train = app.add_subcommand("train", "Train one stage");
  train->require_subcommand(1);
  std::map<std::string, CLI::App*> stages;
  for (const char* s : {"classifier", "s1", "s2", "ctr"}) {
    stages[s] = train->add_subcommand(s);
    add_common(stages[s], true);
  }
  auto* enc = app.add_subcommand("encode", "Write item and query embeddings of a mode's encoder");
  add_common(enc, true);
  auto* ev = app.add_subcommand("eval", "Evaluate search or CTR outputs of one mode");
  ev->require_subcommand(1);
  auto* ev_search = ev->add_subcommand("search");
  auto* ev_ctr = ev->add_subcommand("ctr");
  add_common(ev_search, true);
  add_common(ev_ctr, true);
  auto* abl = app.add_subcommand("ablation", "Run all five modes and assemble the table");
  add_common(abl, false);
  auto* rep = app.add_subcommand("report", "Assemble report.json and table.csv from per-mode reports");
  add_common(rep, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const PipelineConfig cfg = resolve(o);
    if (*gen) cmd_gen_data(cfg);
    if (*stages["classifier"]) cmd_train_encoder(cfg, Mode::kClassifier);
    if (*stages["s1"]) cmd_train_encoder(cfg, Mode::kS1);
    if (*stages["s2"]) {
      const Mode m = o.mode.empty() ? Mode::kS1S2 : parse_mode(o.mode);
      if (m != Mode::kS2 && m != Mode::kS1S2) throw ConfigError("train s2 takes --mode S2 or S1+S2");
      cmd_train_encoder(cfg, m);
    }
    if (*stages["ctr"]) cmd_train_ctr(cfg, required_mode(o));
    if (*enc) cmd_encode(cfg, required_mode(o));
    if (*ev_search) cmd_eval(cfg, true, required_mode(o));
    if (*ev_ctr) cmd_eval(cfg, false, required_mode(o));
    if (*abl) cmd_ablation(cfg);
    if (*rep) cmd_report(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const MissingArtifactError& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return 3;
  } catch (const ProvenanceError& e) {
    std::cerr << "provenance error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const DegenerateVectorError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
