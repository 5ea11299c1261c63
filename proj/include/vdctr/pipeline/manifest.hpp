#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "vdctr/errors.hpp"
#include "vdctr/io/binary.hpp"
#include "vdctr/pipeline/artifacts.hpp"

namespace vdctr::pipeline {

inline constexpr const char* kVersion = "0.1.0";

struct ProvenanceLink {
  std::string artifact;  // relative path
  std::string stage;
  std::string hash;
  std::string parent_hash;
};

/// Record of one command: what it read, what it wrote (with hashes), which
/// checkpoint each output descends from, and how long it took. Wall-clock
/// lives only here, never in report.json or the CSV.
struct RunManifest {
  std::string command;
  std::vector<std::string> modes;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;   // relative path -> hash
  std::map<std::string, std::string> outputs;  // relative path -> hash
  std::vector<ProvenanceLink> provenance;
  double wall_clock_seconds = 0.0;

  void add_input(const Layout& l, const fs::path& p) { inputs[l.relative(p)] = io::file_hash(p); }
  void add_output(const Layout& l, const fs::path& p) { outputs[l.relative(p)] = io::file_hash(p); }
};

inline nlohmann::ordered_json to_json(const RunManifest& m) {
  nlohmann::ordered_json prov = nlohmann::ordered_json::array();
  for (const auto& p : m.provenance) {
    prov.push_back({{"artifact", p.artifact}, {"stage", p.stage}, {"hash", p.hash}, {"parent", p.parent_hash}});
  }
  return {{"command", m.command},
          {"modes", m.modes},
          {"seed", m.seed},
          {"inputs", m.inputs},
          {"outputs", m.outputs},
          {"provenance", prov},
          {"wall_clock_seconds", m.wall_clock_seconds},
          {"versions", {{"vdctr", kVersion}, {"compiler", __VERSION__}, {"cxx", __cplusplus}}}};
}

inline void write_manifest(const Layout& l, const std::string& name, const RunManifest& m) {
  io::write_file(l.manifest(name), to_json(m).dump(2) + "\n");
}

inline bool is_manifest(const fs::path& p) {
  const std::string f = p.filename().string();
  return f.rfind("manifest", 0) == 0 && p.extension() == ".json";
}

/// Problems with the manifests under `root`: missing or hash-mismatched
/// outputs, files written by more than one manifest, and files no manifest
/// claims. Empty when everything checks out.
inline std::vector<std::string> audit_manifests(const fs::path& root) {
  const Layout l{root};
  std::vector<std::string> problems;
  std::map<std::string, int> claims;
  std::set<std::string> manifests;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_regular_file() || !is_manifest(entry.path())) continue;
    manifests.insert(l.relative(entry.path()));
    const auto j = nlohmann::json::parse(io::read_file(entry.path()));
    for (const auto& [rel, hash] : j.at("outputs").items()) {
      ++claims[rel];
      const fs::path p = root / rel;
      if (!fs::exists(p)) {
        problems.push_back("missing: " + rel);
      } else if (io::file_hash(p) != hash.get<std::string>()) {
        problems.push_back("hash mismatch: " + rel);
      }
    }
  }
  for (const auto& [rel, n] : claims) {
    if (n > 1) problems.push_back("claimed by " + std::to_string(n) + " manifests: " + rel);
  }
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = l.relative(entry.path());
    if (manifests.count(rel)) continue;
    if (!claims.count(rel)) problems.push_back("orphan: " + rel);
  }
  return problems;
}

}  // namespace vdctr::pipeline
