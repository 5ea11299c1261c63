// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance [work_dir]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "support/grad_cases.hpp"
#include "support/suites.hpp"
#include "vdctr/numerics/losses.hpp"
#include "vdctr/pipeline/ablation.hpp"

using namespace vdctr;
using namespace vdctr::pipeline;
namespace fs = std::filesystem;

namespace {

constexpr double kGradTol = 1e-4;
constexpr std::uint64_t kGradSeeds = 20;
constexpr double kLogMTol = 1e-9;
constexpr double kBceTol = 1e-12;
constexpr std::size_t kOracleInstances = 120;
constexpr double kOracleTol = 1e-12;
constexpr std::size_t kChiDraws = 10000;
constexpr double kChiMinP = 0.01;
constexpr double kBottomSlack = 0.002;
constexpr double kOverallBand = 0.005;
const std::vector<std::uint64_t> kSeeds{1, 2, 3};

int failures = 0;

void line(int id, bool ok, const std::string& what, const std::string& detail, double secs) {
  std::printf("criterion %d %s  %s  [%s] (%.1fs)\n", id, ok ? "PASS" : "FAIL", what.c_str(), detail.c_str(), secs);
  std::fflush(stdout);
  if (!ok) ++failures;
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

void gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t composite = 0, checks = 0;
  for (const auto& c : vdctr::testing::all_grad_cases()) {
    composite += c.composite;
    for (std::uint64_t s = 0; s < kGradSeeds; ++s) {
      const auto r = c.run(s);
      ++checks;
      if (!(r.rel_err <= worst)) {
        worst = r.rel_err;
        worst_name = c.name + "/" + r.worst;
      }
    }
  }
  line(1, worst < kGradTol && composite >= 3, "finite-difference gradients",
       std::to_string(checks) + " checks, " + std::to_string(composite) + " composite losses, worst " +
           fmt("%.2e", worst) + " at " + worst_name,
       since(t0));
}

void closed_forms() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_ln = 0.0;
  for (std::size_t m : {1u, 4u, 15u, 31u, 63u}) {
    Tape tape;
    std::vector<double> a(m + 2, 0.0), p(m + 2, 0.0);
    a[0] = 1.0;
    p[1] = 1.0;
    std::vector<Var> negs;
    for (std::size_t j = 0; j < m; ++j) {
      std::vector<double> n(m + 2, 0.0);
      n[1 + (j % (m + 1))] = 1.0;
      negs.push_back(tape.constant(Tensor::vector(n)));
    }
    const double l = contrastive_loss(tape.constant(Tensor::vector(a)), tape.constant(Tensor::vector(p)), negs)
                         .value()
                         .item();
    worst_ln = std::max(worst_ln, std::abs(l - std::log(static_cast<double>(m + 1))));
  }
  double worst_bce = 0.0;
  {
    Tape tape;
    Var y = ops::bce(tape.constant(Tensor::vector({0.5, 0.5})), {0.0, 1.0});
    for (std::size_t i = 0; i < 2; ++i) worst_bce = std::max(worst_bce, std::abs(y.value()[i] - std::log(2.0)));
  }
  line(2, worst_ln <= kLogMTol && worst_bce <= kBceTol, "closed-form loss values",
       "ln M err " + fmt("%.1e", worst_ln) + ", bce(0.5) err " + fmt("%.1e", worst_bce), since(t0));
}

void metric_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto d = vdctr::testing::metric_oracle_suite(kOracleInstances, 50000);
  line(3, d.worst() <= kOracleTol && d.undefined_mismatches == 0, "metric oracle equivalence",
       std::to_string(d.instances) + " instances, worst diff " + fmt("%.1e", d.worst()) + ", undefined mismatches " +
           std::to_string(d.undefined_mismatches),
       since(t0));
}

void mining() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t mismatches = 0, violations = 0, anchors = 0;
  double min_p = 1.0;
  for (std::uint64_t s : kSeeds) {
    const auto c = vdctr::testing::mining_correctness(s);
    mismatches += c.topk_mismatches;
    violations += c.contract_violations;
    anchors += c.anchors_checked;
    min_p = std::min(min_p, vdctr::testing::mining_chi_square(s, kChiDraws).p_value);
  }
  line(4, mismatches == 0 && violations == 0 && min_p > kChiMinP, "positive mining",
       std::to_string(anchors) + " anchors, top-K mismatches " + std::to_string(mismatches) + ", contract violations " +
           std::to_string(violations) + ", min chi-square p " + fmt("%.3f", min_p),
       since(t0));
}

struct SeedRun {
  AblationResult result;
  double secs = 0.0;
};

const MetricReport& row(const SeedRun& r, Mode m) {
  return r.result.rows.at(static_cast<std::size_t>(m));
}

/// Holds on at least 2 of 3 seeds and on the seed mean of (lhs - rhs).
struct Ordering {
  std::string name;
  std::function<double(const SeedRun&)> margin;  // > 0 (or >= 0 when weak) means satisfied
  bool weak = false;
};

bool check_orderings(const std::vector<SeedRun>& runs, const std::vector<Ordering>& ords, std::string& detail) {
  bool all = true;
  for (const auto& o : ords) {
    int held = 0;
    double mean = 0.0;
    for (const auto& r : runs) {
      const double m = o.margin(r);
      held += o.weak ? m >= 0.0 : m > 0.0;
      mean += m / static_cast<double>(runs.size());
    }
    const bool ok = held >= 2 && (o.weak ? mean >= 0.0 : mean > 0.0);
    all = all && ok;
    detail += o.name + " " + std::to_string(held) + "/3 mean " + fmt("%+.4f", mean) + (ok ? "" : " (fails)") + "; ";
  }
  return all;
}

double hr(const SeedRun& r, Mode m) { return row(r, m).hr.value(); }
double lr10(const SeedRun& r, Mode m) { return row(r, m).lr_at.at(10); }
double cr10(const SeedRun& r, Mode m) { return row(r, m).cr_at.at(10); }
double auc(const SeedRun& r, Mode m) { return row(r, m).auc_overall.value(); }
double bottom(const SeedRun& r, Mode m) { return row(r, m).auc_bottom_decile.value(); }

void search_ordering(const std::vector<SeedRun>& runs, double secs) {
  std::vector<Ordering> ords{
      {"HR(S1+S2)>HR(S1)", [](const SeedRun& r) { return hr(r, Mode::kS1S2) - hr(r, Mode::kS1); }},
      {"HR(S1+S2)>HR(S2)", [](const SeedRun& r) { return hr(r, Mode::kS1S2) - hr(r, Mode::kS2); }},
      {"HR(classifier) lowest",
       [](const SeedRun& r) {
         return std::min({hr(r, Mode::kS1), hr(r, Mode::kS2), hr(r, Mode::kS1S2)}) - hr(r, Mode::kClassifier);
       }},
      {"CR@10(classifier) highest",
       [](const SeedRun& r) {
         return cr10(r, Mode::kClassifier) - std::max({cr10(r, Mode::kS1), cr10(r, Mode::kS2), cr10(r, Mode::kS1S2)});
       }},
      {"LR@10(S1+S2)>=LR@10(S2)", [](const SeedRun& r) { return lr10(r, Mode::kS1S2) - lr10(r, Mode::kS2); }, true},
  };
  std::string detail;
  const bool ok = check_orderings(runs, ords, detail);
  line(5, ok, "search ablation ordering", detail + "ablation time " + fmt("%.0fs", secs), secs);
}

void ctr_ordering(const std::vector<SeedRun>& runs, double secs) {
  std::string detail;
  bool ok = true;
  double mean_bottom_gain = 0.0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const double gain = bottom(runs[i], Mode::kS1S2D) - bottom(runs[i], Mode::kS1S2);
    const double shift = auc(runs[i], Mode::kS1S2D) - auc(runs[i], Mode::kS1S2);
    mean_bottom_gain += gain / static_cast<double>(runs.size());
    const bool seed_ok = gain >= -kBottomSlack && std::abs(shift) <= kOverallBand;
    ok = ok && seed_ok;
    detail += "seed " + std::to_string(kSeeds[i]) + ": bottom gain " + fmt("%+.4f", gain) + ", overall shift " +
              fmt("%+.4f", shift) + (seed_ok ? "" : " (fails)") + "; ";
  }
  const bool mean_ok = mean_bottom_gain > 0.0;
  ok = ok && mean_ok;
  detail += "mean bottom gain " + fmt("%+.4f", mean_bottom_gain) + (mean_ok ? "" : " (fails)") + "; ";
  std::vector<Ordering> ords{
      {"AUC(S2)>AUC(S1)", [](const SeedRun& r) { return auc(r, Mode::kS2) - auc(r, Mode::kS1); }}};
  ok = check_orderings(runs, ords, detail) && ok;
  line(6, ok, "CTR ablation ordering", detail, secs);
}

void frozen(const std::vector<SeedRun>& runs) {
  std::size_t checked = 0, changed = 0;
  for (const auto& r : runs) {
    for (const auto& [mode, h] : r.result.encoder_hashes) {
      ++checked;
      changed += h.first != h.second;
    }
  }
  line(7, checked == 5 * runs.size() && changed == 0, "frozen encoder",
       std::to_string(checked) + " mode runs, " + std::to_string(changed) + " hash changes", 0.0);
}

void determinism(const fs::path& first, const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  PipelineConfig cfg;
  cfg.apply_seed(kSeeds.front());
  const fs::path again = work / "rerun";
  fs::remove_all(again);
  run_ablation(cfg, again);
  std::vector<fs::path> files{"report.json", "table.csv"};
  for (Mode m : kModes) {
    const Layout l{""};
    files.push_back(l.search_row(m));
    files.push_back(l.ctr_row(m));
  }
  std::size_t differing = 0;
  for (const auto& f : files) differing += io::read_file(first / f) != io::read_file(again / f);
  line(8, differing == 0, "byte-identical rerun",
       std::to_string(files.size()) + " files compared, " + std::to_string(differing) + " differ", since(t0));
}

void geometry(const std::vector<SeedRun>& runs) {
  std::string detail;
  int held = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& g = runs[i].result.geometry;
    held += g.pairs > 0 && g.gap_fused < g.gap_s2;
    detail += "seed " + std::to_string(kSeeds[i]) + ": " + std::to_string(g.pairs) + " pairs, S2 gap " +
              fmt("%.4f", g.gap_s2) + ", fused gap " + fmt("%.4f", g.gap_fused) + "; ";
  }
  line(9, held == static_cast<int>(runs.size()), "debias geometry", detail, 0.0);
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "vdctr_acceptance";
  try {
    gradients();
    closed_forms();
    metric_oracles();
    mining();

    std::vector<SeedRun> runs;
    double total = 0.0;
    for (std::uint64_t s : kSeeds) {
      const auto t0 = std::chrono::steady_clock::now();
      PipelineConfig cfg;
      cfg.apply_seed(s);
      const fs::path dir = work / ("seed" + std::to_string(s));
      fs::remove_all(dir);
      runs.push_back({run_ablation(cfg, dir), 0.0});
      runs.back().secs = since(t0);
      total += runs.back().secs;
      std::printf("  ablation seed %llu done in %.0fs\n", static_cast<unsigned long long>(s), runs.back().secs);
      std::fflush(stdout);
    }
    search_ordering(runs, total);
    ctr_ordering(runs, total);
    frozen(runs);
    determinism(work / "seed1", work);
    geometry(runs);
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
