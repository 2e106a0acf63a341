// clrm: generate ensembles, train control policies, evaluate and report.
//
//   clrm generate --desk-scale --out data
//   clrm cluster  --desk-scale --out data
//   clrm train    --desk-scale --mode global --seed 1 --out runs [--ensembles data]
//   clrm evaluate --from-checkpoint runs/run-X/policies/global/checkpoints/iter-00150 --ensembles runs/run-X/ensembles
//   clrm report   --out runs/run-X [--compare runs/run-Y]
//
// CLRM_WORKERS caps the number of worker threads.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>

#include "clrm/common/errors.hpp"
#include "clrm/geostat/realizations.hpp"
#include "clrm/harness/experiment.hpp"

using namespace clrm;
using namespace clrm::harness;

namespace {

struct CommonArgs {
  std::string config;
  bool desk = false;
  std::string mode;
  std::int64_t seed = -1;
  std::string out;
  bool serial = false;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config, "experiment config (JSON)");
  cmd->add_flag("--desk-scale", a.desk, "reduced preset: desk:A and desk:C, 100 realizations, 10 clusters");
  cmd->add_option("--mode", a.mode, "individual or global")->check(CLI::IsMember({"individual", "global"}));
  cmd->add_option("--seed", a.seed, "training seed");
  cmd->add_flag("--serial", a.serial, "run the serial reference loops");
}

ExperimentConfig make_config(const CommonArgs& a) {
  ExperimentConfig cfg = a.config.empty() ? ExperimentConfig{} : load_experiment(a.config);
  if (a.desk) apply_desk_scale(cfg);
  if (!a.mode.empty()) cfg.mode = mode_from_string(a.mode);
  if (a.seed >= 0) cfg.training_seed = static_cast<std::uint64_t>(a.seed);
  if (cfg.assets.empty()) throw ConfigError("no assets: pass --config or --desk-scale");
  cfg.ppo.episodes_per_iteration = cfg.episodes_per_iteration();
  return cfg;
}

Exec exec_of(const CommonArgs& a) { return a.serial ? Exec::serial : Exec::parallel; }

std::filesystem::path resolve_run(const std::filesystem::path& p) {
  if (std::filesystem::exists(p / "manifest.json")) return p;
  if (std::filesystem::exists(p / "LATEST")) {
    std::ifstream in(p / "LATEST");
    std::string name;
    in >> name;
    return p / name;
  }
  throw ConfigError("no run found at " + p.string());
}

int cmd_generate(const CommonArgs& a) {
  const ExperimentConfig cfg = make_config(a);
  cfg.validate();
  const auto sets = generate_sets(cfg, exec_of(a));
  for (std::size_t i = 0; i < sets.size(); ++i) {
    geostat::save_realizations(std::filesystem::path(a.out) / "realizations" / cfg.assets[i].name, sets[i],
                               cfg.assets[i]);
    std::printf("asset %s: %d realizations\n", cfg.assets[i].name.c_str(), sets[i].count());
  }
  return 0;
}

int cmd_cluster(const CommonArgs& a) {
  const ExperimentConfig cfg = make_config(a);
  cfg.validate();
  Ensembles e;
  e.scenario.assets = cfg.assets;
  e.scenario.econ = cfg.econ;
  for (const auto& spec : cfg.assets) {
    auto loaded = geostat::load_realizations(std::filesystem::path(a.out) / "realizations" / spec.name);
    if (geostat::to_json(loaded.spec) != geostat::to_json(spec)) {
      throw ConfigError("stored asset " + spec.name + " differs from the config");
    }
    e.scenario.sets.push_back(std::move(loaded.set));
  }
  e.clusters = cluster_sets(cfg, e.scenario.sets, exec_of(a));
  save_ensembles(a.out, e);
  for (std::size_t i = 0; i < e.clusters.size(); ++i) {
    const auto members = e.clusters[i].members();
    std::printf("asset %s: %d clusters, sizes", cfg.assets[i].name.c_str(), e.clusters[i].k);
    for (const auto& m : members) std::printf(" %zu", m.size());
    std::printf("\n");
  }
  return 0;
}

int cmd_train(const CommonArgs& a, const std::string& checkpoint, const std::string& ensembles, int iterations,
              const std::string& name) {
  ExperimentConfig cfg = make_config(a);
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (iterations > 0) cfg.ppo.iterations = iterations;
  RunOptions opts;
  opts.exec = exec_of(a);
  opts.resume_from = checkpoint;
  opts.ensembles_from = ensembles;
  opts.run_name = name;
  const RunResult r = run_experiment(cfg, opts);
  std::printf("run directory: %s\n", r.run_dir.string().c_str());
  for (const auto& p : r.policies) {
    std::printf("%s: selected iteration %d, test NPV %.6e (iteration 0: %.6e, %+.2f%%)\n", p.name.c_str(),
                p.selected_iteration, p.selected_expected_npv, p.initial_expected_npv,
                100.0 * (p.selected_expected_npv - p.initial_expected_npv) / std::abs(p.initial_expected_npv));
  }
  return 0;
}

int cmd_evaluate(const CommonArgs& a, const std::string& checkpoint, const std::string& ensembles,
                 std::vector<double> eps, const std::vector<std::string>& assets) {
  if (checkpoint.empty() || ensembles.empty()) throw ConfigError("evaluate needs --from-checkpoint and --ensembles");
  econ::EconParams econ;
  if (!a.config.empty()) {
    const ExperimentConfig cfg = load_experiment(a.config);
    econ = cfg.econ;
    if (eps.empty()) eps = cfg.epsilon_eval;
  }
  if (eps.empty()) eps = {0.0, 0.5, 1.0};
  Ensembles all = load_ensembles(ensembles, econ);
  ppo::Scenario scenario;
  scenario.econ = econ;
  std::vector<geostat::ClusterAssignment> clusters;
  for (std::size_t i = 0; i < all.scenario.assets.size(); ++i) {
    const auto& name = all.scenario.assets[i].name;
    if (!assets.empty() && std::find(assets.begin(), assets.end(), name) == assets.end()) continue;
    scenario.assets.push_back(all.scenario.assets[i]);
    scenario.sets.push_back(all.scenario.sets[i]);
    clusters.push_back(all.clusters[i]);
  }
  CsvTable t;
  t.header = {"epsilon_c", "asset", "realization", "npv"};
  for (double e : eps) {
    const auto rec = evaluate_policy(checkpoint, scenario, clusters, e, exec_of(a));
    const auto means = rec.asset_means();
    for (std::size_t p = 0; p < scenario.assets.size(); ++p) {
      std::printf("eps_c %-4s asset %s: mean test NPV %.6e over %zu realizations\n", format_number(e).c_str(),
                  scenario.assets[p].name.c_str(), means[p], rec.npvs[p].size());
      for (std::size_t k = 0; k < rec.npvs[p].size(); ++k) {
        t.add_row({format_number(e), scenario.assets[p].name, std::to_string(rec.realizations[p][k]),
                   format_number(rec.npvs[p][k])});
      }
    }
  }
  if (!a.out.empty()) {
    write_csv(a.out, t);
    std::printf("wrote %s\n", a.out.c_str());
  }
  return 0;
}

int cmd_report(const std::string& out, const std::string& compare) {
  const auto run = resolve_run(out);
  const Json m = read_json(run / "manifest.json");
  std::printf("run %s  mode %s  config %s\n", run.string().c_str(), m.at("mode").get<std::string>().c_str(),
              m.at("config_hash").get<std::string>().c_str());
  for (const auto& s : m.at("stages")) {
    std::printf("  stage %-24s %s\n", s.at("name").get<std::string>().c_str(), s.at("status").get<std::string>().c_str());
  }
  for (const auto& p : m.at("policies")) {
    const double a = p.at("initial_expected_npv"), b = p.at("selected_expected_npv");
    std::printf("  policy %-12s selected iteration %d: %.6e vs %.6e at iteration 0 (%+.2f%%)\n",
                p.at("name").get<std::string>().c_str(), p.at("selected_iteration").get<int>(), b, a,
                100.0 * (b - a) / std::abs(a));
  }
  const SweepSummary s = read_sweep(run);
  if (compare.empty()) {
    for (std::size_t i = 0; i < s.assets.size(); ++i)
      for (std::size_t e = 0; e < s.epsilons.size(); ++e)
        std::printf("  asset %-4s eps_c %-4s mean test NPV %.6e\n", s.assets[i].c_str(),
                    format_number(s.epsilons[e]).c_str(), s.means[i][e]);
    return 0;
  }
  const auto other_run = resolve_run(compare);
  const SweepSummary o = read_sweep(other_run);
  CsvTable t;
  t.header = {"asset", "epsilon_c", "mean_npv", "reference_mean_npv", "relative_difference"};
  for (std::size_t i = 0; i < s.assets.size(); ++i) {
    const auto oi = std::find(o.assets.begin(), o.assets.end(), s.assets[i]) - o.assets.begin();
    if (oi == static_cast<long>(o.assets.size())) continue;
    for (std::size_t e = 0; e < s.epsilons.size(); ++e) {
      const auto oe = std::find(o.epsilons.begin(), o.epsilons.end(), s.epsilons[e]) - o.epsilons.begin();
      if (oe == static_cast<long>(o.epsilons.size())) continue;
      const double x = s.means[i][e], ref = o.means[oi][oe];
      const double rel = (x - ref) / std::abs(ref);
      t.add_row({s.assets[i], format_number(s.epsilons[e]), format_number(x), format_number(ref), format_number(rel)});
      std::printf("  asset %-4s eps_c %-4s %.6e vs %.6e (%+.2f%%)\n", s.assets[i].c_str(),
                  format_number(s.epsilons[e]).c_str(), x, ref, 100 * rel);
    }
  }
  write_csv(run / "comparison.csv", t);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop reservoir management with DRL control policies"};
  app.require_subcommand(1);
  CommonArgs common;
  std::string checkpoint, ensembles, compare, name;
  int iterations = 0;
  std::vector<double> eps;
  std::vector<std::string> assets;

  auto* gen = app.add_subcommand("generate", "draw conditioned realizations for every asset");
  add_common(gen, common);
  gen->add_option("--out", common.out, "output directory")->required();

  auto* clu = app.add_subcommand("cluster", "cluster stored realizations by flow response");
  add_common(clu, common);
  clu->add_option("--out", common.out, "directory written by generate")->required();

  auto* train = app.add_subcommand("train", "full run: ensembles, training, selection, sweep, exports");
  add_common(train, common);
  train->add_option("--out", common.out, "root of the run directories");
  train->add_option("--from-checkpoint", checkpoint, "resume a single-policy run from this checkpoint");
  train->add_option("--ensembles", ensembles, "reuse ensembles written by cluster or an earlier run");
  train->add_option("--iterations", iterations, "override ppo.iterations");
  train->add_option("--name", name, "run directory name instead of run-<timestamp>");

  auto* ev = app.add_subcommand("evaluate", "deterministic test-set evaluation of a checkpoint");
  add_common(ev, common);
  ev->add_option("--from-checkpoint", checkpoint, "checkpoint directory")->required();
  ev->add_option("--ensembles", ensembles, "ensembles directory")->required();
  ev->add_option("--eps", eps, "eps_c values");
  ev->add_option("--asset", assets, "restrict to these assets (individual policies)");
  ev->add_option("--out", common.out, "CSV file for per-realization NPVs");

  auto* rep = app.add_subcommand("report", "summarize a run, optionally against another");
  rep->add_option("--out", common.out, "run directory or root with LATEST")->required();
  rep->add_option("--compare", compare, "reference run");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_generate(common);
    if (*clu) return cmd_cluster(common);
    if (*train) return cmd_train(common, checkpoint, ensembles, iterations, name);
    if (*ev) return cmd_evaluate(common, checkpoint, ensembles, eps, assets);
    if (*rep) return cmd_report(common.out, compare);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "clrm: %s\n", e.what());
    return 1;
  }
  return 0;
}
