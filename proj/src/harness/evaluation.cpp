#include <algorithm>

#include "clrm/common/errors.hpp"
#include "clrm/geostat/realizations.hpp"
#include "clrm/harness/experiment.hpp"

namespace clrm::harness {

std::vector<geostat::RealizationSet> generate_sets(const ExperimentConfig& cfg, Exec exec) {
  geostat::GenerationOptions gen;
  gen.exec = exec;
  std::vector<geostat::RealizationSet> sets;
  for (const auto& spec : cfg.assets) {
    const auto id = static_cast<std::uint64_t>(spec.asset_id);
    sets.push_back(geostat::generate_realizations(spec, cfg.realizations, derive_seed(cfg.realization_seed, id), gen));
  }
  return sets;
}

std::vector<geostat::ClusterAssignment> cluster_sets(const ExperimentConfig& cfg,
                                                     const std::vector<geostat::RealizationSet>& sets, Exec exec) {
  if (sets.size() != cfg.assets.size()) throw ArgumentError("cluster_sets: one realization set per asset");
  std::vector<geostat::ClusterAssignment> out;
  for (std::size_t a = 0; a < sets.size(); ++a) {
    const auto& spec = cfg.assets[a];
    const auto features = geostat::flow_response_features(spec, sets[a], cfg.feature_points, cfg.feature_days, exec);
    out.push_back(geostat::cluster_realizations(features, cfg.clusters,
                                                derive_seed(cfg.clustering_seed, static_cast<std::uint64_t>(spec.asset_id))));
  }
  return out;
}

Ensembles build_ensembles(const ExperimentConfig& cfg, Exec exec) {
  cfg.validate();
  Ensembles e;
  e.scenario.assets = cfg.assets;
  e.scenario.econ = cfg.econ;
  e.scenario.sets = generate_sets(cfg, exec);
  e.clusters = cluster_sets(cfg, e.scenario.sets, exec);
  return e;
}

CsvTable cluster_table(const geostat::ClusterAssignment& a) {
  CsvTable t;
  t.header = {"realization", "cluster", "centroid"};
  for (std::size_t r = 0; r < a.labels.size(); ++r) {
    const int c = a.labels[r];
    t.add_row({std::to_string(r), std::to_string(c), a.centroid_members.at(c) == static_cast<int>(r) ? "1" : "0"});
  }
  return t;
}

geostat::ClusterAssignment cluster_from_table(const CsvTable& t) {
  geostat::ClusterAssignment a;
  const std::size_t rc = t.column("realization"), cc = t.column("cluster"), mc = t.column("centroid");
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (std::stoul(t.rows[i][rc]) != i) throw LoadError("clusters: realizations must be listed in order");
    a.labels.push_back(std::stoi(t.rows[i][cc]));
  }
  a.k = a.labels.empty() ? 0 : *std::max_element(a.labels.begin(), a.labels.end()) + 1;
  a.centroid_members.assign(a.k, -1);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i][mc] == "1") a.centroid_members.at(a.labels[i]) = static_cast<int>(i);
  }
  try {
    a.validate();
  } catch (const std::exception& e) {
    throw LoadError(std::string("clusters: ") + e.what());
  }
  return a;
}

void save_ensembles(const std::filesystem::path& dir, const Ensembles& e) {
  Json names = Json::array();
  for (std::size_t a = 0; a < e.scenario.assets.size(); ++a) {
    const auto& spec = e.scenario.assets[a];
    names.push_back(spec.name);
    geostat::save_realizations(dir / "realizations" / spec.name, e.scenario.sets[a], spec);
    write_csv(dir / "clusters" / (spec.name + ".csv"), cluster_table(e.clusters[a]));
  }
  write_json(dir / "ensembles.json", Json{{"assets", names}});
}

Ensembles load_ensembles(const std::filesystem::path& dir, const econ::EconParams& econ) {
  Ensembles e;
  e.scenario.econ = econ;
  const Json index = read_json(dir / "ensembles.json");
  for (const auto& name : index.at("assets")) {
    const std::string n = name.get<std::string>();
    auto loaded = geostat::load_realizations(dir / "realizations" / n);
    e.scenario.assets.push_back(std::move(loaded.spec));
    e.scenario.sets.push_back(std::move(loaded.set));
    e.clusters.push_back(cluster_from_table(read_csv(dir / "clusters" / (n + ".csv"))));
    if (e.clusters.back().labels.size() != e.scenario.sets.back().fields.size()) {
      throw LoadError("ensembles: cluster labels of asset " + n + " do not cover its realizations");
    }
  }
  return e;
}

std::size_t select_optimal(const std::vector<ppo::EvaluationRecord>& records) {
  if (records.empty()) throw ArgumentError("select_optimal: no evaluation records");
  std::size_t best = 0;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto& b = records[best];
    if (r.expected_npv > b.expected_npv || (r.expected_npv == b.expected_npv && r.iteration < b.iteration)) best = i;
  }
  return best;
}

std::vector<std::pair<double, double>> compute_cdf(std::vector<double> npvs) {
  if (npvs.empty()) throw ArgumentError("compute_cdf: no values");
  std::sort(npvs.begin(), npvs.end());
  std::vector<std::pair<double, double>> out;
  const double n = static_cast<double>(npvs.size());
  for (std::size_t i = 0; i < npvs.size(); ++i) out.emplace_back(npvs[i], static_cast<double>(i + 1) / n);
  return out;
}

CsvTable cdf_table(const std::vector<std::pair<double, double>>& cdf) {
  CsvTable t;
  t.header = {"npv", "probability"};
  for (const auto& [v, p] : cdf) t.add_row({format_number(v), format_number(p)});
  return t;
}

CsvTable evaluation_table(const std::vector<ppo::EvaluationRecord>& records,
                          const std::vector<geostat::AssetSpec>& assets) {
  CsvTable t;
  t.header = {"iteration", "expected_npv"};
  for (const auto& a : assets) t.header.push_back("mean_npv_" + a.name);
  t.header.push_back("selected");
  for (const auto& r : records) {
    if (r.npvs.size() != assets.size()) throw ArgumentError("evaluation_table: record does not match the assets");
    std::vector<std::string> row{std::to_string(r.iteration), format_number(r.expected_npv)};
    for (double m : r.asset_means()) row.push_back(format_number(m));
    row.push_back(r.selected ? "1" : "0");
    t.add_row(std::move(row));
  }
  return t;
}

ppo::EvaluationRecord evaluate_policy(const std::filesystem::path& checkpoint, const ppo::Scenario& scenario,
                                      const std::vector<geostat::ClusterAssignment>& clusters, double epsilon_c,
                                      Exec exec, std::vector<ppo::Trajectory>* trajectories) {
  Json meta;
  try {
    meta = read_json(checkpoint / "manifest.json").at("metadata");
  } catch (const Json::exception& e) {
    throw LoadError("evaluate_policy: " + checkpoint.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw LoadError("evaluate_policy: " + std::string(e.what()));
  }
  Json ids = Json::array();
  for (const auto& v : scenario.well_ids().ids) ids.push_back(v);
  if (meta.value("well_ids", Json()) != ids) {
    throw LoadError("evaluate_policy: checkpoint well-ID table does not match the scenario");
  }
  policy::PolicyConfig pc;
  try {
    pc = policy::policy_from_json(meta.at("policy"));
  } catch (const std::exception& e) {
    throw LoadError(std::string("evaluate_policy: bad policy config: ") + e.what());
  }
  if (pc.input_width != scenario.layout().width()) {
    throw LoadError("evaluate_policy: checkpoint input width differs from the scenario");
  }
  ppo::TrainerOptions opts;
  opts.exec = exec;
  opts.ppo.episodes_per_iteration = clusters.at(0).k;
  ppo::Trainer trainer(scenario, clusters, pc, opts);
  nn::load_checkpoint(checkpoint, trainer.policy().params(), nullptr);
  return trainer.evaluate(meta.value("iteration", 0), epsilon_c, trajectories != nullptr, trajectories);
}

}  // namespace clrm::harness
