#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "clrm/common/csv.hpp"
#include "clrm/common/exec.hpp"
#include "clrm/common/json_util.hpp"
#include "clrm/econ/economics.hpp"
#include "clrm/geostat/asset.hpp"
#include "clrm/geostat/clustering.hpp"
#include "clrm/ppo/ppo.hpp"
#include "clrm/ppo/rollout.hpp"
#include "clrm/ppo/trainer.hpp"

namespace clrm::harness {

enum class Mode { individual, global };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

/// Everything a run needs. Defaults are the full-scale example-1 setup.
///
/// JSON schema (every key optional, unknown keys rejected):
///   mode                      "individual" | "global"
///   assets                    list of preset names ("table1:A", "desk:C"), asset
///                             documents, or {"path": file} references
///   realizations              per asset
///   clusters                  per asset; global clusters merge by index
///   feature_points, feature_days   clustering flow-response run
///   individual_episodes, global_episodes   episodes per iteration per mode
///   ppo                       PPOConfig overrides
///   econ                      EconParams overrides
///   epsilon_eval              eps_c values for the final sweep
///   policy                    {"n_m", "heads", "tau", "layers", "conv_filters",
///                              "mlp_hidden", "value_hidden"} overrides
///   seeds                     {"realizations", "clustering", "training"}
///   output_dir                root under which run-<timestamp> directories go
struct ExperimentConfig {
  Mode mode = Mode::global;
  std::vector<geostat::AssetSpec> assets;
  Json asset_sources = Json::array();  ///< as written in the config, kept for the manifest
  int realizations = 1000;
  int clusters = 40;
  int feature_points = 20;
  double feature_days = 2000.0;
  int individual_episodes = 160;
  int global_episodes = 200;
  ppo::PPOConfig ppo;
  econ::EconParams econ;
  std::vector<double> epsilon_eval{0.0, 0.5, 1.0};
  Json policy_overrides = Json::object();
  std::uint64_t realization_seed = 1;
  std::uint64_t clustering_seed = 2;
  std::uint64_t training_seed = 3;
  std::filesystem::path output_dir = "runs";

  void validate() const;
  /// Episodes per iteration of one training run in the configured mode.
  int episodes_per_iteration() const;
};

/// Reduced setup: desk:A and desk:C, 100 realizations, 10 clusters,
/// 20 episodes per iteration, 150 iterations. Applied on top of `cfg`.
void apply_desk_scale(ExperimentConfig& cfg);

Json to_json(const ExperimentConfig& cfg);
/// Relative {"path": ...} asset references resolve against `base_dir`.
ExperimentConfig experiment_from_json(const Json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment(const std::filesystem::path& path);
/// FNV-1a of the canonical JSON dump of the config, output_dir excluded.
std::uint64_t config_hash(const ExperimentConfig& cfg);

/// Training simulation counts of both modes for the configured assets and budgets.
struct SimulationBudget {
  long long individual = 0;  ///< assets x individual episodes x iterations
  long long global = 0;      ///< global episodes x iterations
  double ratio = 0.0;        ///< global / individual
};
SimulationBudget simulation_budget(const ExperimentConfig& cfg);

/// Run manifest before any stage has run: config and its hash, seeds,
/// versions, global well-ID table and simulation budget.
Json run_manifest(const ExperimentConfig& cfg);

/// Realizations and cluster assignments of every configured asset.
struct Ensembles {
  ppo::Scenario scenario;
  std::vector<geostat::ClusterAssignment> clusters;
};
Ensembles build_ensembles(const ExperimentConfig& cfg, Exec exec = Exec::parallel);
/// The two halves of build_ensembles.
std::vector<geostat::RealizationSet> generate_sets(const ExperimentConfig& cfg, Exec exec = Exec::parallel);
std::vector<geostat::ClusterAssignment> cluster_sets(const ExperimentConfig& cfg,
                                                     const std::vector<geostat::RealizationSet>& sets,
                                                     Exec exec = Exec::parallel);
void save_ensembles(const std::filesystem::path& dir, const Ensembles& e);
/// Reads what save_ensembles wrote; `econ` fills the scenario's economics.
Ensembles load_ensembles(const std::filesystem::path& dir, const econ::EconParams& econ);

CsvTable cluster_table(const geostat::ClusterAssignment& a);
geostat::ClusterAssignment cluster_from_table(const CsvTable& t);

/// Policy configuration for one training run over `scenario`.
policy::PolicyConfig policy_for(const ExperimentConfig& cfg, const ppo::Scenario& scenario, std::uint64_t seed);

/// Index of the record with the highest expected NPV, earliest on ties.
std::size_t select_optimal(const std::vector<ppo::EvaluationRecord>& records);

/// Empirical CDF: sorted values with P(i) = i / N.
std::vector<std::pair<double, double>> compute_cdf(std::vector<double> npvs);
CsvTable cdf_table(const std::vector<std::pair<double, double>>& cdf);

CsvTable evaluation_table(const std::vector<ppo::EvaluationRecord>& records,
                          const std::vector<geostat::AssetSpec>& assets);

/// Deterministic test-set evaluation of a saved policy. The checkpoint's
/// architecture and well-ID table must match the scenario.
ppo::EvaluationRecord evaluate_policy(const std::filesystem::path& checkpoint, const ppo::Scenario& scenario,
                                      const std::vector<geostat::ClusterAssignment>& clusters, double epsilon_c,
                                      Exec exec = Exec::parallel, std::vector<ppo::Trajectory>* trajectories = nullptr);

/// Minimal SVG line/step chart.
struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  bool step = false;
  bool dashed = false;
};
std::string svg_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series);

struct RunOptions {
  Exec exec = Exec::parallel;
  std::filesystem::path resume_from;     ///< checkpoint; only for single-policy runs
  std::filesystem::path ensembles_from;  ///< directory written by save_ensembles; empty: generate
  std::string run_name;               ///< empty: run-<UTC timestamp>
  bool quiet = false;
};

struct PolicyResult {
  std::string name;                ///< "global" or "asset-<name>"
  std::vector<int> assets;         ///< indices into cfg.assets
  std::filesystem::path selected;  ///< checkpoint directory
  int selected_iteration = 0;
  double initial_expected_npv = 0.0;
  double selected_expected_npv = 0.0;
  /// [eps index][asset position in `assets`] test NPVs of the selected policy.
  std::vector<std::vector<std::vector<double>>> sweep;
};

struct RunResult {
  std::filesystem::path run_dir;
  std::vector<PolicyResult> policies;
};

/// Generates or loads ensembles, trains one policy (global) or one per asset
/// (individual), selects, sweeps eps_c and exports CSVs, SVGs and manifest.json.
/// A failing stage is recorded in the manifest before the error propagates.
RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

/// Mean test NPV per (asset name, eps_c) read back from a finished run directory.
struct SweepSummary {
  std::vector<std::string> assets;
  std::vector<double> epsilons;
  std::vector<std::vector<double>> means;  ///< [asset][eps]
};
SweepSummary read_sweep(const std::filesystem::path& run_dir);

}  // namespace clrm::harness
