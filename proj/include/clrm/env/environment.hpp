#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "clrm/common/csv.hpp"
#include "clrm/econ/economics.hpp"
#include "clrm/geostat/asset.hpp"
#include "clrm/sim/simulator.hpp"

namespace clrm::env {

/// Consecutive global well identifiers per asset, starting at 1.
struct WellIdTable {
  std::vector<std::vector<int>> ids;
  int total = 0;

  const std::vector<int>& asset(int n) const { return ids.at(n); }
};

WellIdTable build_well_ids(const std::vector<int>& well_counts);
WellIdTable build_well_ids(const std::vector<geostat::AssetSpec>& assets);

/// u_prev * (1 + a * eps_c * eps_max), clipped to the well's bounds.
std::vector<double> apply_action(std::span<const double> u_prev, std::span<const double> a, double eps_c,
                                 std::span<const sim::WellSpec> wells);

/// Linear map of a in [-1, 1] onto [u_lb, u_ub].
std::vector<double> first_step_settings(std::span<const double> a, std::span<const sim::WellSpec> wells);

/// Column layout of the global input: one block of width 4*Np + 3*Ni per asset,
/// then the eps_c column.
class GlobalLayout {
 public:
  GlobalLayout() = default;
  explicit GlobalLayout(const std::vector<geostat::AssetSpec>& assets);

  int width() const { return width_; }
  int asset_count() const { return static_cast<int>(offsets_.size()); }
  int offset(int asset) const { return offsets_.at(asset); }
  int block_width(int asset) const { return widths_.at(asset); }
  int epsilon_column() const { return width_ - 1; }

 private:
  std::vector<int> offsets_;
  std::vector<int> widths_;
  int width_ = 1;
};

/// Observation block for one asset: N_d rows, columns
/// [oil rate (Np) | watercut (Np) | producer BHP (Np) | injection rate (Ni) | injector BHP (Ni) | u_prev (Nw)].
/// Rates are divided by the well's max liquid rate; pressures are min-max
/// scaled with the well's BHP bounds and floored at 0.
Eigen::MatrixXd normalize_observation(std::span<const sim::ReportInterval> reports, std::span<const double> u_prev,
                                      std::span<const sim::WellSpec> wells);

struct RawObservation {
  std::vector<sim::ReportInterval> reports;  ///< rates, watercuts and BHPs only
  std::vector<double> u_prev;
};

/// Inverse of normalize_observation for entries that were not floored.
RawObservation denormalize_observation(const Eigen::MatrixXd& block, std::span<const sim::WellSpec> wells);

/// Places an asset block into an otherwise zero global input.
Eigen::MatrixXd assemble_global_input(const Eigen::MatrixXd& block, const GlobalLayout& layout, int asset,
                                      double eps_c);

struct EpisodeConfig {
  int asset_index = 0;
  int realization = 0;
  double epsilon_c = 1.0;
  bool allow_early_termination = true;
  int max_control_steps = 19;
  double control_step_days = 200.0;
  int n_reports = 4;

  void validate() const;
};

struct StepInfo {
  int control_step = 0;          ///< 1-based index of the step just taken
  double project_life = 0.0;     ///< days, including the initial period
  std::vector<double> settings;  ///< BHPs applied in this step
  int control_switches = 0;
  sim::StepDiagnostics diagnostics;
};

struct StepOutput {
  Eigen::MatrixXd observation;  ///< global input for the next step
  double reward = 0.0;          ///< step NPV in USD
  bool done = false;
  StepInfo info;
};

/// One row per (report interval, well).
struct TraceRow {
  double time = 0.0;
  double dt = 0.0;
  int control_step = 0;  ///< 0 for the initial period
  std::string well;
  sim::WellReport report;
  double setting = 0.0;
};

/// One episode of one realization. Not shared between threads.
class Environment {
 public:
  Environment(std::shared_ptr<const sim::Simulator> simulator, GlobalLayout layout, econ::EconParams econ,
              EpisodeConfig config);

  /// Runs the initial period and returns X_1.
  Eigen::MatrixXd reset();
  StepOutput step(std::span<const double> action);

  bool done() const { return done_; }
  int control_step() const { return k_; }
  double project_life() const;
  const std::vector<double>& settings() const { return u_prev_; }
  const std::vector<TraceRow>& trace() const { return trace_; }
  const EpisodeConfig& config() const { return config_; }
  int well_count() const { return static_cast<int>(wells().size()); }

 private:
  std::span<const sim::WellSpec> wells() const { return simulator_->reservoir().wells; }
  void record(const std::vector<sim::ReportInterval>& reports, std::span<const double> settings);

  std::shared_ptr<const sim::Simulator> simulator_;
  GlobalLayout layout_;
  econ::EconParams econ_;
  EpisodeConfig config_;
  sim::SimState state_;
  std::vector<double> u_prev_;
  std::vector<TraceRow> trace_;
  int k_ = 0;
  bool started_ = false;
  bool done_ = false;
};

CsvTable trace_table(const std::vector<TraceRow>& trace);

}  // namespace clrm::env
