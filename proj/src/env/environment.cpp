#include "clrm/env/environment.hpp"

#include <algorithm>
#include <cmath>

#include "clrm/common/errors.hpp"

namespace clrm::env {
namespace {

struct Counts {
  int producers = 0;
  int injectors = 0;
};

Counts count_wells(std::span<const sim::WellSpec> wells) {
  Counts c;
  bool seen_injector = false;
  for (const auto& w : wells) {
    if (w.kind == sim::WellKind::producer) {
      if (seen_injector) throw ArgumentError("observation: producers must precede injectors");
      ++c.producers;
    } else {
      seen_injector = true;
      ++c.injectors;
    }
  }
  return c;
}

double scale_pressure(double p, const sim::WellSpec& w) {
  return std::max(0.0, (p - w.bhp_lower) / (w.bhp_upper - w.bhp_lower));
}

double unscale_pressure(double x, const sim::WellSpec& w) { return w.bhp_lower + x * (w.bhp_upper - w.bhp_lower); }

}  // namespace

WellIdTable build_well_ids(const std::vector<int>& well_counts) {
  if (well_counts.empty()) throw ArgumentError("build_well_ids: empty asset list");
  WellIdTable t;
  for (int n : well_counts) {
    if (n < 1) throw ArgumentError("build_well_ids: every asset needs at least one well");
    std::vector<int> block(n);
    for (int w = 0; w < n; ++w) block[w] = t.total + w + 1;
    t.ids.push_back(std::move(block));
    t.total += n;
  }
  return t;
}

WellIdTable build_well_ids(const std::vector<geostat::AssetSpec>& assets) {
  std::vector<int> counts;
  for (const auto& a : assets) counts.push_back(a.well_count());
  return build_well_ids(counts);
}

std::vector<double> apply_action(std::span<const double> u_prev, std::span<const double> a, double eps_c,
                                 std::span<const sim::WellSpec> wells) {
  if (u_prev.size() != wells.size() || a.size() != wells.size()) {
    throw ArgumentError("apply_action: expected " + std::to_string(wells.size()) + " wells, got u_prev " +
                        std::to_string(u_prev.size()) + " and action " + std::to_string(a.size()));
  }
  std::vector<double> u(wells.size());
  for (std::size_t w = 0; w < wells.size(); ++w) {
    const double proposed = u_prev[w] * (1.0 + a[w] * eps_c * wells[w].max_relative_change());
    u[w] = std::clamp(proposed, wells[w].bhp_lower, wells[w].bhp_upper);
  }
  return u;
}

std::vector<double> first_step_settings(std::span<const double> a, std::span<const sim::WellSpec> wells) {
  if (a.size() != wells.size()) throw ArgumentError("first_step_settings: action size mismatch");
  std::vector<double> u(wells.size());
  for (std::size_t w = 0; w < wells.size(); ++w) {
    u[w] = wells[w].bhp_lower + 0.5 * (a[w] + 1.0) * (wells[w].bhp_upper - wells[w].bhp_lower);
  }
  return u;
}

GlobalLayout::GlobalLayout(const std::vector<geostat::AssetSpec>& assets) {
  if (assets.empty()) throw ArgumentError("GlobalLayout: no assets");
  int offset = 0;
  for (const auto& a : assets) {
    offsets_.push_back(offset);
    widths_.push_back(4 * a.producer_count() + 3 * a.injector_count());
    offset += widths_.back();
  }
  width_ = offset + 1;
}

Eigen::MatrixXd normalize_observation(std::span<const sim::ReportInterval> reports, std::span<const double> u_prev,
                                      std::span<const sim::WellSpec> wells) {
  const auto c = count_wells(wells);
  const int np = c.producers, ni = c.injectors, nw = np + ni;
  if (static_cast<int>(u_prev.size()) != nw) throw ArgumentError("normalize_observation: u_prev size mismatch");
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(reports.size()), 4 * np + 3 * ni);
  for (std::size_t r = 0; r < reports.size(); ++r) {
    const auto& rep = reports[r];
    if (static_cast<int>(rep.wells.size()) != nw) throw ArgumentError("normalize_observation: report size mismatch");
    for (int p = 0; p < np; ++p) {
      const auto& w = rep.wells[p];
      x(r, p) = w.oil_rate / wells[p].max_liquid_rate;
      x(r, np + p) = w.watercut;
      x(r, 2 * np + p) = scale_pressure(w.bhp, wells[p]);
    }
    for (int q = 0; q < ni; ++q) {
      const auto& w = rep.wells[np + q];
      x(r, 3 * np + q) = w.injection_rate / wells[np + q].max_liquid_rate;
      x(r, 3 * np + ni + q) = scale_pressure(w.bhp, wells[np + q]);
    }
    for (int w = 0; w < nw; ++w) x(r, 3 * np + 2 * ni + w) = scale_pressure(u_prev[w], wells[w]);
  }
  return x;
}

RawObservation denormalize_observation(const Eigen::MatrixXd& block, std::span<const sim::WellSpec> wells) {
  const auto c = count_wells(wells);
  const int np = c.producers, ni = c.injectors, nw = np + ni;
  if (block.cols() != 4 * np + 3 * ni) throw ArgumentError("denormalize_observation: width mismatch");
  RawObservation raw;
  for (Eigen::Index r = 0; r < block.rows(); ++r) {
    sim::ReportInterval rep;
    rep.wells.resize(nw);
    for (int p = 0; p < np; ++p) {
      auto& w = rep.wells[p];
      w.kind = sim::WellKind::producer;
      w.oil_rate = block(r, p) * wells[p].max_liquid_rate;
      w.watercut = block(r, np + p);
      w.water_rate = w.watercut < 1.0 ? w.oil_rate * w.watercut / (1.0 - w.watercut) : 0.0;
      w.bhp = unscale_pressure(block(r, 2 * np + p), wells[p]);
    }
    for (int q = 0; q < ni; ++q) {
      auto& w = rep.wells[np + q];
      w.kind = sim::WellKind::injector;
      w.injection_rate = block(r, 3 * np + q) * wells[np + q].max_liquid_rate;
      w.bhp = unscale_pressure(block(r, 3 * np + ni + q), wells[np + q]);
    }
    raw.reports.push_back(std::move(rep));
  }
  raw.u_prev.resize(nw);
  if (block.rows() > 0) {
    for (int w = 0; w < nw; ++w) raw.u_prev[w] = unscale_pressure(block(0, 3 * np + 2 * ni + w), wells[w]);
  }
  return raw;
}

Eigen::MatrixXd assemble_global_input(const Eigen::MatrixXd& block, const GlobalLayout& layout, int asset,
                                      double eps_c) {
  if (block.cols() != layout.block_width(asset)) {
    throw ArgumentError("assemble_global_input: block width " + std::to_string(block.cols()) + " != layout width " +
                        std::to_string(layout.block_width(asset)));
  }
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(block.rows(), layout.width());
  x.middleCols(layout.offset(asset), block.cols()) = block;
  x.col(layout.epsilon_column()).setConstant(eps_c);
  return x;
}

void EpisodeConfig::validate() const {
  if (!(epsilon_c >= 0 && epsilon_c <= 1)) throw ArgumentError("episode: epsilon_c must lie in [0, 1]");
  if (max_control_steps < 1) throw ArgumentError("episode: max_control_steps must be >= 1");
  if (!(control_step_days > 0)) throw ArgumentError("episode: control_step_days must be > 0");
  if (n_reports < 1) throw ArgumentError("episode: n_reports must be >= 1");
}

Environment::Environment(std::shared_ptr<const sim::Simulator> simulator, GlobalLayout layout, econ::EconParams econ,
                         EpisodeConfig config)
    : simulator_(std::move(simulator)), layout_(std::move(layout)), econ_(econ), config_(config) {
  if (!simulator_) throw ArgumentError("Environment: null simulator");
  config_.validate();
  econ_.validate();
  const auto c = count_wells(wells());
  if (layout_.block_width(config_.asset_index) != 4 * c.producers + 3 * c.injectors) {
    throw ArgumentError("Environment: asset block width does not match the simulator's wells");
  }
}

Eigen::MatrixXd Environment::reset() {
  state_ = simulator_->initial_state();
  trace_.clear();
  k_ = 0;
  done_ = false;
  started_ = true;
  u_prev_ = simulator_->initial_period_bhps();
  const auto result = simulator_->run_initial_period(state_, config_.n_reports);
  state_ = result.state;
  record(result.reports, u_prev_);
  const auto block = normalize_observation(result.reports, u_prev_, wells());
  return assemble_global_input(block, layout_, config_.asset_index, config_.epsilon_c);
}

StepOutput Environment::step(std::span<const double> action) {
  if (!started_) throw StateError("Environment::step called before reset");
  if (done_) throw StateError("Environment::step called on a finished episode");
  if (static_cast<int>(action.size()) != well_count()) {
    throw ArgumentError("Environment::step: action has " + std::to_string(action.size()) + " entries, asset has " +
                        std::to_string(well_count()) + " wells");
  }
  std::vector<double> a(action.begin(), action.end());
  for (double& v : a) {
    if (!std::isfinite(v)) throw ArgumentError("Environment::step: non-finite action");
    v = std::clamp(v, -1.0, 1.0);
  }
  const auto u = k_ == 0 ? first_step_settings(a, wells()) : apply_action(u_prev_, a, config_.epsilon_c, wells());
  const auto result = simulator_->simulate_control_step(state_, u, config_.control_step_days, config_.n_reports);
  state_ = result.state;
  ++k_;
  record(result.reports, u);

  StepOutput out;
  out.reward = econ::step_npv(result.reports, econ_);
  done_ = k_ >= config_.max_control_steps || econ::should_terminate(out.reward, config_.allow_early_termination);
  out.done = done_;
  u_prev_ = u;
  out.observation = assemble_global_input(normalize_observation(result.reports, u_prev_, wells()), layout_,
                                          config_.asset_index, config_.epsilon_c);
  out.info.control_step = k_;
  out.info.project_life = project_life();
  out.info.settings = u;
  out.info.control_switches = result.diagnostics.control_switches;
  out.info.diagnostics = result.diagnostics;
  return out;
}

double Environment::project_life() const {
  return started_ ? sim::InitialPeriod::days + k_ * config_.control_step_days : 0.0;
}

void Environment::record(const std::vector<sim::ReportInterval>& reports, std::span<const double> settings) {
  const auto& specs = wells();
  for (const auto& rep : reports) {
    for (std::size_t w = 0; w < rep.wells.size(); ++w) {
      trace_.push_back({rep.t_start, rep.dt, k_, specs[w].name, rep.wells[w], settings[w]});
    }
  }
}

CsvTable trace_table(const std::vector<TraceRow>& trace) {
  CsvTable t;
  t.header = {"time", "dt", "control_step", "well", "kind", "oil_rate", "water_rate", "injection_rate", "bhp",
              "watercut", "setting"};
  for (const auto& r : trace) {
    t.add_row({format_number(r.time), format_number(r.dt), std::to_string(r.control_step), r.well,
               sim::to_string(r.report.kind), format_number(r.report.oil_rate), format_number(r.report.water_rate),
               format_number(r.report.injection_rate), format_number(r.report.bhp), format_number(r.report.watercut),
               format_number(r.setting)});
  }
  return t;
}

}  // namespace clrm::env
