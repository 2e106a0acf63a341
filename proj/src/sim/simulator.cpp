#include "clrm/sim/simulator.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "clrm/common/errors.hpp"
#include "clrm/sim/relperm.hpp"
#include "clrm/sim/well_index.hpp"

namespace clrm::sim {
namespace {

constexpr double kGravity = 9.80665;
constexpr double kPascalPerBar = 1e5;

struct Mobility {
  double w = 0.0;
  double o = 0.0;
  double total() const { return w + o; }
};

Mobility mobility(double sw, const FluidRock& fluid) {
  const auto kr = relative_permeability(sw, fluid.relperm);
  return {kr.krw / fluid.mu_water, kr.kro / fluid.mu_oil};
}

double gravity_fraction(double sw, const FluidRock& fluid) {
  const auto m = mobility(sw, fluid);
  return m.w * m.o / m.total();
}

}  // namespace

double StepDiagnostics::mass_balance_error() const {
  const double gross = std::max(std::abs(injected_volume), std::abs(produced_volume));
  if (gross == 0.0) return 0.0;
  return std::abs(injected_volume - produced_volume) / gross;
}

std::string StepDiagnostics::summary() const {
  std::ostringstream out;
  out << "pressure_solves=" << pressure_solves << " substeps=" << substeps
      << " control_switches=" << control_switches << " max_cg_iterations=" << max_cg_iterations
      << " direct_fallbacks=" << direct_fallbacks << " injected=" << injected_volume
      << " produced=" << produced_volume;
  return out.str();
}

SimulationError::SimulationError(const std::string& message, StepDiagnostics diagnostics)
    : std::runtime_error(message + " [" + diagnostics.summary() + "]"), diagnostics_(diagnostics) {}

struct Simulator::Workspace {
  std::vector<double> sw;
  std::vector<double> pressure;
  std::vector<ControlMode> modes;
  std::vector<double> well_pressure;
  std::vector<std::vector<double>> perf_outflow;  // m3/day leaving the reservoir, per perforation
  std::vector<double> face_flux;                  // total a->b flux, m3/day
  bool flowing = true;

  // per-well volumes over the current report interval
  std::vector<double> oil_volume;
  std::vector<double> water_volume;
  std::vector<double> injected_volume;
};

Simulator::Simulator(Reservoir reservoir, FluidRock fluid, SimOptions options)
    : reservoir_(std::move(reservoir)), fluid_(fluid), options_(options) {
  reservoir_.validate();
  fluid_.validate();
  if (options_.cfl <= 0 || options_.cfl > 1) throw ArgumentError("sim: cfl must lie in (0, 1]");
  if (options_.pressure_interval <= 0) throw ArgumentError("sim: pressure_interval must be positive");

  const Grid& g = reservoir_.grid;
  const int n = g.cell_count();
  gravity_active_ = options_.gravity && g.nz > 1;

  pore_volume_.assign(n, g.cell_volume() * reservoir_.porosity);
  depth_.resize(n);
  for (int k = 0; k < g.nz; ++k)
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) depth_[g.index(i, j, k)] = (k + 0.5) * g.dz;

  auto harmonic = [](double k1, double k2) { return 2.0 * k1 * k2 / (k1 + k2); };
  const auto& kh = reservoir_.perm_h;
  const auto& kv = reservoir_.perm_v;
  for (int k = 0; k < g.nz; ++k) {
    for (int j = 0; j < g.ny; ++j) {
      for (int i = 0; i < g.nx; ++i) {
        const int c = g.index(i, j, k);
        if (i + 1 < g.nx) {
          const int d = g.index(i + 1, j, k);
          faces_.push_back({c, d, kDarcyConstant * harmonic(kh[c], kh[d]) * g.dy * g.dz / g.dx, 0.0});
        }
        if (j + 1 < g.ny) {
          const int d = g.index(i, j + 1, k);
          faces_.push_back({c, d, kDarcyConstant * harmonic(kh[c], kh[d]) * g.dx * g.dz / g.dy, 0.0});
        }
        if (k + 1 < g.nz) {
          const int d = g.index(i, j, k + 1);
          faces_.push_back({c, d, kDarcyConstant * harmonic(kv[c], kv[d]) * g.dx * g.dy / g.dz,
                            gravity_active_ ? depth_[c] - depth_[d] : 0.0});
        }
      }
    }
  }

  perforations_.resize(reservoir_.wells.size());
  for (std::size_t w = 0; w < reservoir_.wells.size(); ++w) {
    const auto& well = reservoir_.wells[w];
    std::vector<int> layers = well.layers;
    if (layers.empty()) {
      for (int k = 0; k < g.nz; ++k) layers.push_back(k);
    }
    for (int k : layers) {
      const int c = g.index(well.i, well.j, k);
      perforations_[w].push_back(
          {c, peaceman_well_index(kh[c], kh[c], g.dx, g.dy, g.dz, well.wellbore_radius)});
    }
  }

  // Derivative bounds of the transport flux functions for the CFL limit.
  const auto& rp = fluid_.relperm;
  const int samples = 2000;
  const double lo = rp.swc;
  const double hi = 1.0 - rp.sor;
  const double h = (hi - lo) / samples;
  for (int s = 0; s < samples; ++s) {
    const double s0 = lo + s * h;
    const double s1 = s0 + h;
    max_dfw_ = std::max(max_dfw_, std::abs(fractional_flow(s1, fluid_) - fractional_flow(s0, fluid_)) / h);
    max_dgravity_ =
        std::max(max_dgravity_, std::abs(gravity_fraction(s1, fluid_) - gravity_fraction(s0, fluid_)) / h);
  }
  max_dfw_ *= 1.05;
  max_dgravity_ *= 1.05;
}

SimState Simulator::initial_state() const {
  SimState s;
  const int n = reservoir_.grid.cell_count();
  const auto& rp = fluid_.relperm;
  const double sw0 = std::clamp(1.0 - fluid_.initial_oil_saturation, rp.swc, 1.0 - rp.sor);
  s.pressure.assign(n, fluid_.initial_pressure);
  s.water_saturation.assign(n, sw0);
  s.time = 0.0;
  return s;
}

double Simulator::pore_volume() const {
  double total = 0.0;
  for (double v : pore_volume_) total += v;
  return total;
}

std::vector<double> Simulator::well_indices(int w) const {
  std::vector<double> out;
  for (const auto& p : perforations_.at(w)) out.push_back(p.wi);
  return out;
}

std::vector<double> Simulator::initial_period_bhps() const {
  std::vector<double> bhp;
  for (const auto& w : reservoir_.wells) {
    bhp.push_back(w.kind == WellKind::injector ? InitialPeriod::injector_bhp : InitialPeriod::producer_bhp);
  }
  return bhp;
}

void Simulator::assemble_and_solve(Workspace& ws, std::span<const double> bhp, StepDiagnostics& diag) const {
  const int n = reservoir_.grid.cell_count();
  const auto& wells = reservoir_.wells;
  const double rho_w = fluid_.rho_water;
  const double rho_o = fluid_.rho_oil;

  std::vector<int> rate_slot(wells.size(), -1);
  int unknowns = n;
  bool any_bhp = false;
  for (std::size_t w = 0; w < wells.size(); ++w) {
    if (ws.modes[w] == ControlMode::rate) rate_slot[w] = unknowns++;
    if (ws.modes[w] == ControlMode::bhp) any_bhp = true;
  }
  if (!any_bhp) {
    // Everything shut: nothing moves.
    ws.flowing = false;
    std::fill(ws.face_flux.begin(), ws.face_flux.end(), 0.0);
    for (auto& perf : ws.perf_outflow) std::fill(perf.begin(), perf.end(), 0.0);
    for (std::size_t w = 0; w < wells.size(); ++w) ws.well_pressure[w] = bhp[w];
    return;
  }
  ws.flowing = true;

  std::vector<Mobility> mob(n);
  for (int c = 0; c < n; ++c) mob[c] = mobility(ws.sw[c], fluid_);

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(faces_.size() * 4 + n + 8 * wells.size());
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(unknowns);
  std::vector<double> face_total_mob(faces_.size());
  std::vector<double> face_gravity(faces_.size());

  for (std::size_t f = 0; f < faces_.size(); ++f) {
    const auto& face = faces_[f];
    const double dp = ws.pressure[face.a] - ws.pressure[face.b];
    const double gw = rho_w * kGravity * face.depth_diff / kPascalPerBar;
    const double go = rho_o * kGravity * face.depth_diff / kPascalPerBar;
    auto upwind = [&](double dphi, double va, double vb) {
      if (dphi > 0) return va;
      if (dphi < 0) return vb;
      return 0.5 * (va + vb);
    };
    const double lw = upwind(dp - gw, mob[face.a].w, mob[face.b].w);
    const double lo = upwind(dp - go, mob[face.a].o, mob[face.b].o);
    const double coef = face.trans * (lw + lo);
    face_total_mob[f] = coef;
    const double grav = face.trans * (lw * gw + lo * go);
    face_gravity[f] = grav;
    triplets.emplace_back(face.a, face.a, coef);
    triplets.emplace_back(face.b, face.b, coef);
    triplets.emplace_back(face.a, face.b, -coef);
    triplets.emplace_back(face.b, face.a, -coef);
    rhs[face.a] += grav;
    rhs[face.b] -= grav;
  }

  for (std::size_t w = 0; w < wells.size(); ++w) {
    const auto& well = wells[w];
    if (ws.modes[w] == ControlMode::shut) continue;
    for (const auto& perf : perforations_[w]) {
      const double c = perf.wi * mob[perf.cell].total();
      triplets.emplace_back(perf.cell, perf.cell, c);
      if (ws.modes[w] == ControlMode::bhp) {
        rhs[perf.cell] += c * bhp[w];
      } else {
        const int r = rate_slot[w];
        triplets.emplace_back(perf.cell, r, -c);
        triplets.emplace_back(r, perf.cell, -c);
        triplets.emplace_back(r, r, c);
      }
    }
    if (ws.modes[w] == ControlMode::rate) {
      rhs[rate_slot[w]] = well.kind == WellKind::producer ? -well.max_liquid_rate : well.max_liquid_rate;
    }
  }

  Eigen::SparseMatrix<double> A(unknowns, unknowns);
  A.setFromTriplets(triplets.begin(), triplets.end());

  Eigen::VectorXd guess(unknowns);
  for (int c = 0; c < n; ++c) guess[c] = ws.pressure[c];
  for (std::size_t w = 0; w < wells.size(); ++w) {
    if (rate_slot[w] >= 0) guess[rate_slot[w]] = ws.well_pressure[w];
  }

  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(options_.cg_tolerance);
  cg.setMaxIterations(options_.cg_max_iterations);
  cg.compute(A);
  Eigen::VectorXd x = cg.solveWithGuess(rhs, guess);
  diag.max_cg_iterations = std::max(diag.max_cg_iterations, static_cast<int>(cg.iterations()));
  if (cg.info() != Eigen::Success) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> direct;
    direct.compute(A);
    if (direct.info() != Eigen::Success) {
      throw SimulationError("pressure solve failed: CG did not converge and LDLT factorization failed", diag);
    }
    x = direct.solve(rhs);
    ++diag.direct_fallbacks;
    if (direct.info() != Eigen::Success || !x.allFinite()) {
      throw SimulationError("pressure solve failed in direct fallback", diag);
    }
  }
  if (!x.allFinite()) throw SimulationError("pressure solve produced non-finite values", diag);
  ++diag.pressure_solves;

  for (int c = 0; c < n; ++c) ws.pressure[c] = x[c];
  for (std::size_t w = 0; w < wells.size(); ++w) {
    ws.well_pressure[w] = rate_slot[w] >= 0 ? x[rate_slot[w]] : bhp[w];
  }
  for (std::size_t f = 0; f < faces_.size(); ++f) {
    const auto& face = faces_[f];
    ws.face_flux[f] = face_total_mob[f] * (x[face.a] - x[face.b]) - face_gravity[f];
  }
  for (std::size_t w = 0; w < wells.size(); ++w) {
    for (std::size_t l = 0; l < perforations_[w].size(); ++l) {
      const auto& perf = perforations_[w][l];
      ws.perf_outflow[w][l] = ws.modes[w] == ControlMode::shut
                                  ? 0.0
                                  : perf.wi * mob[perf.cell].total() * (x[perf.cell] - ws.well_pressure[w]);
    }
  }
}

void Simulator::solve_pressure(Workspace& ws, std::span<const double> bhp, StepDiagnostics& diag) const {
  const auto& wells = reservoir_.wells;
  const std::size_t nw = wells.size();
  for (int sweep = 0; sweep < options_.max_control_sweeps; ++sweep) {
    assemble_and_solve(ws, bhp, diag);

    std::vector<ControlMode> next = ws.modes;
    std::vector<double> excess(nw, 0.0);
    for (std::size_t w = 0; w < nw; ++w) {
      const auto& well = wells[w];
      const bool producer = well.kind == WellKind::producer;
      const double cap = well.max_liquid_rate;
      const double tol = 1e-9 * cap;
      double outflow = 0.0;
      for (double q : ws.perf_outflow[w]) outflow += q;
      const double rate = producer ? outflow : -outflow;  // positive in the well's normal direction
      switch (ws.modes[w]) {
        case ControlMode::bhp:
          if (rate > cap + tol) {
            next[w] = ControlMode::rate;
            excess[w] = rate / cap;
          } else if (rate < -tol) {
            next[w] = ControlMode::shut;
          }
          break;
        case ControlMode::rate: {
          const double p = ws.well_pressure[w];
          if ((producer && p < bhp[w] - 1e-9) || (!producer && p > bhp[w] + 1e-9)) next[w] = ControlMode::bhp;
          break;
        }
        case ControlMode::shut: {
          double would_be = 0.0;
          for (const auto& perf : perforations_[w]) {
            const auto m = mobility(ws.sw[perf.cell], fluid_);
            would_be += perf.wi * m.total() * (ws.pressure[perf.cell] - bhp[w]);
          }
          if (!producer) would_be = -would_be;
          if (would_be > tol) next[w] = ControlMode::bhp;
          break;
        }
      }
    }

    // Keep at least one BHP-controlled well open so the pressure level is defined.
    const bool any_bhp = std::any_of(next.begin(), next.end(), [](ControlMode m) { return m == ControlMode::bhp; });
    const bool any_rate = std::any_of(next.begin(), next.end(), [](ControlMode m) { return m == ControlMode::rate; });
    if (!any_bhp && any_rate) {
      std::size_t keep = nw;
      for (std::size_t w = 0; w < nw; ++w) {
        if (ws.modes[w] == ControlMode::bhp && next[w] == ControlMode::rate &&
            (keep == nw || excess[w] < excess[keep])) {
          keep = w;
        }
      }
      if (keep == nw) {
        for (std::size_t w = 0; w < nw && keep == nw; ++w)
          if (next[w] == ControlMode::rate) keep = w;
      }
      next[keep] = ControlMode::bhp;
    }

    if (next == ws.modes) return;
    for (std::size_t w = 0; w < nw; ++w) diag.control_switches += next[w] != ws.modes[w];
    ws.modes = std::move(next);
  }
  throw SimulationError("control-mode fixed point not reached in " + std::to_string(options_.max_control_sweeps) +
                            " sweeps",
                        diag);
}

void Simulator::transport(Workspace& ws, double duration, StepDiagnostics& diag) const {
  const int n = reservoir_.grid.cell_count();
  const auto& wells = reservoir_.wells;
  const auto& rp = fluid_.relperm;
  const double s_min = rp.swc;
  const double s_max = 1.0 - rp.sor;
  const double drho_g = (fluid_.rho_oil - fluid_.rho_water) * kGravity / kPascalPerBar;

  // CFL bound: per-cell sensitivity of the water balance to its own saturation.
  std::vector<double> sensitivity(n, 0.0);
  for (std::size_t f = 0; f < faces_.size(); ++f) {
    const auto& face = faces_[f];
    const double ft = ws.face_flux[f];
    if (face.depth_diff != 0.0) {
      const double gterm = max_dfw_ * std::abs(ft) + max_dgravity_ * std::abs(face.trans * drho_g * face.depth_diff);
      sensitivity[face.a] += gterm;
      sensitivity[face.b] += gterm;
    } else {
      sensitivity[ft >= 0 ? face.a : face.b] += max_dfw_ * std::abs(ft);
    }
  }
  for (std::size_t w = 0; w < wells.size(); ++w) {
    for (std::size_t l = 0; l < perforations_[w].size(); ++l) {
      sensitivity[perforations_[w][l].cell] += max_dfw_ * std::abs(ws.perf_outflow[w][l]);
    }
  }
  double dt_stable = std::numeric_limits<double>::infinity();
  for (int c = 0; c < n; ++c) {
    if (sensitivity[c] > 0) dt_stable = std::min(dt_stable, pore_volume_[c] / sensitivity[c]);
  }
  dt_stable *= options_.cfl;

  std::vector<double> dw(n);
  double t = 0.0;
  while (duration - t > 1e-12 * std::max(1.0, duration)) {
    const double dt = std::min(dt_stable, duration - t);
    std::fill(dw.begin(), dw.end(), 0.0);

    if (ws.flowing) {
      for (std::size_t f = 0; f < faces_.size(); ++f) {
        const auto& face = faces_[f];
        const double ft = ws.face_flux[f];
        double fw;
        if (face.depth_diff == 0.0) {
          const int up = ft >= 0 ? face.a : face.b;
          fw = fractional_flow(ws.sw[up], fluid_) * ft;
        } else {
          // Phase-potential upwinding with total flux held fixed.
          const double g = face.trans * drho_g * face.depth_diff;
          const Mobility ma = mobility(ws.sw[face.a], fluid_);
          const Mobility mb = mobility(ws.sw[face.b], fluid_);
          auto water_flux = [&](const Mobility& up_w, const Mobility& up_o) {
            const double lt = up_w.w + up_o.o;
            return lt > 0 ? (up_w.w * ft + g * up_w.w * up_o.o) / lt : 0.0;
          };
          const Mobility* options[4][2] = {{&ma, &ma}, {&mb, &mb}, {&ma, &mb}, {&mb, &ma}};
          fw = water_flux(ft >= 0 ? ma : mb, ft >= 0 ? ma : mb);
          for (const auto& opt : options) {
            const double cand = water_flux(*opt[0], *opt[1]);
            const double oil = ft - cand;
            const bool w_ok = cand == 0.0 || ((cand > 0) == (opt[0] == &ma));
            const bool o_ok = oil == 0.0 || ((oil > 0) == (opt[1] == &ma));
            if (w_ok && o_ok) {
              fw = cand;
              break;
            }
          }
        }
        dw[face.a] -= fw;
        dw[face.b] += fw;
      }

      for (std::size_t w = 0; w < wells.size(); ++w) {
        const bool producer = wells[w].kind == WellKind::producer;
        for (std::size_t l = 0; l < perforations_[w].size(); ++l) {
          const int c = perforations_[w][l].cell;
          const double q = ws.perf_outflow[w][l];
          const double water_out = (producer || q > 0) ? fractional_flow(ws.sw[c], fluid_) * q : q;
          dw[c] -= water_out;
          if (producer) {
            ws.water_volume[w] += water_out * dt;
            ws.oil_volume[w] += (q - water_out) * dt;
          } else {
            ws.injected_volume[w] -= q * dt;
          }
        }
      }

      for (int c = 0; c < n; ++c) {
        double s = ws.sw[c] + dt * dw[c] / pore_volume_[c];
        if (!std::isfinite(s)) throw SimulationError("non-finite saturation in transport", diag);
        s = std::clamp(s, s_min, s_max);
        ws.sw[c] = s;
        diag.min_saturation = std::min(diag.min_saturation, s);
        diag.max_saturation = std::max(diag.max_saturation, s);
      }
    }
    ++diag.substeps;
    t += dt;
  }
}

StepResult Simulator::simulate_control_step(const SimState& state, std::span<const double> bhp_settings,
                                            double duration, int n_reports) const {
  const auto& wells = reservoir_.wells;
  const std::size_t nw = wells.size();
  if (bhp_settings.size() != nw) {
    throw ArgumentError("simulate_control_step: expected " + std::to_string(nw) + " BHP settings, got " +
                        std::to_string(bhp_settings.size()));
  }
  for (std::size_t w = 0; w < nw; ++w) {
    const double tol = 1e-9 * wells[w].bhp_upper;
    if (!(bhp_settings[w] >= wells[w].bhp_lower - tol && bhp_settings[w] <= wells[w].bhp_upper + tol)) {
      throw ArgumentError("simulate_control_step: BHP setting " + std::to_string(bhp_settings[w]) +
                          " outside bounds of well " + std::to_string(w));
    }
  }
  if (!(duration > 0)) throw ArgumentError("simulate_control_step: duration must be positive");
  if (n_reports < 1) throw ArgumentError("simulate_control_step: n_reports must be >= 1");
  const auto n = static_cast<std::size_t>(reservoir_.grid.cell_count());
  if (state.pressure.size() != n || state.water_saturation.size() != n) {
    throw ArgumentError("simulate_control_step: state does not match the grid");
  }

  Workspace ws;
  ws.sw = state.water_saturation;
  ws.pressure = state.pressure;
  ws.modes.assign(nw, ControlMode::bhp);
  ws.well_pressure.assign(bhp_settings.begin(), bhp_settings.end());
  ws.perf_outflow.resize(nw);
  for (std::size_t w = 0; w < nw; ++w) ws.perf_outflow[w].assign(perforations_[w].size(), 0.0);
  ws.face_flux.assign(faces_.size(), 0.0);

  StepResult result;
  StepDiagnostics& diag = result.diagnostics;
  const double report_dt = duration / n_reports;
  const int pressure_steps = std::max(1, static_cast<int>(std::ceil(report_dt / options_.pressure_interval - 1e-9)));
  const double sub_dt = report_dt / pressure_steps;

  for (int r = 0; r < n_reports; ++r) {
    ws.oil_volume.assign(nw, 0.0);
    ws.water_volume.assign(nw, 0.0);
    ws.injected_volume.assign(nw, 0.0);
    std::vector<double> bhp_integral(nw, 0.0);
    for (int p = 0; p < pressure_steps; ++p) {
      solve_pressure(ws, bhp_settings, diag);
      for (std::size_t w = 0; w < nw; ++w) bhp_integral[w] += ws.well_pressure[w] * sub_dt;
      transport(ws, sub_dt, diag);
    }

    ReportInterval interval;
    interval.t_start = state.time + r * report_dt;
    interval.dt = report_dt;
    interval.wells.resize(nw);
    for (std::size_t w = 0; w < nw; ++w) {
      auto& rep = interval.wells[w];
      rep.kind = wells[w].kind;
      auto clean = [&](double volume) {
        const double rate = volume / report_dt;
        return (rate < 0 && rate > -1e-9 * wells[w].max_liquid_rate) ? 0.0 : rate;
      };
      rep.bhp = bhp_integral[w] / report_dt;
      if (rep.kind == WellKind::producer) {
        rep.oil_rate = clean(ws.oil_volume[w]);
        rep.water_rate = clean(ws.water_volume[w]);
        const double liquid = rep.oil_rate + rep.water_rate;
        rep.watercut = liquid > 0 ? rep.water_rate / liquid : 0.0;
        diag.produced_volume += ws.oil_volume[w] + ws.water_volume[w];
      } else {
        rep.injection_rate = clean(ws.injected_volume[w]);
        diag.injected_volume += ws.injected_volume[w];
      }
    }
    result.reports.push_back(std::move(interval));
  }

  result.state.pressure = std::move(ws.pressure);
  result.state.water_saturation = std::move(ws.sw);
  result.state.time = state.time + duration;
  result.final_modes = std::move(ws.modes);
  return result;
}

StepResult Simulator::run_initial_period(const SimState& state, int n_reports) const {
  if (state.time != 0.0) throw ArgumentError("run_initial_period: state must be at time 0");
  const auto bhp = initial_period_bhps();
  return simulate_control_step(state, bhp, InitialPeriod::days, n_reports);
}

}  // namespace clrm::sim
