#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "clrm/sim/types.hpp"

namespace clrm::sim {

struct SimOptions {
  bool gravity = true;               ///< only has an effect when nz > 1
  double cfl = 0.9;                  ///< fraction of the explicit-transport stability limit
  double pressure_interval = 25.0;   ///< days between pressure updates (upper bound)
  double cg_tolerance = 1e-13;       ///< relative residual for the pressure solve
  int cg_max_iterations = 5000;
  int max_control_sweeps = 10;
};

/// Fixed-BHP startup period that precedes optimization.
struct InitialPeriod {
  static constexpr double days = 200.0;
  static constexpr double injector_bhp = 400.0;
  static constexpr double producer_bhp = 345.0;
};

enum class ControlMode { bhp, rate, shut };

struct StepDiagnostics {
  int pressure_solves = 0;
  int substeps = 0;
  int control_switches = 0;
  int max_cg_iterations = 0;
  int direct_fallbacks = 0;
  double injected_volume = 0.0;  ///< m3 over the step
  double produced_volume = 0.0;  ///< m3 over the step (liquid)
  double min_saturation = 1.0;
  double max_saturation = 0.0;

  double mass_balance_error() const;
  std::string summary() const;
};

class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& message, StepDiagnostics diagnostics);
  const StepDiagnostics& diagnostics() const { return diagnostics_; }

 private:
  StepDiagnostics diagnostics_;
};

struct StepResult {
  SimState state;
  std::vector<ReportInterval> reports;
  std::vector<ControlMode> final_modes;
  StepDiagnostics diagnostics;
};

/// Incompressible two-phase (oil-water) IMPES simulator on a Cartesian grid.
///
/// Wells are vertical, BHP-controlled by default. A well whose liquid rate
/// would exceed its cap is switched to rate control at the cap; a well that
/// would cross-flow is shut. The control-mode assignment is iterated to a
/// fixed point at every pressure update. Const member functions are
/// thread-safe, so one Simulator can serve several episodes.
class Simulator {
 public:
  Simulator(Reservoir reservoir, FluidRock fluid, SimOptions options = {});

  SimState initial_state() const;

  StepResult simulate_control_step(const SimState& state, std::span<const double> bhp_settings,
                                   double duration, int n_reports) const;

  /// Fixed 400/345 bar BHPs for 200 days starting at time 0.
  StepResult run_initial_period(const SimState& state, int n_reports) const;

  /// The initial-period BHP of every well, in well order.
  std::vector<double> initial_period_bhps() const;

  const Reservoir& reservoir() const { return reservoir_; }
  const FluidRock& fluid() const { return fluid_; }
  const SimOptions& options() const { return options_; }
  double pore_volume() const;
  /// Peaceman index of the perforations of well `w`, in layer order.
  std::vector<double> well_indices(int w) const;

 private:
  struct Face {
    int a;
    int b;
    double trans;       ///< Darcy-constant * k * area / length
    double depth_diff;  ///< depth(a) - depth(b), metres (nonzero only on vertical faces)
  };
  struct Perforation {
    int cell;
    double wi;
  };
  struct Workspace;

  void solve_pressure(Workspace& ws, std::span<const double> bhp, StepDiagnostics& diag) const;
  void assemble_and_solve(Workspace& ws, std::span<const double> bhp, StepDiagnostics& diag) const;
  void transport(Workspace& ws, double duration, StepDiagnostics& diag) const;

  Reservoir reservoir_;
  FluidRock fluid_;
  SimOptions options_;
  std::vector<Face> faces_;
  std::vector<std::vector<Perforation>> perforations_;
  std::vector<double> pore_volume_;
  std::vector<double> depth_;
  double max_dfw_ = 0.0;
  double max_dgravity_ = 0.0;
  bool gravity_active_ = false;
};

}  // namespace clrm::sim
