#pragma once

#include <string>
#include <vector>

namespace clrm::sim {

/// Corey relative-permeability parameters.
struct CoreyParams {
  double swc = 0.15;      ///< connate water saturation
  double sor = 0.20;      ///< residual oil saturation
  double krw_end = 0.55;  ///< water endpoint at Sw = 1 - sor
  double kro_end = 1.0;   ///< oil endpoint at Sw = swc
  double nw = 2.0;
  double no = 2.0;

  void validate() const;
};

/// Fluid and rock description shared by every realization of an asset.
struct FluidRock {
  double mu_oil = 1.0;       ///< cp
  double mu_water = 0.31;    ///< cp
  double rho_oil = 849.0;    ///< kg/m3
  double rho_water = 1025.0; ///< kg/m3
  double porosity = 0.2;
  CoreyParams relperm;
  double initial_pressure = 350.0;        ///< bar
  double initial_oil_saturation = 0.85;

  void validate() const;
};

enum class WellKind { producer, injector };

std::string to_string(WellKind kind);
WellKind well_kind_from_string(const std::string& text);

/// A vertical well in one cell column.
struct WellSpec {
  int well_id = 0;  ///< global identifier (consecutive per asset)
  std::string name;
  WellKind kind = WellKind::producer;
  int i = 0;
  int j = 0;
  std::vector<int> layers;  ///< perforated layers; empty means all layers
  double bhp_lower = 280.0;  ///< bar
  double bhp_upper = 345.0;  ///< bar
  double max_liquid_rate = 1526.0;  ///< m3/day
  double wellbore_radius = 0.1;     ///< m

  void validate() const;
  double max_relative_change() const { return (bhp_upper - bhp_lower) / bhp_lower; }
};

/// Default producer and injector templates (bounds in bar).
WellSpec default_producer(int i, int j);
WellSpec default_injector(int i, int j);

/// Cartesian grid, cells ordered x fastest then y then z (z = layer, increasing downward).
struct Grid {
  int nx = 1;
  int ny = 1;
  int nz = 1;
  double dx = 60.0;
  double dy = 60.0;
  double dz = 12.0;

  int cell_count() const { return nx * ny * nz; }
  int index(int i, int j, int k) const { return (k * ny + j) * nx + i; }
  double cell_volume() const { return dx * dy * dz; }
  void validate() const;
};

/// Everything the flow simulator needs about one realization.
struct Reservoir {
  Grid grid;
  std::vector<double> perm_h;  ///< md, horizontal (kx = ky)
  std::vector<double> perm_v;  ///< md, vertical
  double porosity = 0.2;
  std::vector<WellSpec> wells;

  void validate() const;
};

/// Pressure and saturation on the grid.
struct SimState {
  std::vector<double> pressure;          ///< bar per cell
  std::vector<double> water_saturation;  ///< per cell
  double time = 0.0;                     ///< days
};

/// Rates for one well averaged over one report interval.
struct WellReport {
  WellKind kind = WellKind::producer;
  double oil_rate = 0.0;        ///< m3/day (producers)
  double water_rate = 0.0;      ///< m3/day (producers)
  double injection_rate = 0.0;  ///< m3/day (injectors)
  double bhp = 0.0;             ///< bar, time-averaged
  double watercut = 0.0;

  double liquid_rate() const { return kind == WellKind::producer ? oil_rate + water_rate : injection_rate; }
};

/// All wells over one report interval [t_start, t_start + dt).
struct ReportInterval {
  double t_start = 0.0;  ///< days from project start
  double dt = 0.0;       ///< days
  std::vector<WellReport> wells;
};

}  // namespace clrm::sim
