#include "clrm/sim/types.hpp"

#include "clrm/common/errors.hpp"

namespace clrm::sim {

void CoreyParams::validate() const {
  if (swc < 0 || sor < 0 || swc + sor >= 1.0) throw ArgumentError("corey: need swc + sor < 1");
  if (krw_end <= 0 || krw_end > 1 || kro_end <= 0 || kro_end > 1) {
    throw ArgumentError("corey: endpoints must lie in (0, 1]");
  }
  if (nw < 1 || no < 1) throw ArgumentError("corey: exponents must be >= 1");
}

void FluidRock::validate() const {
  if (mu_oil <= 0 || mu_water <= 0) throw ArgumentError("fluid: viscosities must be positive");
  if (rho_oil <= 0 || rho_water <= 0) throw ArgumentError("fluid: densities must be positive");
  if (porosity <= 0 || porosity >= 1) throw ArgumentError("fluid: porosity must lie in (0, 1)");
  if (initial_oil_saturation <= 0 || initial_oil_saturation >= 1) {
    throw ArgumentError("fluid: initial oil saturation must lie in (0, 1)");
  }
  relperm.validate();
}

std::string to_string(WellKind kind) { return kind == WellKind::producer ? "producer" : "injector"; }

WellKind well_kind_from_string(const std::string& text) {
  if (text == "producer") return WellKind::producer;
  if (text == "injector") return WellKind::injector;
  throw ArgumentError("unknown well kind '" + text + "'");
}

void WellSpec::validate() const {
  if (!(bhp_lower < bhp_upper)) throw ArgumentError("well " + name + ": bhp_lower must be < bhp_upper");
  if (bhp_lower <= 0) throw ArgumentError("well " + name + ": bhp bounds must be positive");
  if (max_liquid_rate <= 0) throw ArgumentError("well " + name + ": max_liquid_rate must be > 0");
  if (wellbore_radius <= 0) throw ArgumentError("well " + name + ": wellbore radius must be > 0");
}

WellSpec default_producer(int i, int j) {
  WellSpec w;
  w.kind = WellKind::producer;
  w.i = i;
  w.j = j;
  w.bhp_lower = 280.0;
  w.bhp_upper = 345.0;
  return w;
}

WellSpec default_injector(int i, int j) {
  WellSpec w;
  w.kind = WellKind::injector;
  w.i = i;
  w.j = j;
  w.bhp_lower = 355.0;
  w.bhp_upper = 450.0;
  return w;
}

void Grid::validate() const {
  if (nx < 1 || ny < 1 || nz < 1) throw ArgumentError("grid: dimensions must be >= 1");
  if (dx <= 0 || dy <= 0 || dz <= 0) throw ArgumentError("grid: block sizes must be positive");
}

void Reservoir::validate() const {
  grid.validate();
  const auto n = static_cast<std::size_t>(grid.cell_count());
  if (perm_h.size() != n || perm_v.size() != n) throw ArgumentError("reservoir: permeability size mismatch");
  for (std::size_t c = 0; c < n; ++c) {
    if (!(perm_h[c] > 0) || !(perm_v[c] > 0)) throw ArgumentError("reservoir: permeability must be positive");
  }
  if (porosity <= 0 || porosity >= 1) throw ArgumentError("reservoir: porosity must lie in (0, 1)");
  for (std::size_t a = 0; a < wells.size(); ++a) {
    const auto& w = wells[a];
    w.validate();
    if (w.i < 0 || w.i >= grid.nx || w.j < 0 || w.j >= grid.ny) {
      throw ArgumentError("well " + w.name + " lies outside the grid");
    }
    for (int k : w.layers) {
      if (k < 0 || k >= grid.nz) throw ArgumentError("well " + w.name + " perforates a missing layer");
    }
    for (std::size_t b = 0; b < a; ++b) {
      if (wells[b].i == w.i && wells[b].j == w.j) {
        throw ArgumentError("wells " + wells[b].name + " and " + w.name + " share a cell column");
      }
    }
  }
}

}  // namespace clrm::sim
