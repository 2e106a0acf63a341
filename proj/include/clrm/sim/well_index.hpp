#pragma once

namespace clrm::sim {

/// Converts md * m / cp * bar to m3/day: 9.869233e-16 m2/md * 1e5 Pa/bar / 1e-3 Pa.s/cp * 86400 s/day.
inline constexpr double kDarcyConstant = 9.869233e-16 * 1e5 / 1e-3 * 86400.0;

/// Peaceman equivalent radius for an anisotropic block.
double peaceman_equivalent_radius(double kx, double ky, double dx, double dy);

/// Peaceman well index such that q[m3/day] = WI * mobility[1/cp] * (p_cell - p_bhp)[bar].
/// Throws ArgumentError on non-positive input or when r_eq <= rw.
double peaceman_well_index(double kx, double ky, double dx, double dy, double dz_perf, double rw);

}  // namespace clrm::sim
