#include "clrm/sim/well_index.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "clrm/common/errors.hpp"

namespace clrm::sim {

double peaceman_equivalent_radius(double kx, double ky, double dx, double dy) {
  const double ryx = std::sqrt(ky / kx);
  const double rxy = std::sqrt(kx / ky);
  return 0.28 * std::sqrt(ryx * dx * dx + rxy * dy * dy) / (std::sqrt(ryx) + std::sqrt(rxy));
}

double peaceman_well_index(double kx, double ky, double dx, double dy, double dz_perf, double rw) {
  if (!(kx > 0 && ky > 0 && dx > 0 && dy > 0 && dz_perf > 0 && rw > 0)) {
    throw ArgumentError("peaceman_well_index: all inputs must be positive");
  }
  const double r_eq = peaceman_equivalent_radius(kx, ky, dx, dy);
  if (r_eq <= rw) {
    throw ArgumentError("peaceman_well_index: equivalent radius " + std::to_string(r_eq) +
                        " m does not exceed wellbore radius " + std::to_string(rw) + " m");
  }
  return kDarcyConstant * 2.0 * std::numbers::pi * std::sqrt(kx * ky) * dz_perf / std::log(r_eq / rw);
}

}  // namespace clrm::sim
