#include "clrm/sim/relperm.hpp"

#include <algorithm>
#include <cmath>

namespace clrm::sim {

RelPerm relative_permeability(double sw, const CoreyParams& p) {
  const double mobile = 1.0 - p.swc - p.sor;
  const double sn = std::clamp((sw - p.swc) / mobile, 0.0, 1.0);
  return {p.krw_end * std::pow(sn, p.nw), p.kro_end * std::pow(1.0 - sn, p.no)};
}

double fractional_flow(double sw, const FluidRock& fluid) {
  const auto kr = relative_permeability(sw, fluid.relperm);
  const double lw = kr.krw / fluid.mu_water;
  const double lo = kr.kro / fluid.mu_oil;
  return lw / (lw + lo);
}

}  // namespace clrm::sim
