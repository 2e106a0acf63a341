#pragma once

#include "clrm/sim/types.hpp"

namespace clrm::sim {

struct RelPerm {
  double krw = 0.0;
  double kro = 0.0;
};

/// Corey power laws on the normalized mobile saturation; sw is clamped to [swc, 1 - sor].
RelPerm relative_permeability(double sw, const CoreyParams& p);

/// Water fractional flow krw/mu_w / (krw/mu_w + kro/mu_o) without gravity.
double fractional_flow(double sw, const FluidRock& fluid);

}  // namespace clrm::sim
