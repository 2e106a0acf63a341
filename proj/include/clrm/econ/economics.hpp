#pragma once

#include <span>

#include "clrm/common/json_util.hpp"
#include "clrm/sim/types.hpp"

namespace clrm::econ {

struct EconParams {
  double oil_price = 70.0;           ///< USD/STB
  double produced_water_cost = 7.0;  ///< USD/STB
  double injected_water_cost = 7.0;  ///< USD/STB
  double opex = 41000.0;             ///< USD/day
  double discount_rate_annual = 0.1;
  double bbl_per_m3 = 6.28981;

  void validate() const;
};

Json to_json(const EconParams& p);
EconParams econ_from_json(const Json& j);

/// (1 + b)^(-t/365) for t in days.
double discount_factor(double t_days, const EconParams& p);

/// Discounted cash flow of one control step. Intervals must be contiguous and
/// in time order; each is discounted at its start time. Rates are m3/day.
double step_npv(std::span<const sim::ReportInterval> reports, const EconParams& p);

/// True iff step_npv < 0 and early termination is allowed.
bool should_terminate(double step_npv, bool allow_early_termination);

}  // namespace clrm::econ
