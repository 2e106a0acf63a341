#include "clrm/econ/economics.hpp"

#include <cmath>

#include "clrm/common/errors.hpp"

namespace clrm::econ {

void EconParams::validate() const {
  if (oil_price < 0 || produced_water_cost < 0 || injected_water_cost < 0 || opex < 0 || bbl_per_m3 <= 0) {
    throw ArgumentError("econ: prices and costs must be non-negative");
  }
  if (!(discount_rate_annual > -1)) throw ArgumentError("econ: discount rate must exceed -1");
}

Json to_json(const EconParams& p) {
  return {{"oil_price", p.oil_price},     {"produced_water_cost", p.produced_water_cost},
          {"injected_water_cost", p.injected_water_cost}, {"opex", p.opex},
          {"discount_rate_annual", p.discount_rate_annual}, {"bbl_per_m3", p.bbl_per_m3}};
}

EconParams econ_from_json(const Json& j) {
  require_known_keys(j, {"oil_price", "produced_water_cost", "injected_water_cost", "opex", "discount_rate_annual",
                         "bbl_per_m3"},
                     "economics");
  EconParams p;
  read_optional(j, "oil_price", p.oil_price);
  read_optional(j, "produced_water_cost", p.produced_water_cost);
  read_optional(j, "injected_water_cost", p.injected_water_cost);
  read_optional(j, "opex", p.opex);
  read_optional(j, "discount_rate_annual", p.discount_rate_annual);
  read_optional(j, "bbl_per_m3", p.bbl_per_m3);
  try {
    p.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  return p;
}

double discount_factor(double t_days, const EconParams& p) {
  return std::pow(1.0 + p.discount_rate_annual, -t_days / 365.0);
}

double step_npv(std::span<const sim::ReportInterval> reports, const EconParams& p) {
  if (reports.empty()) throw ArgumentError("step_npv: no report intervals");
  for (std::size_t j = 0; j < reports.size(); ++j) {
    if (!(reports[j].dt > 0)) throw ArgumentError("step_npv: interval sizes must be positive");
    if (j > 0) {
      const double expected = reports[j - 1].t_start + reports[j - 1].dt;
      if (std::abs(reports[j].t_start - expected) > 1e-9 * std::max(1.0, std::abs(expected))) {
        throw ArgumentError("step_npv: intervals overlap or leave a gap at t=" + std::to_string(expected));
      }
    }
  }
  double npv = 0.0;
  for (const auto& rep : reports) {
    double cash = -p.opex;
    for (const auto& w : rep.wells) {
      if (w.kind == sim::WellKind::producer) {
        cash += p.bbl_per_m3 * (p.oil_price * w.oil_rate - p.produced_water_cost * w.water_rate);
      } else {
        cash -= p.bbl_per_m3 * p.injected_water_cost * w.injection_rate;
      }
    }
    npv += cash * rep.dt * discount_factor(rep.t_start, p);
  }
  return npv;
}

bool should_terminate(double step_npv, bool allow_early_termination) {
  return allow_early_termination && step_npv < 0.0;
}

}  // namespace clrm::econ
