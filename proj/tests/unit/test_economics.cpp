#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "clrm/common/errors.hpp"
#include "clrm/econ/economics.hpp"

using namespace clrm;
using namespace clrm::econ;
using clrm::sim::ReportInterval;
using clrm::sim::WellKind;
using clrm::sim::WellReport;

namespace {

// Straight-line evaluation: totals per interval first, discounting via exp/log.
double oracle_npv(const std::vector<ReportInterval>& reps, const EconParams& p) {
  double total = 0;
  for (const auto& r : reps) {
    double qo = 0, qw = 0, qi = 0;
    for (const auto& w : r.wells) {
      if (w.kind == WellKind::producer) {
        qo += w.oil_rate;
        qw += w.water_rate;
      } else {
        qi += w.injection_rate;
      }
    }
    const double b = p.bbl_per_m3;
    const double cash = p.oil_price * b * qo - p.produced_water_cost * b * qw - p.injected_water_cost * b * qi - p.opex;
    total += cash * r.dt * std::exp(-std::log1p(p.discount_rate_annual) * r.t_start / 365.0);
  }
  return total;
}

std::vector<ReportInterval> random_reports(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> rate(0, 1526), start(0, 3800);
  std::uniform_int_distribution<int> nrep(1, 6), nw(1, 8);
  std::vector<ReportInterval> reps(nrep(rng));
  const int wells = nw(rng);
  double t = start(rng);
  const double dt = 200.0 / reps.size();
  for (auto& r : reps) {
    r.t_start = t;
    r.dt = dt;
    t += dt;
    for (int w = 0; w < wells; ++w) {
      WellReport rep;
      rep.kind = w % 3 == 2 ? WellKind::injector : WellKind::producer;
      if (rep.kind == WellKind::producer) {
        rep.oil_rate = rate(rng);
        rep.water_rate = rate(rng);
      } else {
        rep.injection_rate = rate(rng);
      }
      r.wells.push_back(rep);
    }
  }
  return reps;
}

}  // namespace

TEST(StepNpv, ZeroRatesOpexOnly) {
  ReportInterval r{200.0, 200.0, {}};
  const std::vector<ReportInterval> reps{r};
  EXPECT_NEAR(step_npv(reps, EconParams{}), -41000.0 * 200.0 / std::pow(1.1, 200.0 / 365.0), 1e-6);
  EXPECT_NEAR(step_npv(reps, EconParams{}), -7782747.29, 0.005);
}

TEST(StepNpv, PreConvertedProducer) {
  EconParams p;
  p.bbl_per_m3 = 1.0;
  WellReport w;
  w.oil_rate = 1000.0;
  const std::vector<ReportInterval> reps{{365.0, 365.0, {w}}};
  EXPECT_NEAR(step_npv(reps, p), 9622727.27, 0.005);
}

TEST(StepNpv, ZeroDiscountIsCashSum) {
  EconParams p;
  p.discount_rate_annual = 0;
  std::mt19937_64 rng(1);
  const auto reps = random_reports(rng);
  double cash = 0;
  for (const auto& r : reps) {
    double c = -p.opex;
    for (const auto& w : r.wells)
      c += p.bbl_per_m3 * (w.kind == WellKind::producer ? 70 * w.oil_rate - 7 * w.water_rate : -7 * w.injection_rate);
    cash += c * r.dt;
  }
  EXPECT_NEAR(step_npv(reps, p), cash, 1e-9 * std::abs(cash));
}

TEST(StepNpv, MatchesOracleOnRandomSets) {
  std::mt19937_64 rng(2);
  const EconParams p;
  for (int t = 0; t < 2000; ++t) {
    const auto reps = random_reports(rng);
    const double o = oracle_npv(reps, p);
    EXPECT_NEAR(step_npv(reps, p), o, 1e-9 * std::max(1.0, std::abs(o)));
  }
}

TEST(StepNpv, ScalesWithPrices) {
  std::mt19937_64 rng(3);
  const auto reps = random_reports(rng);
  EconParams p, q;
  q.oil_price *= 2.5;
  q.produced_water_cost *= 2.5;
  q.injected_water_cost *= 2.5;
  q.opex *= 2.5;
  EXPECT_NEAR(step_npv(reps, q), 2.5 * step_npv(reps, p), 1e-9 * std::abs(step_npv(reps, q)));
}

TEST(StepNpv, LinearInRate) {
  WellReport w;
  w.oil_rate = 100;
  std::vector<ReportInterval> a{{0, 50, {w}}};
  auto b = a;
  b[0].wells[0].oil_rate = 300;
  const EconParams p;
  const double base = step_npv(std::vector<ReportInterval>{{0, 50, {}}}, p);
  EXPECT_NEAR(step_npv(b, p) - base, 3 * (step_npv(a, p) - base), 1e-6);
}

TEST(StepNpv, DiscountAtWholeYears) {
  const EconParams p;
  for (int m = 0; m <= 10; ++m) EXPECT_EQ(discount_factor(365.0 * m, p), std::pow(1.1, -m));
}

TEST(StepNpv, GapsAndOverlapsRejected) {
  const EconParams p;
  EXPECT_THROW(step_npv(std::vector<ReportInterval>{{0, 50, {}}, {60, 50, {}}}, p), ArgumentError);
  EXPECT_THROW(step_npv(std::vector<ReportInterval>{{0, 50, {}}, {40, 50, {}}}, p), ArgumentError);
  EXPECT_THROW(step_npv(std::vector<ReportInterval>{}, p), ArgumentError);
  EXPECT_NO_THROW(step_npv(std::vector<ReportInterval>{{0, 50, {}}, {50, 50, {}}}, p));
}

TEST(Termination, Rule) {
  EXPECT_TRUE(should_terminate(-1, true));
  EXPECT_FALSE(should_terminate(-1, false));
  EXPECT_FALSE(should_terminate(0, true));
  EXPECT_FALSE(should_terminate(5, true));
}

TEST(EconJson, RoundTripAndUnknownKey) {
  EconParams p;
  p.oil_price = 55;
  EXPECT_EQ(econ_from_json(to_json(p)).oil_price, 55);
  EXPECT_THROW(econ_from_json(Json{{"oil", 1}}), ConfigError);
  EXPECT_THROW(econ_from_json(Json{{"opex", -1}}), ConfigError);
}
