#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "clrm/common/errors.hpp"
#include "clrm/env/environment.hpp"
#include "clrm/geostat/realizations.hpp"

using namespace clrm;
using namespace clrm::env;

namespace {

geostat::AssetSpec tiny_asset(int producers, int injectors, std::uint64_t seed = 1) {
  geostat::AssetSpec a;
  a.grid = {10, 10, 1, 60.0, 60.0, 12.0};
  a.variogram = {geostat::VariogramKind::exponential, 4.0, 3.0};
  a.wells = geostat::place_wells(10, 10, producers, injectors, seed);
  return a;
}

std::shared_ptr<const sim::Simulator> simulator_for(const geostat::AssetSpec& a, double log_perm) {
  std::vector<double> field(a.grid.cell_count(), log_perm);
  return std::make_shared<const sim::Simulator>(a.reservoir(field), sim::FluidRock{});
}

// Independent discounted-cash-flow replay of a trace.
double replay_npv(const std::vector<TraceRow>& trace, const econ::EconParams& p) {
  double total = 0;
  for (const auto& r : trace) {
    if (r.control_step == 0) continue;
    const double b = p.bbl_per_m3;
    const double cash = r.report.kind == sim::WellKind::producer
                            ? b * (p.oil_price * r.report.oil_rate - p.produced_water_cost * r.report.water_rate)
                            : -b * p.injected_water_cost * r.report.injection_rate;
    total += cash * r.dt * std::exp(-std::log(1.0 + p.discount_rate_annual) * r.time / 365.0);
  }
  // opex once per interval (count distinct interval starts)
  std::vector<std::pair<double, double>> intervals;
  for (const auto& r : trace)
    if (r.control_step > 0) intervals.emplace_back(r.time, r.dt);
  std::sort(intervals.begin(), intervals.end());
  intervals.erase(std::unique(intervals.begin(), intervals.end()), intervals.end());
  for (const auto& [t, dt] : intervals) total -= p.opex * dt * std::exp(-std::log(1.1) * t / 365.0);
  return total;
}

}  // namespace

TEST(WellIds, Table1Blocks) {
  const auto t = build_well_ids(std::vector<int>{9, 16, 11, 14});
  EXPECT_EQ(t.total, 50);
  EXPECT_EQ(t.asset(0).front(), 1);
  EXPECT_EQ(t.asset(0).back(), 9);
  EXPECT_EQ(t.asset(1).front(), 10);
  EXPECT_EQ(t.asset(1).back(), 25);
  EXPECT_EQ(t.asset(2).front(), 26);
  EXPECT_EQ(t.asset(2).back(), 36);
  EXPECT_EQ(t.asset(3).front(), 37);
  EXPECT_EQ(t.asset(3).back(), 50);
}

TEST(WellIds, SingleAssetAndEmpty) {
  const auto t = build_well_ids(std::vector<int>{7});
  EXPECT_EQ(t.asset(0), (std::vector<int>{1, 2, 3, 4, 5, 6, 7}));
  EXPECT_THROW(build_well_ids(std::vector<int>{}), ArgumentError);
}

TEST(WellIds, PermutationsStayPartitions) {
  std::vector<int> counts{3, 5, 2};
  std::sort(counts.begin(), counts.end());
  do {
    const auto t = build_well_ids(counts);
    std::vector<int> all;
    for (std::size_t n = 0; n < counts.size(); ++n) {
      EXPECT_EQ(static_cast<int>(t.asset(n).size()), counts[n]);
      all.insert(all.end(), t.asset(n).begin(), t.asset(n).end());
    }
    std::vector<int> expect(10);
    std::iota(expect.begin(), expect.end(), 1);
    EXPECT_EQ(all, expect);
  } while (std::next_permutation(counts.begin(), counts.end()));
}

TEST(Action, ProducerExample) {
  const std::vector<sim::WellSpec> w{sim::default_producer(0, 0)};
  const std::vector<double> u{300.0}, a{0.5};
  EXPECT_NEAR(apply_action(u, a, 1.0, w)[0], 300.0 * (1 + 0.5 * 65.0 / 280.0), 1e-12);
  EXPECT_NEAR(apply_action(u, a, 1.0, w)[0], 334.82, 0.005);
}

TEST(Action, ZeroEpsilonKeepsSetting) {
  const std::vector<sim::WellSpec> w{sim::default_producer(0, 0), sim::default_injector(1, 1)};
  const std::vector<double> u{301.5, 377.25}, a{0.9, -1.0};
  EXPECT_EQ(apply_action(u, a, 0.0, w), u);
}

TEST(Action, ClipAtUpperBound) {
  const std::vector<sim::WellSpec> w{sim::default_producer(0, 0)};
  const std::vector<double> u{345.0}, a{1.0};
  EXPECT_EQ(apply_action(u, a, 1.0, w)[0], 345.0);
}

TEST(Action, RelativeChangeBoundProperty) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> unit(0, 1), sym(-1, 1);
  const std::vector<sim::WellSpec> w{sim::default_producer(0, 0), sim::default_injector(1, 1)};
  for (int t = 0; t < 20000; ++t) {
    const std::vector<double> u{280 + 65 * unit(rng), 355 + 95 * unit(rng)};
    const std::vector<double> a{sym(rng), sym(rng)};
    const double eps = unit(rng);
    const auto next = apply_action(u, a, eps, w);
    for (int k = 0; k < 2; ++k) {
      EXPECT_LE(std::abs(next[k] - u[k]) / u[k], eps * w[k].max_relative_change() + 1e-12);
      EXPECT_GE(next[k], w[k].bhp_lower);
      EXPECT_LE(next[k], w[k].bhp_upper);
    }
  }
}

TEST(Action, FirstStepLinearMap) {
  const std::vector<sim::WellSpec> w{sim::default_producer(0, 0), sim::default_injector(1, 1)};
  EXPECT_EQ(first_step_settings(std::vector<double>{0, 0}, w), (std::vector<double>{312.5, 402.5}));
  EXPECT_EQ(first_step_settings(std::vector<double>{-1, -1}, w), (std::vector<double>{280, 355}));
  EXPECT_EQ(first_step_settings(std::vector<double>{1, 1}, w), (std::vector<double>{345, 450}));
}

TEST(Normalization, ScaleDefinitionsAndRoundTrip) {
  const auto a = tiny_asset(2, 1);
  const auto& w = a.wells;
  sim::ReportInterval rep;
  rep.wells.resize(3);
  rep.wells[0] = {sim::WellKind::producer, 1526.0, 300.0, 0.0, 280.0, 300.0 / 1826.0};
  rep.wells[1] = {sim::WellKind::producer, 20.5, 0.0, 0.0, 333.3, 0.0};
  rep.wells[2] = {sim::WellKind::injector, 0.0, 0.0, 777.0, 401.0, 0.0};
  const std::vector<sim::ReportInterval> reps{rep, rep};
  const std::vector<double> u{290.0, 345.0, 420.0};
  const auto x = normalize_observation(reps, u, w);
  ASSERT_EQ(x.rows(), 2);
  ASSERT_EQ(x.cols(), 4 * 2 + 3 * 1);
  EXPECT_EQ(x(0, 0), 1.0);
  EXPECT_EQ(x(0, 4), 0.0);
  EXPECT_EQ(x(0, 9), 1.0);
  EXPECT_TRUE((x.array() >= 0).all());
  const auto raw = denormalize_observation(x, w);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(raw.u_prev[k], u[k], 1e-12);
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(raw.reports[0].wells[k].bhp, rep.wells[k].bhp, 1e-12);
    EXPECT_NEAR(raw.reports[0].wells[k].oil_rate, rep.wells[k].oil_rate, 1e-12);
    EXPECT_NEAR(raw.reports[0].wells[k].water_rate, rep.wells[k].water_rate, 1e-9);
    EXPECT_NEAR(raw.reports[0].wells[k].injection_rate, rep.wells[k].injection_rate, 1e-12);
  }
}

TEST(GlobalInput, Example1Widths) {
  std::vector<geostat::AssetSpec> assets;
  for (char c = 'A'; c <= 'D'; ++c) assets.push_back(geostat::table1_asset(c));
  const GlobalLayout layout(assets);
  EXPECT_EQ(layout.block_width(0), 32);
  EXPECT_EQ(layout.width(), 4 * 34 + 3 * 16 + 1);
  EXPECT_EQ(layout.width(), 185);
}

TEST(Episode, ResetBlockAndEpsilonColumn) {
  const auto a = tiny_asset(2, 1, 1), b = tiny_asset(3, 2, 2);
  const GlobalLayout layout({a, b});
  EpisodeConfig cfg;
  cfg.asset_index = 1;
  cfg.epsilon_c = 0.37;
  Environment env(simulator_for(b, 4.0), layout, {}, cfg);
  const auto x = env.reset();
  ASSERT_EQ(x.rows(), 4);
  ASSERT_EQ(x.cols(), layout.width());
  EXPECT_TRUE((x.col(layout.epsilon_column()).array() == 0.37).all());
  EXPECT_TRUE((x.middleCols(layout.offset(0), layout.block_width(0)).array() == 0.0).all());
  EXPECT_GT(x.middleCols(layout.offset(1), layout.block_width(1)).cwiseAbs().sum(), 0.0);
  EXPECT_EQ(env.project_life(), 200.0);
}

TEST(Episode, NineteenStepsWithoutTermination) {
  const auto a = tiny_asset(2, 1);
  EpisodeConfig cfg;
  cfg.allow_early_termination = false;
  Environment env(simulator_for(a, 4.0), GlobalLayout({a}), {}, cfg);
  env.reset();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> sym(-1, 1);
  double rewards = 0;
  int steps = 0;
  std::vector<double> prev;
  while (!env.done()) {
    const std::vector<double> act{sym(rng), sym(rng), sym(rng)};
    const auto out = env.step(act);
    rewards += out.reward;
    ++steps;
    if (!prev.empty()) {
      for (int w = 0; w < 3; ++w)
        EXPECT_LE(std::abs(out.info.settings[w] - prev[w]) / prev[w], a.wells[w].max_relative_change() + 1e-12);
    }
    prev = out.info.settings;
  }
  EXPECT_EQ(steps, 19);
  EXPECT_EQ(env.project_life(), 4000.0);
  EXPECT_NEAR(rewards, replay_npv(env.trace(), {}), 1e-9 * std::abs(rewards));
  EXPECT_THROW(env.step(std::vector<double>{0, 0, 0}), StateError);
}

TEST(Episode, NegativeStepTerminates) {
  const auto a = tiny_asset(1, 1);
  Environment env(simulator_for(a, 0.0), GlobalLayout({a}), {}, EpisodeConfig{});
  env.reset();
  const auto out = env.step(std::vector<double>{-1, -1});
  EXPECT_LT(out.reward, 0);
  EXPECT_TRUE(out.done);
  EXPECT_EQ(env.project_life(), 400.0);
}

TEST(Episode, StepBeforeResetAndBadActionSize) {
  const auto a = tiny_asset(1, 1);
  Environment env(simulator_for(a, 4.0), GlobalLayout({a}), {}, EpisodeConfig{});
  EXPECT_THROW(env.step(std::vector<double>{0, 0}), StateError);
  env.reset();
  EXPECT_THROW(env.step(std::vector<double>{0}), ArgumentError);
}

TEST(Episode, ZeroEpsilonHoldsSettings) {
  const auto a = tiny_asset(2, 2);
  EpisodeConfig cfg;
  cfg.epsilon_c = 0.0;
  cfg.allow_early_termination = false;
  cfg.max_control_steps = 5;
  Environment env(simulator_for(a, 4.0), GlobalLayout({a}), {}, cfg);
  env.reset();
  const auto first = env.step(std::vector<double>{0.3, -0.2, 0.9, -0.7}).info.settings;
  while (!env.done()) EXPECT_EQ(env.step(std::vector<double>{1, -1, 1, -1}).info.settings, first);
}

TEST(Episode, TraceCsv) {
  const auto a = tiny_asset(1, 1);
  EpisodeConfig cfg;
  cfg.max_control_steps = 2;
  cfg.allow_early_termination = false;
  Environment env(simulator_for(a, 4.0), GlobalLayout({a}), {}, cfg);
  env.reset();
  env.step(std::vector<double>{0, 0});
  env.step(std::vector<double>{0, 0});
  const auto t = trace_table(env.trace());
  EXPECT_EQ(t.rows.size(), 3u * 4u * 2u);
  EXPECT_EQ(parse_csv(t.to_string()).to_string(), t.to_string());
}
