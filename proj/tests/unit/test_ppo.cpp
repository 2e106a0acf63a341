#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "clrm/common/errors.hpp"
#include "clrm/geostat/clustering.hpp"
#include "clrm/geostat/realizations.hpp"
#include "clrm/ppo/ppo.hpp"
#include "clrm/ppo/rollout.hpp"
#include "clrm/ppo/trainer.hpp"

using namespace clrm;
using namespace clrm::ppo;

namespace {

Trajectory random_trajectory(std::mt19937_64& rng, int steps) {
  std::normal_distribution<double> n(0, 1);
  Trajectory t;
  for (int i = 0; i < steps; ++i) {
    StepRecord s;
    s.reward = 1e7 * n(rng);
    s.value = n(rng);
    s.done = i + 1 == steps;
    t.steps.push_back(s);
  }
  return t;
}

// Direct double sum: A_t = sum_l (gamma lambda)^l delta_{t+l}.
std::vector<double> gae_oracle(const Trajectory& t, double gamma, double lambda, double scale) {
  const std::size_t n = t.steps.size();
  std::vector<double> delta(n), out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double next = i + 1 < n ? t.steps[i + 1].value : 0.0;
    delta[i] = t.steps[i].reward * scale + gamma * next - t.steps[i].value;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t l = 0; i + l < n; ++l) out[i] += std::pow(gamma * lambda, static_cast<double>(l)) * delta[i + l];
  return out;
}

geostat::AssetSpec tiny_asset(int id, int producers, int injectors) {
  geostat::AssetSpec a;
  a.asset_id = id;
  a.name = std::string(1, static_cast<char>('A' + id - 1));
  a.grid = {8, 8, 1, 60.0, 60.0, 12.0};
  a.variogram = {geostat::VariogramKind::exponential, 4.0, 3.0};
  a.wells = geostat::place_wells(8, 8, producers, injectors, 40 + id);
  a.hard_data_seed = 50 + id;
  return a;
}

struct TinySetup {
  Scenario scenario;
  std::vector<geostat::ClusterAssignment> clusters;
};

TinySetup tiny_setup(int assets) {
  TinySetup s;
  for (int a = 1; a <= assets; ++a) {
    auto spec = tiny_asset(a, 2 + a % 2, 1);
    auto set = geostat::generate_realizations(spec, 6, 70 + a);
    const auto features = geostat::flow_response_features(spec, set, 5, 600.0);
    s.clusters.push_back(geostat::cluster_realizations(features, 2, 90 + a));
    s.scenario.assets.push_back(spec);
    s.scenario.sets.push_back(set);
  }
  return s;
}

policy::PolicyConfig tiny_policy(const Scenario& sc, std::uint64_t seed) {
  policy::PolicyConfig c;
  c.head = sc.assets.size() == 1 ? policy::HeadKind::dense : policy::HeadKind::embedding;
  c.input_width = sc.layout().width();
  c.wells = sc.assets.size() == 1 ? sc.assets[0].well_count() : sc.well_ids().total;
  c.n_m = 16;
  c.heads = 2;
  c.tau = 3;
  c.conv_filters = 8;
  c.mlp_hidden = 16;
  c.value_hidden = 8;
  c.seed = seed;
  return c;
}

PPOConfig tiny_ppo() {
  PPOConfig p;
  p.iterations = 3;
  p.epochs = 2;
  p.minibatch = 32;
  p.episodes_per_iteration = 4;
  p.termination_warmup = 1;
  p.eval_every = 2;
  return p;
}

}  // namespace

TEST(Gae, TelescopesToRewardSums) {
  std::mt19937_64 rng(1);
  Trajectory t = random_trajectory(rng, 7);
  for (auto& s : t.steps) s.value = 0;
  const Advantages a = compute_gae(t, 1.0, 1.0, 1e-7);
  for (int i = 0; i < 7; ++i) {
    double tail = 0;
    for (int j = i; j < 7; ++j) tail += t.steps[j].reward * 1e-7;
    EXPECT_NEAR(a.advantages[i], tail, 1e-12);
  }
}

TEST(Gae, SingleStep) {
  std::mt19937_64 rng(2);
  const Trajectory t = random_trajectory(rng, 1);
  const Advantages a = compute_gae(t, 1.0, 0.95, 1e-7);
  EXPECT_NEAR(a.advantages[0], t.steps[0].reward * 1e-7 - t.steps[0].value, 1e-15);
  EXPECT_NEAR(a.returns[0], t.steps[0].reward * 1e-7, 1e-15);
}

TEST(Gae, MatchesDoubleSumOracle) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> len(1, 19);
  std::uniform_real_distribution<double> u(0.5, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Trajectory t = random_trajectory(rng, len(rng));
    const double gamma = u(rng), lambda = u(rng);
    const auto a = compute_gae(t, gamma, lambda, 1e-7);
    const auto o = gae_oracle(t, gamma, lambda, 1e-7);
    for (std::size_t i = 0; i < o.size(); ++i) {
      EXPECT_NEAR(a.advantages[i], o[i], 1e-12);
      EXPECT_NEAR(a.returns[i], o[i] + t.steps[i].value, 1e-12);
    }
  }
}

TEST(Advantages, NormalizedBatchStatistics) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(3, 40);
  std::vector<double> a(1000);
  for (double& x : a) x = n(rng);
  normalize_advantages(a);
  double mean = 0, var = 0;
  for (double x : a) mean += x;
  mean /= a.size();
  for (double x : a) var += (x - mean) * (x - mean);
  var /= a.size();
  EXPECT_LE(std::abs(mean), 1e-10);
  EXPECT_NEAR(var, 1.0, 1e-6);
  std::vector<double> flat(5, 2.0);
  normalize_advantages(flat);
  for (double x : flat) EXPECT_EQ(x, 0.0);
}

TEST(Surrogate, UnitCases) {
  EXPECT_DOUBLE_EQ(clipped_objective(2.0, 1.0, 0.2), 1.2);
  EXPECT_DOUBLE_EQ(clipped_objective(1.0, -0.7, 0.2), -0.7);
  const std::vector<double> adv{0.5, -1.0, 2.0};
  const nn::Tensor ones = nn::Tensor::constant({3}, Eigen::VectorXd::Ones(3));
  EXPECT_NEAR(surrogate_loss(ones, adv, 0.2).item(), -(0.5 - 1.0 + 2.0) / 3, 1e-15);
}

TEST(Surrogate, BoundedByClippedAdvantage) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ratio(0.0, 5.0), adv(-10, 10);
  for (int i = 0; i < 100000; ++i) {
    const double r = ratio(rng), a = adv(rng);
    const double v = clipped_objective(r, a, 0.2);
    EXPECT_LE(v, 1.2 * std::abs(a) + 1e-12);
    if (a >= 0 || r <= 1.2) EXPECT_GE(v, -1.2 * std::abs(a) - 1e-12);
  }
  // With A < 0 the pessimistic minimum keeps the unclipped ratio, so there is no lower bound.
  EXPECT_DOUBLE_EQ(clipped_objective(3.0, -1.0, 0.2), -3.0);
}

TEST(Surrogate, ZeroAdvantageGivesZeroPolicyGradient) {
  nn::Tensor r = nn::Tensor::parameter({4}, (Eigen::VectorXd(4) << 0.5, 1.0, 1.1, 3.0).finished());
  surrogate_loss(r, {0, 0, 0, 0}, 0.2).backward();
  EXPECT_EQ(r.grad().norm(), 0.0);
}

TEST(PpoConfig, JsonAndValidation) {
  PPOConfig c;
  c.clip = 0.3;
  EXPECT_EQ(ppo_from_json(to_json(c)).clip, 0.3);
  EXPECT_THROW(ppo_from_json(Json{{"clipp", 0.1}}), ConfigError);
  EXPECT_THROW(ppo_from_json(Json{{"gamma", 0.0}}), ConfigError);
  EXPECT_THROW(ppo_from_json(Json{{"clip", -1.0}}), ConfigError);
}

TEST(Rollout, WarmupEpisodesRunNineteenSteps) {
  const TinySetup s = tiny_setup(2);
  const policy::Policy net(tiny_policy(s.scenario, 1));
  std::vector<EpisodeTask> tasks;
  for (int i = 0; i < 4; ++i) tasks.push_back({i % 2, i, 0.25 * i, false, false, 100u + i});
  const RolloutResult r = collect_rollouts(net, s.scenario, tasks);
  ASSERT_EQ(r.trajectories.size(), 4u);
  const auto layout = s.scenario.layout();
  for (const auto& t : r.trajectories) {
    EXPECT_EQ(t.steps.size(), 19u);
    EXPECT_DOUBLE_EQ(t.project_life, 4000.0);
    EXPECT_NO_THROW(t.validate());
    for (const auto& st : t.steps) {
      // Columns of the other asset stay zero.
      const int other = 1 - t.asset;
      EXPECT_EQ(st.observation.middleCols(layout.offset(other), layout.block_width(other)).norm(), 0.0);
      EXPECT_EQ(st.raw.size(), t.action_rows.size());
    }
    EXPECT_EQ(static_cast<int>(t.action_rows.size()), s.scenario.assets[t.asset].well_count());
  }
}

TEST(Rollout, SerialAndParallelAgree) {
  const TinySetup s = tiny_setup(1);
  const policy::Policy net(tiny_policy(s.scenario, 2));
  std::vector<EpisodeTask> tasks;
  for (int i = 0; i < 3; ++i) tasks.push_back({0, i, 0.5, true, false, 7u + i});
  RolloutOptions serial;
  serial.exec = Exec::serial;
  const auto a = collect_rollouts(net, s.scenario, tasks, serial);
  const auto b = collect_rollouts(net, s.scenario, tasks);
  ASSERT_EQ(a.trajectories.size(), b.trajectories.size());
  for (std::size_t i = 0; i < a.trajectories.size(); ++i) {
    ASSERT_EQ(a.trajectories[i].steps.size(), b.trajectories[i].steps.size());
    for (std::size_t k = 0; k < a.trajectories[i].steps.size(); ++k) {
      EXPECT_EQ(a.trajectories[i].steps[k].reward, b.trajectories[i].steps[k].reward);
      EXPECT_EQ(a.trajectories[i].steps[k].raw, b.trajectories[i].steps[k].raw);
    }
  }
}

TEST(Rollout, TerminationEndsOnNegativeStep) {
  const TinySetup s = tiny_setup(1);
  const policy::Policy net(tiny_policy(s.scenario, 3));
  std::vector<EpisodeTask> tasks;
  for (int i = 0; i < 6; ++i) tasks.push_back({0, i, 1.0, true, false, 11u + i});
  for (const auto& t : collect_rollouts(net, s.scenario, tasks).trajectories) {
    for (std::size_t k = 0; k + 1 < t.steps.size(); ++k) EXPECT_GE(t.steps[k].reward, 0.0);
    if (t.steps.size() < 19) EXPECT_LT(t.steps.back().reward, 0.0);
  }
}

TEST(Update, FirstMinibatchReplaysRatioOne) {
  const TinySetup s = tiny_setup(2);
  policy::Policy net(tiny_policy(s.scenario, 4));
  nn::Adam adam(net.params());
  std::vector<EpisodeTask> tasks;
  for (int i = 0; i < 4; ++i) tasks.push_back({i % 2, i + 1, 0.7, false, false, 21u + i});
  const auto r = collect_rollouts(net, s.scenario, tasks);
  PPOConfig cfg;
  cfg.epochs = 2;
  cfg.minibatch = 32;
  std::mt19937_64 rng(1);
  const UpdateStats st = ppo_update(net, adam, r.trajectories, cfg, 1e-4, rng);
  EXPECT_FALSE(st.aborted);
  EXPECT_LE(st.first_ratio_deviation, 1e-9);
  EXPECT_EQ(st.minibatches, 2 * 3);  // 76 steps in minibatches of 32
  EXPECT_EQ(adam.step_count(), 6);
}

TEST(Update, NonFiniteLossRestoresParameters) {
  const TinySetup s = tiny_setup(1);
  policy::Policy net(tiny_policy(s.scenario, 5));
  nn::Adam adam(net.params());
  std::vector<EpisodeTask> tasks{{0, 1, 0.7, false, false, 3u}, {0, 2, 0.2, false, false, 4u}};
  const auto r = collect_rollouts(net, s.scenario, tasks);
  PPOConfig cfg;
  cfg.minibatch = 16;
  cfg.reward_scale = 1e305;  // returns overflow, so the value loss is infinite
  const Eigen::VectorXd before = net.params().flat_values();
  std::mt19937_64 rng(1);
  const UpdateStats st = ppo_update(net, adam, r.trajectories, cfg, 1e-4, rng);
  EXPECT_TRUE(st.aborted);
  EXPECT_EQ(net.params().flat_values(), before);
  EXPECT_EQ(adam.step_count(), 0);
}

TEST(Update, MinibatchLargerThanBatchRejected) {
  const TinySetup s = tiny_setup(1);
  policy::Policy net(tiny_policy(s.scenario, 6));
  nn::Adam adam(net.params());
  const auto r = collect_rollouts(net, s.scenario, {{0, 1, 0.7, false, false, 3u}});
  PPOConfig cfg;
  std::mt19937_64 rng(1);
  EXPECT_THROW(ppo_update(net, adam, r.trajectories, cfg, 1e-4, rng), ArgumentError);
}

TEST(Trainer, LogLengthWarmupAndDisjointness) {
  TinySetup s = tiny_setup(2);
  TrainerOptions opt;
  opt.ppo = tiny_ppo();
  opt.seed = 9;
  Trainer tr(s.scenario, s.clusters, tiny_policy(s.scenario, 9), opt);
  tr.run();
  ASSERT_EQ(tr.log().size(), 3u);
  EXPECT_EQ(tr.log()[0].min_steps, 19);  // warmup covers iteration 1
  std::set<std::pair<int, int>> test;
  for (int a = 0; a < 2; ++a)
    for (int r : s.clusters[a].centroid_members) test.insert({a, r});
  for (const auto& l : tr.log()) {
    EXPECT_EQ(l.episodes, 4);
    for (const auto& m : l.members) EXPECT_EQ(test.count(m), 0u);
  }
  ASSERT_EQ(tr.evaluations().size(), 3u);  // iterations 0, 2 and 3
  EXPECT_EQ(tr.evaluations()[0].iteration, 0);
  EXPECT_EQ(tr.evaluations()[2].iteration, 3);
  for (const auto& e : tr.evaluations()) {
    double total = 0;
    int n = 0;
    for (std::size_t a = 0; a < e.npvs.size(); ++a) {
      for (std::size_t i = 0; i < e.npvs[a].size(); ++i) {
        EXPECT_EQ(test.count({static_cast<int>(a), e.realizations[a][i]}), 1u);
        total += e.npvs[a][i];
        ++n;
      }
    }
    EXPECT_NEAR(e.expected_npv, total / n, 1e-12 * std::abs(total / n));
  }
}

TEST(Trainer, DeterministicAndResumable) {
  TinySetup s = tiny_setup(1);
  const auto dir = std::filesystem::temp_directory_path() / "clrm_trainer_resume";
  std::filesystem::remove_all(dir);
  TrainerOptions opt;
  opt.ppo = tiny_ppo();
  opt.seed = 12;
  opt.checkpoint_dir = dir;
  Trainer a(s.scenario, s.clusters, tiny_policy(s.scenario, 12), opt);
  a.run();
  opt.checkpoint_dir.clear();
  Trainer b(s.scenario, s.clusters, tiny_policy(s.scenario, 12), opt);
  b.run();
  EXPECT_EQ(training_log_table(a.log()).to_string(), training_log_table(b.log()).to_string());
  Trainer c(s.scenario, s.clusters, tiny_policy(s.scenario, 12), opt);
  c.resume(checkpoint_name(dir, 2));
  EXPECT_EQ(c.completed_iterations(), 2);
  c.run();
  EXPECT_EQ(training_log_table(a.log()).to_string(), training_log_table(c.log()).to_string());
  EXPECT_EQ(a.policy().params().flat_values(), c.policy().params().flat_values());
  // Evaluating one checkpoint twice gives the same record.
  EXPECT_EQ(to_json(c.evaluate(3)), to_json(c.evaluate(3)));
  std::filesystem::remove_all(dir);
}

TEST(Trainer, EpisodesMustSplitOverClusters) {
  TinySetup s = tiny_setup(1);
  TrainerOptions opt;
  opt.ppo = tiny_ppo();
  opt.ppo.episodes_per_iteration = 5;
  EXPECT_THROW(Trainer(s.scenario, s.clusters, tiny_policy(s.scenario, 1), opt), ConfigError);
}
