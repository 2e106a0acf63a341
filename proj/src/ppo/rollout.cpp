#include "clrm/ppo/rollout.hpp"

#include <random>

#include "clrm/common/errors.hpp"
#include "clrm/sim/simulator.hpp"

namespace clrm::ppo {

std::shared_ptr<const sim::Simulator> Scenario::simulator(int asset, int realization) const {
  const auto& set = sets.at(asset);
  if (realization < 0 || realization >= set.count()) {
    throw ArgumentError("scenario: realization " + std::to_string(realization) + " outside asset " +
                        std::to_string(asset));
  }
  return std::make_shared<const sim::Simulator>(assets.at(asset).reservoir(set.fields[realization]),
                                                sim::FluidRock{});
}

void Scenario::validate() const {
  if (assets.empty()) throw ConfigError("scenario: no assets");
  if (assets.size() != sets.size()) throw ConfigError("scenario: one realization set per asset is required");
  for (std::size_t a = 0; a < assets.size(); ++a) {
    assets[a].validate();
    if (sets[a].cell_count() != assets[a].grid.cell_count() || sets[a].count() == 0) {
      throw ConfigError("scenario: realization set of asset " + assets[a].name + " does not match its grid");
    }
  }
  econ.validate();
}

std::vector<int> action_rows(const policy::PolicyConfig& config, const Scenario& scenario, int asset) {
  std::vector<int> rows;
  if (config.head == policy::HeadKind::dense) {
    for (int w = 0; w < scenario.assets.at(asset).well_count(); ++w) rows.push_back(w);
  } else {
    const env::WellIdTable ids = scenario.well_ids();
    for (int id : ids.asset(asset)) rows.push_back(id - 1);
  }
  return rows;
}

namespace {

struct Episode {
  std::unique_ptr<env::Environment> env;
  Trajectory traj;
  policy::Memory memory;
  Eigen::MatrixXd observation;
  std::mt19937_64 rng;
  bool failed = false;
  std::string failure;
};

}  // namespace

RolloutResult collect_rollouts(const policy::Policy& net, const Scenario& scenario,
                               const std::vector<EpisodeTask>& tasks, const RolloutOptions& options) {
  const auto& pc = net.config();
  const env::GlobalLayout layout = scenario.layout();
  if (layout.width() != pc.input_width) {
    throw ArgumentError("rollout: policy input width " + std::to_string(pc.input_width) + " differs from scenario width " +
                        std::to_string(layout.width()));
  }
  std::vector<Episode> eps;
  eps.reserve(tasks.size());
  for (const auto& t : tasks) {
    env::EpisodeConfig cfg;
    cfg.asset_index = t.asset;
    cfg.realization = t.realization;
    cfg.epsilon_c = t.epsilon_c;
    cfg.allow_early_termination = t.allow_termination;
    cfg.n_reports = pc.n_d;
    Episode e{nullptr, {}, policy::Memory(pc.tau, pc.n_m), {}, std::mt19937_64(t.seed), false, {}};
    e.traj.asset = t.asset;
    e.traj.realization = t.realization;
    e.traj.epsilon_c = t.epsilon_c;
    e.traj.action_rows = action_rows(pc, scenario, t.asset);
    e.env = std::make_unique<env::Environment>(scenario.simulator(t.asset, t.realization), layout, scenario.econ, cfg);
    eps.push_back(std::move(e));
  }

  for_each_index(options.exec, eps.size(), [&](std::size_t i) {
    try {
      eps[i].observation = eps[i].env->reset();
    } catch (const sim::SimulationError& err) {
      eps[i].failed = true;
      eps[i].failure = std::string("reset: ") + err.what();
    }
  });

  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < eps.size(); ++i)
    if (!eps[i].failed) active.push_back(i);
  while (!active.empty()) {
    policy::PolicyBatch batch;
    batch.memory_slots = pc.tau;
    for (std::size_t i : active) {
      batch.inputs.push_back(eps[i].observation);
      batch.memory.push_back(eps[i].memory.slots());
      batch.memory_valid.push_back(eps[i].memory.valid());
      batch.action_rows.push_back(eps[i].traj.action_rows);
    }
    policy::PolicyOutput out;
    {
      nn::NoGradGuard guard;
      out = net.forward(batch);
    }
    const nn::ConstMatrixMap states = out.state.matrix();
    std::vector<StepRecord> records(active.size());
    for (std::size_t j = 0; j < active.size(); ++j) {
      Episode& e = eps[active[j]];
      const int lo = out.pair_offset[j], hi = out.pair_offset[j + 1];
      const std::span<const double> mu(out.mu.value().data() + lo, hi - lo);
      const std::span<const double> ls(out.log_sigma.value().data() + lo, hi - lo);
      const policy::Sample s = policy::sample_action(mu, ls, e.rng, tasks[active[j]].deterministic);
      StepRecord& r = records[j];
      r.observation = e.observation;
      r.memory = e.memory.slots();
      r.memory_valid = e.memory.valid();
      r.raw = s.raw;
      r.action = s.action;
      r.logp = s.logp;
      r.value = out.value.value()[j];
      e.memory.push(states.row(j).transpose());
    }
    for_each_index(options.exec, active.size(), [&](std::size_t j) {
      Episode& e = eps[active[j]];
      try {
        env::StepOutput o = e.env->step(records[j].action);
        records[j].reward = o.reward;
        records[j].done = o.done;
        e.observation = std::move(o.observation);
        e.traj.steps.push_back(std::move(records[j]));
        e.traj.project_life = o.info.project_life;
      } catch (const sim::SimulationError& err) {
        e.failed = true;
        e.failure = "step " + std::to_string(e.env->control_step() + 1) + ": " + err.what();
      }
    });
    std::vector<std::size_t> next;
    for (std::size_t i : active)
      if (!eps[i].failed && !eps[i].env->done()) next.push_back(i);
    active = std::move(next);
  }

  RolloutResult result;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (eps[i].failed) {
      result.failures.push_back("asset " + std::to_string(tasks[i].asset) + " realization " +
                                std::to_string(tasks[i].realization) + ": " + eps[i].failure);
      continue;
    }
    if (options.keep_traces) eps[i].traj.trace = eps[i].env->trace();
    result.trajectories.push_back(std::move(eps[i].traj));
    result.task_of.push_back(static_cast<int>(i));
  }
  if (!tasks.empty() &&
      static_cast<double>(result.failures.size()) > options.max_failed_fraction * static_cast<double>(tasks.size())) {
    throw RolloutError("rollout: " + std::to_string(result.failures.size()) + " of " + std::to_string(tasks.size()) +
                       " episodes failed; first: " + result.failures.front());
  }
  return result;
}

}  // namespace clrm::ppo
