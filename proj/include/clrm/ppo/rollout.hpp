#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "clrm/common/exec.hpp"
#include "clrm/econ/economics.hpp"
#include "clrm/env/environment.hpp"
#include "clrm/geostat/asset.hpp"
#include "clrm/geostat/realizations.hpp"
#include "clrm/policy/policy.hpp"
#include "clrm/ppo/ppo.hpp"

namespace clrm::ppo {

/// Assets and ensembles one policy acts on, in global-input order.
struct Scenario {
  std::vector<geostat::AssetSpec> assets;
  std::vector<geostat::RealizationSet> sets;
  econ::EconParams econ;

  env::GlobalLayout layout() const { return env::GlobalLayout(assets); }
  env::WellIdTable well_ids() const { return env::build_well_ids(assets); }
  std::shared_ptr<const sim::Simulator> simulator(int asset, int realization) const;
  void validate() const;
};

/// Head rows of each asset's wells: consecutive from 0 for the dense head,
/// global well ID - 1 for the embedding head.
std::vector<int> action_rows(const policy::PolicyConfig& config, const Scenario& scenario, int asset);

struct EpisodeTask {
  int asset = 0;
  int realization = 0;
  double epsilon_c = 1.0;
  bool allow_termination = true;
  bool deterministic = false;
  std::uint64_t seed = 0;
};

struct RolloutOptions {
  Exec exec = Exec::parallel;
  bool keep_traces = false;
  double max_failed_fraction = 0.05;
};

struct RolloutResult {
  std::vector<Trajectory> trajectories;  ///< in task order, failed episodes left out
  std::vector<int> task_of;              ///< task index of each trajectory
  std::vector<std::string> failures;     ///< one message per dropped episode
};

class RolloutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runs every task to completion in lockstep: one batched policy evaluation
/// per control step over the active episodes, environment steps in parallel.
/// Throws RolloutError when more than max_failed_fraction of episodes fail.
RolloutResult collect_rollouts(const policy::Policy& net, const Scenario& scenario,
                               const std::vector<EpisodeTask>& tasks, const RolloutOptions& options = {});

}  // namespace clrm::ppo
