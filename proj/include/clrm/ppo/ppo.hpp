#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clrm/common/json_util.hpp"
#include "clrm/env/environment.hpp"
#include "clrm/nn/params.hpp"
#include "clrm/policy/policy.hpp"

namespace clrm::ppo {

struct PPOConfig {
  int iterations = 1000;
  int epochs = 10;
  int minibatch = 128;
  double clip = 0.2;
  double lr_first = 1e-4;
  double lr_last = 1e-5;
  double gae_lambda = 0.95;
  double gamma = 1.0;
  double entropy_coeff = 0.003;
  double value_coeff = 0.5;
  double reward_scale = 1e-7;  ///< per USD
  int episodes_per_iteration = 160;
  int termination_warmup = 100;  ///< early termination only after this many iterations
  int eval_every = 10;
  double max_failed_fraction = 0.05;

  void validate() const;
};

Json to_json(const PPOConfig& c);
/// Starts from `base` and applies the keys present in j.
PPOConfig ppo_from_json(const Json& j, PPOConfig base = {});

struct StepRecord {
  Eigen::MatrixXd observation;  ///< global input the action was chosen from
  Eigen::VectorXd memory;       ///< tau x n_m policy states before this step
  int memory_valid = 0;
  std::vector<double> raw;      ///< pre-clip draw
  std::vector<double> action;   ///< clipped
  double logp = 0.0;
  double value = 0.0;
  double reward = 0.0;  ///< USD
  bool done = false;
};

struct Trajectory {
  int asset = 0;
  int realization = 0;
  double epsilon_c = 1.0;
  double project_life = 0.0;  ///< days
  std::vector<int> action_rows;
  std::vector<StepRecord> steps;
  std::vector<env::TraceRow> trace;  ///< filled only on request

  double npv() const;
  void validate() const;
};

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// GAE with scaled rewards; the value after a done step (and after the last step) is 0.
Advantages compute_gae(const Trajectory& t, double gamma, double lambda, double reward_scale);
/// Zero mean, unit variance (population); a constant batch becomes all zeros.
void normalize_advantages(std::vector<double>& a);
/// min(rho * A, clip(rho, 1 - eps, 1 + eps) * A).
double clipped_objective(double ratio, double advantage, double clip);

/// -mean(min(rho * A, clip(rho) * A)) over a batch of ratios.
nn::Tensor surrogate_loss(const nn::Tensor& ratio, const std::vector<double>& advantages, double clip);

struct UpdateStats {
  double policy_loss = 0.0;  ///< mean over minibatches
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double first_ratio_deviation = 0.0;  ///< max |rho - 1| in epoch 0, minibatch 0
  int minibatches = 0;
  bool aborted = false;
  std::string abort_reason;
};

/// Clipped-surrogate update over the collected trajectories. Restores the
/// parameters and optimizer state from before the call when a loss is not finite.
UpdateStats ppo_update(policy::Policy& net, nn::Adam& adam, const std::vector<Trajectory>& batch,
                       const PPOConfig& cfg, double lr, std::mt19937_64& rng);

}  // namespace clrm::ppo
