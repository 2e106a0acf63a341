#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <utility>
#include <vector>

#include "clrm/common/csv.hpp"
#include "clrm/common/exec.hpp"
#include "clrm/geostat/clustering.hpp"
#include "clrm/nn/params.hpp"
#include "clrm/policy/policy.hpp"
#include "clrm/ppo/ppo.hpp"
#include "clrm/ppo/rollout.hpp"

namespace clrm::ppo {

struct IterationLog {
  int iteration = 0;  ///< 1-based
  double expected_npv = 0.0;
  double avg_project_life = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double first_ratio_deviation = 0.0;
  double lr = 0.0;
  int episodes = 0;
  int failed = 0;
  int min_steps = 0;
  int max_steps = 0;
  bool aborted = false;
  std::vector<geostat::GlobalMember> members;  ///< (asset, realization) of every episode
};

struct EvaluationRecord {
  int iteration = 0;  ///< 0 is the untrained policy
  std::vector<std::vector<int>> realizations;  ///< per asset
  std::vector<std::vector<double>> npvs;       ///< per asset, aligned with realizations
  double expected_npv = 0.0;                   ///< mean over every test realization
  bool selected = false;

  std::vector<double> asset_means() const;
};

Json to_json(const IterationLog& l);
IterationLog iteration_log_from_json(const Json& j);
Json to_json(const EvaluationRecord& r);
EvaluationRecord evaluation_from_json(const Json& j);
CsvTable training_log_table(const std::vector<IterationLog>& log);

struct TrainerOptions {
  PPOConfig ppo;
  std::uint64_t seed = 0;
  Exec exec = Exec::parallel;
  std::filesystem::path checkpoint_dir;  ///< empty: no checkpoints
  std::function<void(const IterationLog&)> on_iteration;
  std::function<void(const EvaluationRecord&)> on_evaluation;
};

/// PPO training of one policy on a scenario. One asset with its clusters
/// gives an individual run; several assets sample from merged global clusters.
/// Each cluster's centroid member is the test set and is never trained on.
class Trainer {
 public:
  Trainer(Scenario scenario, std::vector<geostat::ClusterAssignment> clusters, policy::PolicyConfig policy_config,
          TrainerOptions options);

  /// Runs the remaining iterations up to ppo.iterations.
  void run();
  /// Runs one iteration (the next one) and returns its log.
  const IterationLog& step();
  /// Restores policy, optimizer, logs and iteration counter from a checkpoint directory.
  void resume(const std::filesystem::path& checkpoint);

  EvaluationRecord evaluate(int iteration, double epsilon_c = 1.0, bool keep_traces = false,
                            std::vector<Trajectory>* trajectories = nullptr) const;
  std::vector<EpisodeTask> training_tasks(int iteration) const;
  std::vector<EpisodeTask> test_tasks(double epsilon_c) const;
  /// Saves policy and optimizer under checkpoint_dir/iter-NNNNN; returns the directory.
  std::filesystem::path save(int iteration) const;

  int completed_iterations() const { return iteration_; }
  const std::vector<IterationLog>& log() const { return log_; }
  const std::vector<EvaluationRecord>& evaluations() const { return evaluations_; }
  const policy::Policy& policy() const { return net_; }
  policy::Policy& policy() { return net_; }
  const Scenario& scenario() const { return scenario_; }
  const std::vector<geostat::ClusterAssignment>& clusters() const { return clusters_; }
  int per_cluster() const { return per_cluster_; }

 private:
  void record_evaluation(int iteration);

  Scenario scenario_;
  std::vector<geostat::ClusterAssignment> clusters_;
  TrainerOptions options_;
  policy::Policy net_;
  nn::Adam adam_;
  int per_cluster_ = 0;
  int iteration_ = 0;
  std::vector<IterationLog> log_;
  std::vector<EvaluationRecord> evaluations_;
};

std::filesystem::path checkpoint_name(const std::filesystem::path& dir, int iteration);

}  // namespace clrm::ppo
