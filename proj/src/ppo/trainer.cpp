#include "clrm/ppo/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>

#include "clrm/common/errors.hpp"

namespace clrm::ppo {

std::vector<double> EvaluationRecord::asset_means() const {
  std::vector<double> m;
  for (const auto& v : npvs) m.push_back(v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / v.size());
  return m;
}

Json to_json(const IterationLog& l) {
  Json members = Json::array();
  for (const auto& [a, r] : l.members) members.push_back({a, r});
  return Json{{"iteration", l.iteration},
              {"expected_npv", l.expected_npv},
              {"avg_project_life", l.avg_project_life},
              {"policy_loss", l.policy_loss},
              {"value_loss", l.value_loss},
              {"entropy", l.entropy},
              {"clip_fraction", l.clip_fraction},
              {"first_ratio_deviation", l.first_ratio_deviation},
              {"lr", l.lr},
              {"episodes", l.episodes},
              {"failed", l.failed},
              {"min_steps", l.min_steps},
              {"max_steps", l.max_steps},
              {"aborted", l.aborted},
              {"members", members}};
}

IterationLog iteration_log_from_json(const Json& j) {
  IterationLog l;
  l.iteration = j.at("iteration");
  l.expected_npv = j.at("expected_npv");
  l.avg_project_life = j.at("avg_project_life");
  l.policy_loss = j.at("policy_loss");
  l.value_loss = j.at("value_loss");
  l.entropy = j.at("entropy");
  l.clip_fraction = j.at("clip_fraction");
  l.first_ratio_deviation = j.at("first_ratio_deviation");
  l.lr = j.at("lr");
  l.episodes = j.at("episodes");
  l.failed = j.at("failed");
  l.min_steps = j.at("min_steps");
  l.max_steps = j.at("max_steps");
  l.aborted = j.at("aborted");
  for (const auto& m : j.at("members")) l.members.emplace_back(m.at(0).get<int>(), m.at(1).get<int>());
  return l;
}

Json to_json(const EvaluationRecord& r) {
  return Json{{"iteration", r.iteration},
              {"realizations", r.realizations},
              {"npvs", r.npvs},
              {"expected_npv", r.expected_npv},
              {"selected", r.selected}};
}

EvaluationRecord evaluation_from_json(const Json& j) {
  EvaluationRecord r;
  r.iteration = j.at("iteration");
  r.realizations = j.at("realizations").get<std::vector<std::vector<int>>>();
  r.npvs = j.at("npvs").get<std::vector<std::vector<double>>>();
  r.expected_npv = j.at("expected_npv");
  r.selected = j.at("selected");
  return r;
}

CsvTable training_log_table(const std::vector<IterationLog>& log) {
  CsvTable t;
  t.header = {"iteration",   "expected_npv",  "avg_project_life", "policy_loss", "value_loss", "entropy",
              "clip_fraction", "lr",          "episodes",         "failed",      "min_steps",  "max_steps",
              "aborted"};
  for (const auto& l : log) {
    t.add_row({std::to_string(l.iteration), format_number(l.expected_npv), format_number(l.avg_project_life),
               format_number(l.policy_loss), format_number(l.value_loss), format_number(l.entropy),
               format_number(l.clip_fraction), format_number(l.lr), std::to_string(l.episodes),
               std::to_string(l.failed), std::to_string(l.min_steps), std::to_string(l.max_steps),
               l.aborted ? "1" : "0"});
  }
  return t;
}

std::filesystem::path checkpoint_name(const std::filesystem::path& dir, int iteration) {
  char name[32];
  std::snprintf(name, sizeof name, "iter-%05d", iteration);
  return dir / name;
}

Trainer::Trainer(Scenario scenario, std::vector<geostat::ClusterAssignment> clusters,
                 policy::PolicyConfig policy_config, TrainerOptions options)
    : scenario_(std::move(scenario)),
      clusters_(std::move(clusters)),
      options_(std::move(options)),
      net_(std::move(policy_config)),
      adam_(net_.params()) {
  scenario_.validate();
  options_.ppo.validate();
  if (clusters_.size() != scenario_.assets.size()) throw ConfigError("trainer: one cluster assignment per asset");
  for (std::size_t a = 0; a < clusters_.size(); ++a) {
    clusters_[a].validate();
    if (static_cast<int>(clusters_[a].labels.size()) != scenario_.sets[a].count()) {
      throw ConfigError("trainer: cluster labels do not cover asset " + scenario_.assets[a].name);
    }
    if (clusters_[a].k != clusters_[0].k) throw ConfigError("trainer: every asset needs the same cluster count");
  }
  const int k = clusters_[0].k;
  if (options_.ppo.episodes_per_iteration % k != 0) {
    throw ConfigError("trainer: episodes_per_iteration " + std::to_string(options_.ppo.episodes_per_iteration) +
                      " is not a multiple of the cluster count " + std::to_string(k));
  }
  per_cluster_ = options_.ppo.episodes_per_iteration / k;
  if (net_.config().input_width != scenario_.layout().width()) {
    throw ConfigError("trainer: policy input width does not match the scenario");
  }
}

std::vector<EpisodeTask> Trainer::training_tasks(int iteration) const {
  const std::uint64_t it_seed = derive_seed(options_.seed, static_cast<std::uint64_t>(iteration));
  std::mt19937_64 rng(it_seed);
  std::vector<geostat::GlobalMember> members;
  if (clusters_.size() == 1) {
    for (int r : geostat::sample_training_batch(clusters_[0], per_cluster_, rng)) members.emplace_back(0, r);
  } else {
    members = geostat::sample_global_batch(clusters_, per_cluster_, rng);
  }
  std::uniform_real_distribution<double> eps(0.0, 1.0);
  std::vector<EpisodeTask> tasks;
  for (std::size_t e = 0; e < members.size(); ++e) {
    EpisodeTask t;
    t.asset = members[e].first;
    t.realization = members[e].second;
    t.epsilon_c = eps(rng);
    t.allow_termination = iteration > options_.ppo.termination_warmup;
    t.seed = derive_seed(it_seed, 1000 + e);
    tasks.push_back(t);
  }
  return tasks;
}

std::vector<EpisodeTask> Trainer::test_tasks(double epsilon_c) const {
  std::vector<EpisodeTask> tasks;
  for (std::size_t a = 0; a < clusters_.size(); ++a) {
    for (int r : clusters_[a].centroid_members) {
      EpisodeTask t;
      t.asset = static_cast<int>(a);
      t.realization = r;
      t.epsilon_c = epsilon_c;
      t.allow_termination = true;
      t.deterministic = true;
      tasks.push_back(t);
    }
  }
  return tasks;
}

EvaluationRecord Trainer::evaluate(int iteration, double epsilon_c, bool keep_traces,
                                   std::vector<Trajectory>* trajectories) const {
  RolloutOptions ro;
  ro.exec = options_.exec;
  ro.keep_traces = keep_traces;
  ro.max_failed_fraction = options_.ppo.max_failed_fraction;
  const auto tasks = test_tasks(epsilon_c);
  RolloutResult res = collect_rollouts(net_, scenario_, tasks, ro);
  EvaluationRecord rec;
  rec.iteration = iteration;
  rec.realizations.resize(clusters_.size());
  rec.npvs.resize(clusters_.size());
  double total = 0.0;
  for (const auto& t : res.trajectories) {
    rec.realizations[t.asset].push_back(t.realization);
    rec.npvs[t.asset].push_back(t.npv());
    total += t.npv();
  }
  rec.expected_npv = res.trajectories.empty() ? 0.0 : total / res.trajectories.size();
  if (trajectories) *trajectories = std::move(res.trajectories);
  return rec;
}

std::filesystem::path Trainer::save(int iteration) const {
  const auto dir = checkpoint_name(options_.checkpoint_dir, iteration);
  Json logs = Json::array(), evals = Json::array();
  for (const auto& l : log_) logs.push_back(to_json(l));
  for (const auto& e : evaluations_) evals.push_back(to_json(e));
  Json well_ids = Json::array();
  for (const auto& ids : scenario_.well_ids().ids) well_ids.push_back(ids);
  const Json meta = {{"iteration", iteration},
                     {"seed", options_.seed},
                     {"policy", policy::to_json(net_.config())},
                     {"ppo", to_json(options_.ppo)},
                     {"well_ids", well_ids},
                     {"log", logs},
                     {"evaluations", evals}};
  nn::save_checkpoint(dir, net_.params(), &adam_, meta);
  return dir;
}

void Trainer::resume(const std::filesystem::path& checkpoint) {
  const Json meta = nn::load_checkpoint(checkpoint, net_.params(), &adam_);
  if (policy::to_json(policy::policy_from_json(meta.at("policy"))) != policy::to_json(net_.config())) {
    throw LoadError("trainer: checkpoint architecture differs from the configured policy");
  }
  iteration_ = meta.at("iteration");
  log_.clear();
  evaluations_.clear();
  for (const auto& l : meta.at("log")) log_.push_back(iteration_log_from_json(l));
  for (const auto& e : meta.at("evaluations")) evaluations_.push_back(evaluation_from_json(e));
}

void Trainer::record_evaluation(int iteration) {
  evaluations_.push_back(evaluate(iteration));
  if (options_.on_evaluation) options_.on_evaluation(evaluations_.back());
  if (!options_.checkpoint_dir.empty()) save(iteration);
}

const IterationLog& Trainer::step() {
  const auto& cfg = options_.ppo;
  if (iteration_ >= cfg.iterations) throw StateError("trainer: all iterations are done");
  if (iteration_ == 0 && evaluations_.empty()) record_evaluation(0);
  const int it = iteration_ + 1;
  IterationLog l;
  l.iteration = it;
  l.lr = nn::linear_lr(it - 1, cfg.iterations, cfg.lr_first, cfg.lr_last);
  const auto tasks = training_tasks(it);
  RolloutOptions ro;
  ro.exec = options_.exec;
  ro.max_failed_fraction = cfg.max_failed_fraction;
  const RolloutResult res = collect_rollouts(net_, scenario_, tasks, ro);
  l.episodes = static_cast<int>(res.trajectories.size());
  l.failed = static_cast<int>(res.failures.size());
  for (const auto& msg : res.failures) std::fprintf(stderr, "iteration %d: dropped episode %s\n", it, msg.c_str());
  int steps = 0;
  l.min_steps = 1 << 30;
  for (const auto& t : res.trajectories) {
    l.expected_npv += t.npv();
    l.avg_project_life += t.project_life;
    l.members.emplace_back(t.asset, t.realization);
    const int n = static_cast<int>(t.steps.size());
    steps += n;
    l.min_steps = std::min(l.min_steps, n);
    l.max_steps = std::max(l.max_steps, n);
  }
  if (l.episodes > 0) {
    l.expected_npv /= l.episodes;
    l.avg_project_life /= l.episodes;
  } else {
    l.min_steps = 0;
  }
  if (steps > 0) {
    PPOConfig update_cfg = cfg;
    update_cfg.minibatch = std::min(cfg.minibatch, steps);
    std::mt19937_64 rng(derive_seed(options_.seed ^ 0x7570646174650000ULL, static_cast<std::uint64_t>(it)));
    const UpdateStats s = ppo_update(net_, adam_, res.trajectories, update_cfg, l.lr, rng);
    l.policy_loss = s.policy_loss;
    l.value_loss = s.value_loss;
    l.entropy = s.entropy;
    l.clip_fraction = s.clip_fraction;
    l.first_ratio_deviation = s.first_ratio_deviation;
    l.aborted = s.aborted;
    if (s.aborted) std::fprintf(stderr, "iteration %d: update aborted (%s)\n", it, s.abort_reason.c_str());
  }
  iteration_ = it;
  log_.push_back(std::move(l));
  if (options_.on_iteration) options_.on_iteration(log_.back());
  if (it % cfg.eval_every == 0 || it == cfg.iterations) record_evaluation(it);
  return log_.back();
}

void Trainer::run() {
  while (iteration_ < options_.ppo.iterations) step();
}

}  // namespace clrm::ppo
