#include <Eigen/Core>

#include <cstdio>
#include <set>

#include "clrm/common/errors.hpp"
#include "clrm/env/environment.hpp"
#include "clrm/harness/experiment.hpp"

namespace clrm::harness {

std::string to_string(Mode m) { return m == Mode::individual ? "individual" : "global"; }

Mode mode_from_string(const std::string& s) {
  if (s == "individual") return Mode::individual;
  if (s == "global") return Mode::global;
  throw ConfigError("mode must be 'individual' or 'global', got '" + s + "'");
}

void ExperimentConfig::validate() const {
  if (mode == Mode::individual && assets.empty()) throw ConfigError("experiment: individual mode needs an asset");
  if (mode == Mode::global && assets.size() < 2) throw ConfigError("experiment: global mode needs at least 2 assets");
  std::set<std::string> names;
  std::set<int> ids;
  for (const auto& a : assets) {
    a.validate();
    if (!names.insert(a.name).second) throw ConfigError("experiment: duplicate asset name '" + a.name + "'");
    if (!ids.insert(a.asset_id).second) {
      throw ConfigError("experiment: duplicate asset id " + std::to_string(a.asset_id));
    }
  }
  if (clusters < 1 || realizations < clusters) throw ConfigError("experiment: need 1 <= clusters <= realizations");
  if (feature_points < 1 || !(feature_days > 0)) throw ConfigError("experiment: bad clustering feature run");
  if (individual_episodes < 1 || global_episodes < 1) throw ConfigError("experiment: episodes must be positive");
  if (epsilon_eval.empty()) throw ConfigError("experiment: epsilon_eval is empty");
  for (double e : epsilon_eval) {
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("experiment: eps_c " + std::to_string(e) + " outside [0, 1]");
  }
  ppo::PPOConfig p = ppo;
  p.episodes_per_iteration = episodes_per_iteration();
  p.validate();
  if (episodes_per_iteration() % clusters != 0) {
    throw ConfigError("experiment: " + std::to_string(episodes_per_iteration()) +
                      " episodes per iteration do not split over " + std::to_string(clusters) + " clusters");
  }
}

int ExperimentConfig::episodes_per_iteration() const {
  return mode == Mode::individual ? individual_episodes : global_episodes;
}

void apply_desk_scale(ExperimentConfig& cfg) {
  cfg.assets = {geostat::preset_asset("desk:A"), geostat::preset_asset("desk:C")};
  cfg.asset_sources = Json::array({"desk:A", "desk:C"});
  cfg.realizations = 100;
  cfg.clusters = 10;
  cfg.individual_episodes = 20;
  cfg.global_episodes = 20;
  cfg.ppo.iterations = 150;
}

namespace {

const char* const kPolicyKeys[] = {"n_m",        "heads",       "tau",          "layers",   "conv_filters",
                                   "conv_width", "mlp_hidden", "value_hidden", "gate_bias"};

}  // namespace

Json to_json(const ExperimentConfig& cfg) {
  Json assets = Json::array();
  for (const auto& a : cfg.assets) assets.push_back(geostat::to_json(a));
  Json ppo = ppo::to_json(cfg.ppo);
  ppo.erase("episodes_per_iteration");
  return Json{{"mode", to_string(cfg.mode)},
              {"assets", assets},
              {"realizations", cfg.realizations},
              {"clusters", cfg.clusters},
              {"feature_points", cfg.feature_points},
              {"feature_days", cfg.feature_days},
              {"individual_episodes", cfg.individual_episodes},
              {"global_episodes", cfg.global_episodes},
              {"ppo", ppo},
              {"econ", econ::to_json(cfg.econ)},
              {"epsilon_eval", cfg.epsilon_eval},
              {"policy", cfg.policy_overrides},
              {"seeds",
               {{"realizations", cfg.realization_seed},
                {"clustering", cfg.clustering_seed},
                {"training", cfg.training_seed}}},
              {"output_dir", cfg.output_dir.string()}};
}

ExperimentConfig experiment_from_json(const Json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("experiment: config must be a JSON object");
  require_known_keys(j,
                     {"mode", "assets", "realizations", "clusters", "feature_points", "feature_days",
                      "individual_episodes", "global_episodes", "ppo", "econ", "epsilon_eval", "policy", "seeds",
                      "output_dir"},
                     "experiment");
  ExperimentConfig cfg;
  try {
    if (j.contains("mode")) cfg.mode = mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("assets")) {
      cfg.asset_sources = j.at("assets");
      for (const auto& src : j.at("assets")) {
        if (src.is_string()) {
          cfg.assets.push_back(geostat::preset_asset(src.get<std::string>()));
        } else if (src.is_object() && src.size() == 1 && src.contains("path")) {
          std::filesystem::path p = src.at("path").get<std::string>();
          if (p.is_relative()) p = base_dir / p;
          cfg.assets.push_back(geostat::asset_from_json(read_json(p)));
        } else {
          cfg.assets.push_back(geostat::asset_from_json(src));
        }
      }
    }
    read_optional(j, "realizations", cfg.realizations);
    read_optional(j, "clusters", cfg.clusters);
    read_optional(j, "feature_points", cfg.feature_points);
    read_optional(j, "feature_days", cfg.feature_days);
    read_optional(j, "individual_episodes", cfg.individual_episodes);
    read_optional(j, "global_episodes", cfg.global_episodes);
    if (j.contains("ppo")) {
      if (j.at("ppo").contains("episodes_per_iteration")) {
        throw ConfigError("experiment: set individual_episodes / global_episodes instead of ppo.episodes_per_iteration");
      }
      cfg.ppo = ppo::ppo_from_json(j.at("ppo"), cfg.ppo);
    }
    if (j.contains("econ")) {
      Json merged = econ::to_json(cfg.econ);
      merged.update(j.at("econ"));
      cfg.econ = econ::econ_from_json(merged);
    }
    read_optional(j, "epsilon_eval", cfg.epsilon_eval);
    if (j.contains("policy")) {
      const Json& p = j.at("policy");
      if (!p.is_object()) throw ConfigError("experiment: policy overrides must be an object");
      for (const auto& [key, value] : p.items()) {
        bool known = false;
        for (const char* k : kPolicyKeys) known = known || key == k;
        if (!known) throw ConfigError("policy: unknown key '" + key + "'");
        if (!value.is_number()) throw ConfigError("policy: '" + key + "' must be a number");
      }
      cfg.policy_overrides = p;
    }
    if (j.contains("seeds")) {
      const Json& s = j.at("seeds");
      require_known_keys(s, {"realizations", "clustering", "training"}, "seeds");
      read_optional(s, "realizations", cfg.realization_seed);
      read_optional(s, "clustering", cfg.clustering_seed);
      read_optional(s, "training", cfg.training_seed);
    }
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("experiment: ") + e.what());
  }
  cfg.ppo.episodes_per_iteration = cfg.episodes_per_iteration();
  return cfg;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  return experiment_from_json(read_json(path), path.parent_path());
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  Json j = to_json(cfg);
  j.erase("output_dir");
  return fnv1a64(j.dump());
}

SimulationBudget simulation_budget(const ExperimentConfig& cfg) {
  SimulationBudget b;
  const long long iters = cfg.ppo.iterations;
  b.individual = static_cast<long long>(cfg.assets.size()) * cfg.individual_episodes * iters;
  b.global = static_cast<long long>(cfg.global_episodes) * iters;
  b.ratio = b.individual > 0 ? static_cast<double>(b.global) / static_cast<double>(b.individual) : 0.0;
  return b;
}

Json run_manifest(const ExperimentConfig& cfg) {
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
  const SimulationBudget b = simulation_budget(cfg);
  Json well_ids = Json::array();
  for (const auto& ids : env::build_well_ids(cfg.assets).ids) well_ids.push_back(ids);
  return Json{
      {"format", "clrm-run-1"},
      {"config", to_json(cfg)},
      {"asset_sources", cfg.asset_sources},
      {"config_hash", hash},
      {"mode", to_string(cfg.mode)},
      {"seeds",
       {{"realizations", cfg.realization_seed}, {"clustering", cfg.clustering_seed}, {"training", cfg.training_seed}}},
      {"versions",
       {{"clrm", "1.0.0"},
        {"compiler", __VERSION__},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
      {"workers", worker_count()},
      {"well_ids", well_ids},
      {"simulation_budget", {{"individual", b.individual}, {"global", b.global}, {"ratio", b.ratio}}},
      {"stages", Json::array()},
      {"policies", Json::array()}};
}

policy::PolicyConfig policy_for(const ExperimentConfig& cfg, const ppo::Scenario& scenario, std::uint64_t seed) {
  const int width = scenario.layout().width();
  policy::PolicyConfig p = scenario.assets.size() == 1
                               ? policy::PolicyConfig::single_asset(width, scenario.assets[0].well_count(), seed)
                               : policy::PolicyConfig::multi_asset(width, scenario.well_ids().total, seed);
  const Json& o = cfg.policy_overrides;
  read_optional(o, "n_m", p.n_m);
  read_optional(o, "heads", p.heads);
  read_optional(o, "tau", p.tau);
  read_optional(o, "layers", p.layers);
  read_optional(o, "conv_filters", p.conv_filters);
  read_optional(o, "conv_width", p.conv_width);
  read_optional(o, "mlp_hidden", p.mlp_hidden);
  read_optional(o, "value_hidden", p.value_hidden);
  read_optional(o, "gate_bias", p.gate_bias);
  p.validate();
  return p;
}

}  // namespace clrm::harness
