#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <numeric>

#include "clrm/common/errors.hpp"
#include "clrm/harness/experiment.hpp"

namespace clrm::harness {
namespace {

using Clock = std::chrono::steady_clock;

std::string timestamp_name() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char b[64];
  std::strftime(b, sizeof b, "run-%Y%m%d-%H%M%S", &tm);
  return b;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string eps_tag(double e) { return "eps" + format_number(e); }

class RunManifest {
 public:
  RunManifest(std::filesystem::path file, Json doc) : file_(std::move(file)), doc_(std::move(doc)) { save(); }

  template <class Fn>
  void stage(const std::string& name, Fn&& fn) {
    doc_["stages"].push_back({{"name", name}, {"status", "running"}});
    Json& entry = doc_["stages"].back();
    save();
    const auto start = Clock::now();
    try {
      fn();
    } catch (const std::exception& e) {
      entry["status"] = "failed";
      entry["error"] = e.what();
      entry["seconds"] = std::chrono::duration<double>(Clock::now() - start).count();
      save();
      throw;
    }
    entry["status"] = "ok";
    entry["seconds"] = std::chrono::duration<double>(Clock::now() - start).count();
    save();
  }

  Json& doc() { return doc_; }
  void save() const { write_json(file_, doc_); }

 private:
  std::filesystem::path file_;
  Json doc_;
};

// One column per well with the applied setting, one row per report interval.
CsvTable bhp_table(const std::vector<env::TraceRow>& trace) {
  CsvTable t;
  t.header = {"time", "control_step"};
  std::vector<std::string> wells;
  for (const auto& r : trace) {
    if (std::find(wells.begin(), wells.end(), r.well) != wells.end()) break;
    wells.push_back(r.well);
  }
  for (const auto& w : wells) t.header.push_back(w);
  for (std::size_t i = 0; i + wells.size() <= trace.size(); i += wells.size()) {
    std::vector<std::string> row{format_number(trace[i].time), std::to_string(trace[i].control_step)};
    for (std::size_t w = 0; w < wells.size(); ++w) row.push_back(format_number(trace[i + w].setting));
    t.add_row(std::move(row));
  }
  return t;
}

std::vector<Series> table_series(const CsvTable& t, const std::string& x, const std::vector<std::string>& ys,
                                 bool step) {
  std::vector<Series> out;
  for (const auto& y : ys) {
    Series s;
    s.name = y;
    s.step = step;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      s.x.push_back(t.number(r, x));
      s.y.push_back(t.number(r, y));
    }
    out.push_back(std::move(s));
  }
  return out;
}

void export_csv(const std::filesystem::path& path, const CsvTable& t) {
  std::filesystem::create_directories(path.parent_path());
  write_csv(path, t);
}

struct Group {
  std::string name;
  std::vector<int> assets;
  std::uint64_t seed = 0;
};

std::vector<Group> policy_groups(const ExperimentConfig& cfg) {
  std::vector<Group> g;
  if (cfg.mode == Mode::global) {
    Group all{"global", {}, cfg.training_seed};
    for (std::size_t a = 0; a < cfg.assets.size(); ++a) all.assets.push_back(static_cast<int>(a));
    g.push_back(all);
  } else {
    for (std::size_t a = 0; a < cfg.assets.size(); ++a) {
      g.push_back({"asset-" + cfg.assets[a].name,
                   {static_cast<int>(a)},
                   derive_seed(cfg.training_seed, static_cast<std::uint64_t>(cfg.assets[a].asset_id))});
    }
  }
  return g;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg_in, const RunOptions& options) {
  ExperimentConfig cfg = cfg_in;
  cfg.ppo.episodes_per_iteration = cfg.episodes_per_iteration();
  cfg.validate();
  const auto groups = policy_groups(cfg);
  if (!options.resume_from.empty() && groups.size() != 1) {
    throw ConfigError("run_experiment: resuming needs a run with a single policy");
  }

  std::filesystem::create_directories(cfg.output_dir);
  const std::string base = options.run_name.empty() ? timestamp_name() : options.run_name;
  std::filesystem::path run_dir = cfg.output_dir / base;
  for (int n = 1; std::filesystem::exists(run_dir); ++n) run_dir = cfg.output_dir / (base + "-" + std::to_string(n));
  std::filesystem::create_directories(run_dir);
  write_text(cfg.output_dir / "LATEST", run_dir.filename().string() + "\n");

  Json doc = run_manifest(cfg);
  doc["exec"] = options.exec == Exec::serial ? "serial" : "parallel";
  if (!options.resume_from.empty()) doc["resumed_from"] = options.resume_from.string();
  RunManifest manifest(run_dir / "manifest.json", doc);
  RunResult result;
  result.run_dir = run_dir;
  auto say = [&](const char* fmt, auto... args) {
    if (!options.quiet) {
      std::printf(fmt, args...);
      std::fflush(stdout);
    }
  };

  Ensembles ens;
  manifest.stage("ensembles", [&] {
    if (!options.ensembles_from.empty()) {
      ens = load_ensembles(options.ensembles_from, cfg.econ);
      if (ens.scenario.assets.size() != cfg.assets.size()) throw ConfigError("ensembles: asset count differs");
      for (std::size_t a = 0; a < cfg.assets.size(); ++a) {
        if (geostat::to_json(ens.scenario.assets[a]) != geostat::to_json(cfg.assets[a])) {
          throw ConfigError("ensembles: asset " + cfg.assets[a].name + " differs from the config");
        }
        if (ens.scenario.sets[a].count() != cfg.realizations || ens.clusters[a].k != cfg.clusters) {
          throw ConfigError("ensembles: realization or cluster count of " + cfg.assets[a].name + " differs");
        }
      }
      manifest.doc()["ensembles_from"] = options.ensembles_from.string();
    } else {
      ens = build_ensembles(cfg, options.exec);
    }
    save_ensembles(run_dir / "ensembles", ens);
    say("ensembles ready: %zu assets x %d realizations, %d clusters\n", cfg.assets.size(), cfg.realizations,
        cfg.clusters);
  });

  CsvTable sweep;
  sweep.header = {"policy", "asset", "epsilon_c", "mean_npv", "min_npv", "max_npv", "count"};

  for (const Group& g : groups) {
    ppo::Scenario scenario;
    scenario.econ = cfg.econ;
    std::vector<geostat::ClusterAssignment> clusters;
    for (int a : g.assets) {
      scenario.assets.push_back(ens.scenario.assets[a]);
      scenario.sets.push_back(ens.scenario.sets[a]);
      clusters.push_back(ens.clusters[a]);
    }
    const auto pdir = run_dir / "policies" / g.name;
    PolicyResult pr;
    pr.name = g.name;
    pr.assets = g.assets;
    std::vector<ppo::EvaluationRecord> evals;

    manifest.stage("train:" + g.name, [&] {
      ppo::TrainerOptions opts;
      opts.ppo = cfg.ppo;
      opts.seed = g.seed;
      opts.exec = options.exec;
      opts.checkpoint_dir = pdir / "checkpoints";
      ppo::Trainer* self = nullptr;
      auto started = Clock::now();
      opts.on_iteration = [&](const ppo::IterationLog& l) {
        say("[%s] iter %d/%d  npv %.4e  life %.0f  steps %d-%d  entropy %.3f  clip %.3f  %.1fs\n", g.name.c_str(),
            l.iteration, cfg.ppo.iterations, l.expected_npv, l.avg_project_life, l.min_steps, l.max_steps, l.entropy,
            l.clip_fraction, std::chrono::duration<double>(Clock::now() - started).count());
        started = Clock::now();
      };
      opts.on_evaluation = [&](const ppo::EvaluationRecord& r) {
        say("[%s] test eval iter %d  expected npv %.6e\n", g.name.c_str(), r.iteration, r.expected_npv);
        if (self) {
          export_csv(pdir / "training_log.csv", ppo::training_log_table(self->log()));
          export_csv(pdir / "evaluation.csv", evaluation_table(self->evaluations(), scenario.assets));
        }
      };
      ppo::Trainer trainer(scenario, clusters, policy_for(cfg, scenario, derive_seed(g.seed, 0x706f6c)), opts);
      self = &trainer;
      if (!options.resume_from.empty()) trainer.resume(options.resume_from);
      trainer.run();
      export_csv(pdir / "training_log.csv", ppo::training_log_table(trainer.log()));
      evals = trainer.evaluations();
    });

    manifest.stage("select:" + g.name, [&] {
      const std::size_t best = select_optimal(evals);
      evals[best].selected = true;
      pr.selected_iteration = evals[best].iteration;
      pr.selected = ppo::checkpoint_name(pdir / "checkpoints", pr.selected_iteration);
      pr.initial_expected_npv = evals.front().expected_npv;
      pr.selected_expected_npv = evals[best].expected_npv;
      const CsvTable et = evaluation_table(evals, scenario.assets);
      export_csv(pdir / "evaluation.csv", et);
      std::vector<std::string> cols{"expected_npv"};
      write_text(pdir / "evaluation.svg",
                 svg_chart(g.name + ": test-set NPV", "iteration", "NPV (USD)", table_series(et, "iteration", cols, false)));
      const CsvTable lt = read_csv(pdir / "training_log.csv");
      write_text(pdir / "training_npv.svg", svg_chart(g.name + ": training NPV", "iteration", "NPV (USD)",
                                                      table_series(lt, "iteration", {"expected_npv"}, false)));
      write_text(pdir / "training_life.svg", svg_chart(g.name + ": project life", "iteration", "days",
                                                       table_series(lt, "iteration", {"avg_project_life"}, false)));
      say("[%s] selected iteration %d: %.6e (iteration 0: %.6e)\n", g.name.c_str(), pr.selected_iteration,
          pr.selected_expected_npv, pr.initial_expected_npv);
    });

    manifest.stage("sweep:" + g.name, [&] {
      std::vector<double> eps = cfg.epsilon_eval;
      const bool has_one = std::find(eps.begin(), eps.end(), 1.0) != eps.end();
      if (!has_one) eps.push_back(1.0);
      std::vector<std::vector<ppo::Trajectory>> runs(eps.size());
      for (std::size_t e = 0; e < eps.size(); ++e) {
        const auto rec = evaluate_policy(pr.selected, scenario, clusters, eps[e], options.exec, &runs[e]);
        if (e < cfg.epsilon_eval.size()) pr.sweep.push_back(rec.npvs);
      }
      const std::size_t one = std::find(eps.begin(), eps.end(), 1.0) - eps.begin();
      for (std::size_t p = 0; p < scenario.assets.size(); ++p) {
        const std::string asset = scenario.assets[p].name;
        std::vector<Series> cdf_series;
        for (std::size_t e = 0; e < cfg.epsilon_eval.size(); ++e) {
          const auto& npvs = pr.sweep[e][p];
          const auto cdf = compute_cdf(npvs);
          const CsvTable ct = cdf_table(cdf);
          export_csv(pdir / "cdf" / (asset + "_" + eps_tag(eps[e]) + ".csv"), ct);
          Series s = table_series(ct, "npv", {"probability"}, true).front();
          s.name = "eps_c = " + format_number(eps[e]);
          cdf_series.push_back(std::move(s));
          const double mean = std::accumulate(npvs.begin(), npvs.end(), 0.0) / npvs.size();
          sweep.add_row({g.name, asset, format_number(eps[e]), format_number(mean), format_number(cdf.front().first),
                         format_number(cdf.back().first), std::to_string(npvs.size())});
        }
        write_text(pdir / "cdf" / (asset + ".svg"),
                   svg_chart(g.name + ": test NPV CDF, asset " + asset, "NPV (USD)", "probability", cdf_series));

        // Median-NPV realization under eps_c = 1 (lower median for even counts).
        std::vector<std::pair<double, int>> ranked;
        for (const auto& t : runs[one]) {
          if (t.asset == static_cast<int>(p)) ranked.emplace_back(t.npv(), t.realization);
        }
        if (ranked.empty()) continue;
        std::sort(ranked.begin(), ranked.end());
        const int median = ranked[(ranked.size() - 1) / 2].second;
        for (std::size_t e = 0; e < cfg.epsilon_eval.size(); ++e) {
          for (const auto& t : runs[e]) {
            if (t.asset != static_cast<int>(p) || t.realization != median) continue;
            const CsvTable bt = bhp_table(t.trace);
            const std::string stem = asset + "_r" + std::to_string(median) + "_" + eps_tag(eps[e]);
            export_csv(pdir / "traces" / (stem + ".csv"), bt);
            export_csv(pdir / "traces" / (stem + "_full.csv"), env::trace_table(t.trace));
            const std::vector<std::string> wells(bt.header.begin() + 2, bt.header.end());
            write_text(pdir / "traces" / (stem + ".svg"),
                       svg_chart(g.name + ": BHP settings, asset " + asset + ", realization " + std::to_string(median) +
                                     ", eps_c = " + format_number(eps[e]),
                                 "time (days)", "BHP (bar)", table_series(bt, "time", wells, true)));
          }
        }
      }
      export_csv(run_dir / "sweep.csv", sweep);
    });

    manifest.doc()["policies"].push_back({{"name", pr.name},
                                          {"selected_checkpoint", std::filesystem::relative(pr.selected, run_dir).string()},
                                          {"selected_iteration", pr.selected_iteration},
                                          {"initial_expected_npv", pr.initial_expected_npv},
                                          {"selected_expected_npv", pr.selected_expected_npv}});
    manifest.save();
    result.policies.push_back(std::move(pr));
  }
  manifest.doc()["status"] = "complete";
  manifest.save();
  return result;
}

SweepSummary read_sweep(const std::filesystem::path& run_dir) {
  const CsvTable t = read_csv(run_dir / "sweep.csv");
  SweepSummary s;
  std::map<std::pair<std::string, double>, double> values;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string asset = t.rows[r][t.column("asset")];
    const double eps = t.number(r, "epsilon_c");
    if (std::find(s.assets.begin(), s.assets.end(), asset) == s.assets.end()) s.assets.push_back(asset);
    if (std::find(s.epsilons.begin(), s.epsilons.end(), eps) == s.epsilons.end()) s.epsilons.push_back(eps);
    values[{asset, eps}] = t.number(r, "mean_npv");
  }
  for (const auto& a : s.assets) {
    std::vector<double> row;
    for (double e : s.epsilons) {
      const auto it = values.find({a, e});
      if (it == values.end()) throw LoadError("sweep: no entry for asset " + a + " at eps_c " + format_number(e));
      row.push_back(it->second);
    }
    s.means.push_back(std::move(row));
  }
  return s;
}

}  // namespace clrm::harness
