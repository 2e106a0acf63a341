#include "clrm/geostat/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "clrm/common/errors.hpp"
#include "clrm/sim/simulator.hpp"

namespace clrm::geostat {
namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

struct KMeansResult {
  std::vector<int> labels;
  std::vector<std::vector<double>> centroids;
  double inertia = 0;
  bool has_empty = false;
};

KMeansResult kmeans(const std::vector<std::vector<double>>& x, int k, std::mt19937_64& rng) {
  const int n = static_cast<int>(x.size());
  KMeansResult res;
  // k-means++ seeding
  std::vector<int> chosen{std::uniform_int_distribution<int>(0, n - 1)(rng)};
  std::vector<double> d2(n);
  while (static_cast<int>(chosen.size()) < k) {
    double total = 0;
    for (int i = 0; i < n; ++i) {
      d2[i] = std::numeric_limits<double>::infinity();
      for (int c : chosen) d2[i] = std::min(d2[i], squared_distance(x[i], x[c]));
      total += d2[i];
    }
    int pick = -1;
    if (total > 0) {
      double u = std::uniform_real_distribution<double>(0, total)(rng);
      for (int i = 0; i < n && pick < 0; ++i) {
        u -= d2[i];
        if (u <= 0 && d2[i] > 0) pick = i;
      }
      if (pick < 0) {
        for (int i = n - 1; i >= 0 && pick < 0; --i)
          if (d2[i] > 0) pick = i;
      }
    } else {
      std::vector<int> rest;
      for (int i = 0; i < n; ++i)
        if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) rest.push_back(i);
      pick = rest[std::uniform_int_distribution<std::size_t>(0, rest.size() - 1)(rng)];
    }
    chosen.push_back(pick);
  }
  for (int c : chosen) res.centroids.push_back(x[c]);

  res.labels.assign(n, -1);
  const std::size_t dim = x[0].size();
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = squared_distance(x[i], res.centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (res.labels[i] != best) {
        res.labels[i] = best;
        changed = true;
      }
    }
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      ++counts[res.labels[i]];
      for (std::size_t f = 0; f < dim; ++f) sums[res.labels[i]][f] += x[i][f];
    }
    res.has_empty = false;
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        res.has_empty = true;
        continue;
      }
      for (std::size_t f = 0; f < dim; ++f) res.centroids[c][f] = sums[c][f] / counts[c];
    }
    if (!changed) break;
  }
  res.inertia = 0;
  for (int i = 0; i < n; ++i) res.inertia += squared_distance(x[i], res.centroids[res.labels[i]]);
  return res;
}

// Without replacement when the pool is large enough, with replacement otherwise.
template <class T>
void draw_from_pool(std::vector<T>& pool, int per_cluster, std::mt19937_64& rng, std::vector<T>& out) {
  if (pool.empty()) return;
  if (static_cast<int>(pool.size()) >= per_cluster) {
    for (int s = 0; s < per_cluster; ++s) {
      std::uniform_int_distribution<std::size_t> pick(s, pool.size() - 1);
      std::swap(pool[s], pool[pick(rng)]);
      out.push_back(pool[s]);
    }
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (int s = 0; s < per_cluster; ++s) out.push_back(pool[pick(rng)]);
  }
}

}  // namespace

std::vector<std::vector<int>> ClusterAssignment::members() const {
  std::vector<std::vector<int>> out(k);
  for (std::size_t r = 0; r < labels.size(); ++r) out.at(labels[r]).push_back(static_cast<int>(r));
  return out;
}

void ClusterAssignment::validate() const {
  if (k < 1 || static_cast<int>(centroid_members.size()) != k) throw StateError("cluster assignment: bad k");
  const auto m = members();
  for (int c = 0; c < k; ++c) {
    if (m[c].empty()) throw StateError("cluster assignment: empty cluster " + std::to_string(c));
    if (labels.at(centroid_members[c]) != c) throw StateError("cluster assignment: centroid outside its cluster");
  }
}

std::vector<std::vector<double>> standardize_features(const std::vector<std::vector<double>>& features) {
  if (features.empty()) return {};
  const std::size_t dim = features[0].size();
  const double n = static_cast<double>(features.size());
  std::vector<std::vector<double>> out = features;
  for (std::size_t f = 0; f < dim; ++f) {
    double mean = 0;
    for (const auto& row : features) mean += row[f];
    mean /= n;
    double var = 0;
    for (const auto& row : features) var += (row[f] - mean) * (row[f] - mean);
    const double sd = std::sqrt(var / n);
    for (auto& row : out) row[f] = sd > 0 ? (row[f] - mean) / sd : 0.0;
  }
  return out;
}

ClusterAssignment cluster_realizations(const std::vector<std::vector<double>>& features, int k, std::uint64_t seed,
                                       int max_attempts) {
  const int n = static_cast<int>(features.size());
  if (k < 1 || k > n) throw ArgumentError("cluster_realizations: need 1 <= k <= count");
  for (const auto& row : features) {
    if (row.size() != features[0].size()) throw ArgumentError("cluster_realizations: ragged feature vectors");
  }
  ClusterAssignment out;
  out.k = k;
  if (k == n) {
    out.labels.resize(n);
    std::iota(out.labels.begin(), out.labels.end(), 0);
    out.centroid_members = out.labels;
    return out;
  }
  constexpr int kRestarts = 4;
  KMeansResult best;
  bool have = false;
  for (int attempt = 0; attempt < max_attempts && !have; ++attempt) {
    for (int restart = 0; restart < kRestarts; ++restart) {
      std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(attempt) * kRestarts + restart));
      auto res = kmeans(features, k, rng);
      if (res.has_empty) continue;
      if (!have || res.inertia < best.inertia) {
        best = std::move(res);
        have = true;
      }
    }
  }
  if (!have) throw GenerationError("cluster_realizations: empty cluster persisted after re-seeding");
  out.labels = best.labels;
  out.centroid_members.assign(k, -1);
  std::vector<double> best_d(k, std::numeric_limits<double>::infinity());
  for (int i = 0; i < n; ++i) {
    const int c = out.labels[i];
    const double d = squared_distance(features[i], best.centroids[c]);
    if (d < best_d[c]) {
      best_d[c] = d;
      out.centroid_members[c] = i;
    }
  }
  out.validate();
  return out;
}

std::vector<int> sample_training_batch(const ClusterAssignment& assignment, int per_cluster, std::mt19937_64& rng) {
  if (per_cluster < 1) throw ArgumentError("sample_training_batch: per_cluster must be >= 1");
  std::vector<int> out;
  const auto members = assignment.members();
  for (int c = 0; c < assignment.k; ++c) {
    std::vector<int> pool;
    for (int r : members[c])
      if (r != assignment.centroid_members[c]) pool.push_back(r);
    draw_from_pool(pool, per_cluster, rng, out);
  }
  return out;
}

std::vector<std::vector<double>> flow_response_features(const AssetSpec& spec, const RealizationSet& set, int points,
                                                        double days, Exec exec) {
  if (points < 1 || !(days > 0)) throw ArgumentError("flow_response_features: need points >= 1 and days > 0");
  std::vector<std::vector<double>> features(set.count());
  for_each_index(exec, set.count(), [&](std::size_t r) {
    const sim::Simulator simulator(spec.reservoir(set.fields[r]), sim::FluidRock{});
    const auto bhp = simulator.initial_period_bhps();
    const auto step = simulator.simulate_control_step(simulator.initial_state(), bhp, days, points);
    std::vector<double> oil, water;
    for (const auto& rep : step.reports) {
      double qo = 0, qw = 0;
      for (const auto& w : rep.wells) {
        qo += w.oil_rate;
        qw += w.water_rate;
      }
      oil.push_back(qo);
      water.push_back(qw);
    }
    oil.insert(oil.end(), water.begin(), water.end());
    features[r] = std::move(oil);
  });
  return standardize_features(features);
}

std::vector<std::vector<GlobalMember>> merge_global_clusters(const std::vector<ClusterAssignment>& per_asset) {
  if (per_asset.empty()) throw ArgumentError("merge_global_clusters: no assets");
  const int k = per_asset[0].k;
  std::vector<std::vector<GlobalMember>> out(k);
  for (std::size_t a = 0; a < per_asset.size(); ++a) {
    if (per_asset[a].k != k) throw ArgumentError("merge_global_clusters: assets use different k");
    const auto members = per_asset[a].members();
    for (int c = 0; c < k; ++c)
      for (int r : members[c]) out[c].push_back({static_cast<int>(a), r});
  }
  return out;
}

std::vector<GlobalMember> sample_global_batch(const std::vector<ClusterAssignment>& per_asset, int per_cluster,
                                              std::mt19937_64& rng) {
  if (per_cluster < 1) throw ArgumentError("sample_global_batch: per_cluster must be >= 1");
  const auto clusters = merge_global_clusters(per_asset);
  std::vector<GlobalMember> out;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    std::vector<GlobalMember> pool;
    for (const auto& m : clusters[c])
      if (per_asset[m.first].centroid_members[c] != m.second) pool.push_back(m);
    draw_from_pool(pool, per_cluster, rng, out);
  }
  return out;
}

}  // namespace clrm::geostat
