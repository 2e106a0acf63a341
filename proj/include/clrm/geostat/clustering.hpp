#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "clrm/common/exec.hpp"
#include "clrm/geostat/asset.hpp"
#include "clrm/geostat/realizations.hpp"

namespace clrm::geostat {

/// Partition of an ensemble. Cluster indices are 0-based.
struct ClusterAssignment {
  int k = 0;
  std::vector<int> labels;            ///< realization -> cluster
  std::vector<int> centroid_members;  ///< cluster -> realization nearest its centroid

  std::vector<std::vector<int>> members() const;
  void validate() const;
};

/// Standardizes each feature column to zero mean and unit variance (constant columns become 0).
std::vector<std::vector<double>> standardize_features(const std::vector<std::vector<double>>& features);

/// k-means with k-means++ seeding. Retries with a fresh seed when a cluster
/// ends up empty, up to max_attempts, then throws GenerationError.
ClusterAssignment cluster_realizations(const std::vector<std::vector<double>>& features, int k, std::uint64_t seed,
                                       int max_attempts = 10);

/// per_cluster draws from each cluster excluding its centroid member: without
/// replacement when the pool is large enough, otherwise with replacement.
/// Clusters with no non-centroid members contribute nothing.
std::vector<int> sample_training_batch(const ClusterAssignment& assignment, int per_cluster, std::mt19937_64& rng);

/// Flow-response features: field oil and water rates over `points` report
/// intervals of one fixed-BHP (initial-period settings) run of `days` days.
std::vector<std::vector<double>> flow_response_features(const AssetSpec& spec, const RealizationSet& set,
                                                        int points = 20, double days = 2000.0,
                                                        Exec exec = Exec::parallel);

/// (asset index, realization) members of a global cluster.
using GlobalMember = std::pair<int, int>;

/// Global cluster c is the union of cluster c of every asset.
std::vector<std::vector<GlobalMember>> merge_global_clusters(const std::vector<ClusterAssignment>& per_asset);

/// Draws per_cluster members from every global cluster, excluding every asset's centroid members.
std::vector<GlobalMember> sample_global_batch(const std::vector<ClusterAssignment>& per_asset, int per_cluster,
                                              std::mt19937_64& rng);

}  // namespace clrm::geostat
