#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "clrm/common/exec.hpp"
#include "clrm/geostat/asset.hpp"

namespace clrm::geostat {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An ensemble of ln-permeability fields (md) for one asset.
struct RealizationSet {
  int asset_id = 0;
  int nx = 0;
  int ny = 0;
  int nz = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> fields;
  std::vector<HardDatum> hard_data;

  int count() const { return static_cast<int>(fields.size()); }
  int cell_count() const { return nx * ny * nz; }
};

enum class FieldMethod {
  automatic,   ///< Cholesky up to cholesky_cell_limit cells, sequential simulation above
  cholesky,    ///< dense covariance factorization with kriging residual substitution
  sequential,  ///< sequential Gaussian simulation with a nearest-neighbour search
};

struct GenerationOptions {
  FieldMethod method = FieldMethod::automatic;
  int cholesky_cell_limit = 6400;
  int sgs_neighbors = 16;
  Exec exec = Exec::parallel;
};

/// Conditioning data for the asset: its explicit hard data, or else the values
/// of a reference draw (seed hard_data_seed) at every perforated cell.
std::vector<HardDatum> resolve_hard_data(const AssetSpec& spec, const GenerationOptions& options = {});

/// Draws `count` conditioned fields. Realization r uses its own random stream
/// derived from (seed, r), so the result does not depend on options.exec.
RealizationSet generate_realizations(const AssetSpec& spec, int count, std::uint64_t seed,
                                     const GenerationOptions& options = {});

/// Draws unconditioned fields with the same stream layout as generate_realizations.
RealizationSet generate_unconditional(const AssetSpec& spec, int count, std::uint64_t seed,
                                      const GenerationOptions& options = {});

/// Writes <dir>/realizations.bin and the <dir>/asset.json sidecar.
void save_realizations(const std::filesystem::path& dir, const RealizationSet& set, const AssetSpec& spec);

struct LoadedRealizations {
  AssetSpec spec;
  RealizationSet set;
};
LoadedRealizations load_realizations(const std::filesystem::path& dir);

}  // namespace clrm::geostat
