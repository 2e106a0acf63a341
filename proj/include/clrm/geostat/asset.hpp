#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clrm/common/json_util.hpp"
#include "clrm/geostat/variogram.hpp"
#include "clrm/sim/types.hpp"

namespace clrm::geostat {

/// Known ln-permeability value at one cell.
struct HardDatum {
  int cell = 0;
  double value = 0.0;

  bool operator==(const HardDatum&) const = default;
};

/// Geometry, wells and geostatistics of one asset.
///
/// Wells are kept producers first, then injectors; that order is the asset's
/// well order everywhere downstream.
struct AssetSpec {
  int asset_id = 1;
  std::string name = "A";
  sim::Grid grid;
  std::vector<sim::WellSpec> wells;
  VariogramModel variogram;
  double log_perm_mean = 4.0;      ///< ln(md)
  double log_perm_variance = 1.0;  ///< ln(md)^2
  double porosity = 0.2;
  double kv_kh_ratio = 0.1;
  /// Explicit conditioning data. When empty, hard data are taken from a
  /// reference draw seeded with hard_data_seed at every perforated cell.
  std::vector<HardDatum> hard_data;
  std::uint64_t hard_data_seed = 1;

  void validate() const;
  int producer_count() const;
  int injector_count() const;
  int well_count() const { return static_cast<int>(wells.size()); }
  bool is_3d() const { return grid.nz > 1; }
  /// Perforated cells in well order, layers ascending.
  std::vector<int> perforated_cells() const;
  /// Simulator input for one ln-permeability field.
  sim::Reservoir reservoir(const std::vector<double>& log_perm) const;
};

Json to_json(const AssetSpec& spec);
/// Parses an asset document. A "preset" key ("table1:A", "table2:C", "desk:A")
/// supplies defaults that the remaining keys override. Unknown keys are errors.
AssetSpec asset_from_json(const Json& j);

/// Example-1 asset (60x60 2D grid) for letter A-D.
AssetSpec table1_asset(char letter);
/// Example-2 asset (3D grid, all layers perforated) for letter A-D.
AssetSpec table2_asset(char letter);
/// Reduced 25x25 version of a table1 preset asset with variogram ranges scaled by 25/60.
AssetSpec desk_asset(char letter);
AssetSpec preset_asset(const std::string& name);

/// Deterministic areal well placement: no shared columns, producers first.
std::vector<sim::WellSpec> place_wells(int nx, int ny, int producers, int injectors, std::uint64_t seed);

}  // namespace clrm::geostat
