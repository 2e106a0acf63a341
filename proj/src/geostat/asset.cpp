#include "clrm/geostat/asset.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <utility>

#include "clrm/common/errors.hpp"

namespace clrm::geostat {
namespace {

struct TableRow {
  double range;
  VariogramKind kind;
  int producers;
  int injectors;
};

TableRow table_row(char letter) {
  switch (letter) {
    case 'A': return {20, VariogramKind::exponential, 5, 4};
    case 'B': return {25, VariogramKind::exponential, 12, 4};
    case 'C': return {30, VariogramKind::spherical, 8, 3};
    case 'D': return {25, VariogramKind::spherical, 9, 5};
    default: throw ArgumentError(std::string("unknown asset letter '") + letter + "'");
  }
}

int letter_index(char letter) { return letter - 'A'; }

sim::WellSpec well_from_json(const Json& j) {
  require_known_keys(j, {"name", "kind", "i", "j", "layers", "bhp_lower", "bhp_upper", "max_liquid_rate",
                         "wellbore_radius"},
                     "well");
  const auto kind = sim::well_kind_from_string(j.at("kind").get<std::string>());
  sim::WellSpec w = kind == sim::WellKind::producer ? sim::default_producer(j.at("i"), j.at("j"))
                                                    : sim::default_injector(j.at("i"), j.at("j"));
  read_optional(j, "name", w.name);
  read_optional(j, "layers", w.layers);
  read_optional(j, "bhp_lower", w.bhp_lower);
  read_optional(j, "bhp_upper", w.bhp_upper);
  read_optional(j, "max_liquid_rate", w.max_liquid_rate);
  read_optional(j, "wellbore_radius", w.wellbore_radius);
  return w;
}

Json well_to_json(const sim::WellSpec& w) {
  Json j = {{"name", w.name},
            {"kind", sim::to_string(w.kind)},
            {"i", w.i},
            {"j", w.j},
            {"bhp_lower", w.bhp_lower},
            {"bhp_upper", w.bhp_upper},
            {"max_liquid_rate", w.max_liquid_rate},
            {"wellbore_radius", w.wellbore_radius}};
  if (!w.layers.empty()) j["layers"] = w.layers;
  return j;
}

}  // namespace

void AssetSpec::validate() const {
  grid.validate();
  variogram.validate(is_3d());
  if (!(porosity > 0 && porosity < 1)) throw ArgumentError("asset " + name + ": porosity must lie in (0, 1)");
  if (!(log_perm_variance > 0)) throw ArgumentError("asset " + name + ": log_perm_variance must be > 0");
  if (!(kv_kh_ratio > 0)) throw ArgumentError("asset " + name + ": kv_kh_ratio must be > 0");
  if (wells.empty()) throw ArgumentError("asset " + name + ": no wells");
  std::set<std::pair<int, int>> columns;
  bool seen_injector = false;
  for (const auto& w : wells) {
    w.validate();
    if (w.i < 0 || w.i >= grid.nx || w.j < 0 || w.j >= grid.ny) {
      throw ArgumentError("asset " + name + ": well " + w.name + " lies outside the grid");
    }
    for (int k : w.layers) {
      if (k < 0 || k >= grid.nz) throw ArgumentError("asset " + name + ": well " + w.name + " layer out of range");
    }
    if (!columns.insert({w.i, w.j}).second) {
      throw ArgumentError("asset " + name + ": two wells share column (" + std::to_string(w.i) + "," +
                          std::to_string(w.j) + ")");
    }
    if (w.kind == sim::WellKind::injector) seen_injector = true;
    if (w.kind == sim::WellKind::producer && seen_injector) {
      throw ArgumentError("asset " + name + ": producers must precede injectors");
    }
  }
  for (const auto& d : hard_data) {
    if (d.cell < 0 || d.cell >= grid.cell_count()) throw ArgumentError("asset " + name + ": hard datum off grid");
  }
}

int AssetSpec::producer_count() const {
  return static_cast<int>(std::count_if(wells.begin(), wells.end(),
                                        [](const auto& w) { return w.kind == sim::WellKind::producer; }));
}

int AssetSpec::injector_count() const { return well_count() - producer_count(); }

std::vector<int> AssetSpec::perforated_cells() const {
  std::vector<int> cells;
  for (const auto& w : wells) {
    if (w.layers.empty()) {
      for (int k = 0; k < grid.nz; ++k) cells.push_back(grid.index(w.i, w.j, k));
    } else {
      for (int k : w.layers) cells.push_back(grid.index(w.i, w.j, k));
    }
  }
  return cells;
}

sim::Reservoir AssetSpec::reservoir(const std::vector<double>& log_perm) const {
  if (static_cast<int>(log_perm.size()) != grid.cell_count()) {
    throw ArgumentError("asset " + name + ": field has " + std::to_string(log_perm.size()) + " cells, grid has " +
                        std::to_string(grid.cell_count()));
  }
  sim::Reservoir r;
  r.grid = grid;
  r.porosity = porosity;
  r.wells = wells;
  r.perm_h.resize(log_perm.size());
  r.perm_v.resize(log_perm.size());
  for (std::size_t c = 0; c < log_perm.size(); ++c) {
    r.perm_h[c] = std::exp(log_perm[c]);
    r.perm_v[c] = kv_kh_ratio * r.perm_h[c];
  }
  return r;
}

Json to_json(const AssetSpec& spec) {
  Json wells = Json::array();
  for (const auto& w : spec.wells) wells.push_back(well_to_json(w));
  Json hard = Json::array();
  for (const auto& d : spec.hard_data) hard.push_back({{"cell", d.cell}, {"value", d.value}});
  return {{"asset_id", spec.asset_id},
          {"name", spec.name},
          {"grid",
           {{"nx", spec.grid.nx},
            {"ny", spec.grid.ny},
            {"nz", spec.grid.nz},
            {"dx", spec.grid.dx},
            {"dy", spec.grid.dy},
            {"dz", spec.grid.dz}}},
          {"variogram",
           {{"kind", to_string(spec.variogram.kind)},
            {"horizontal_range", spec.variogram.horizontal_range},
            {"vertical_range", spec.variogram.vertical_range}}},
          {"log_perm_mean", spec.log_perm_mean},
          {"log_perm_variance", spec.log_perm_variance},
          {"porosity", spec.porosity},
          {"kv_kh_ratio", spec.kv_kh_ratio},
          {"hard_data_seed", spec.hard_data_seed},
          {"hard_data", hard},
          {"wells", wells}};
}

AssetSpec asset_from_json(const Json& j) {
  require_known_keys(j, {"preset", "asset_id", "name", "grid", "variogram", "log_perm_mean", "log_perm_variance",
                         "porosity", "kv_kh_ratio", "hard_data_seed", "hard_data", "wells"},
                     "asset");
  AssetSpec spec;
  if (j.contains("preset")) spec = preset_asset(j.at("preset").get<std::string>());
  read_optional(j, "asset_id", spec.asset_id);
  read_optional(j, "name", spec.name);
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    require_known_keys(g, {"nx", "ny", "nz", "dx", "dy", "dz"}, "asset.grid");
    read_optional(g, "nx", spec.grid.nx);
    read_optional(g, "ny", spec.grid.ny);
    read_optional(g, "nz", spec.grid.nz);
    read_optional(g, "dx", spec.grid.dx);
    read_optional(g, "dy", spec.grid.dy);
    read_optional(g, "dz", spec.grid.dz);
  }
  if (j.contains("variogram")) {
    const auto& v = j.at("variogram");
    require_known_keys(v, {"kind", "horizontal_range", "vertical_range"}, "asset.variogram");
    if (v.contains("kind")) spec.variogram.kind = variogram_kind_from_string(v.at("kind").get<std::string>());
    read_optional(v, "horizontal_range", spec.variogram.horizontal_range);
    read_optional(v, "vertical_range", spec.variogram.vertical_range);
  }
  read_optional(j, "log_perm_mean", spec.log_perm_mean);
  read_optional(j, "log_perm_variance", spec.log_perm_variance);
  read_optional(j, "porosity", spec.porosity);
  read_optional(j, "kv_kh_ratio", spec.kv_kh_ratio);
  read_optional(j, "hard_data_seed", spec.hard_data_seed);
  if (j.contains("hard_data")) {
    spec.hard_data.clear();
    for (const auto& d : j.at("hard_data")) {
      require_known_keys(d, {"cell", "value"}, "asset.hard_data");
      spec.hard_data.push_back({d.at("cell").get<int>(), d.at("value").get<double>()});
    }
  }
  if (j.contains("wells")) {
    spec.wells.clear();
    for (const auto& w : j.at("wells")) spec.wells.push_back(well_from_json(w));
  }
  try {
    spec.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

std::vector<sim::WellSpec> place_wells(int nx, int ny, int producers, int injectors, std::uint64_t seed) {
  const int total = producers + injectors;
  if (producers < 0 || injectors < 0 || total < 1) throw ArgumentError("place_wells: need at least one well");
  if (total > nx * ny) throw ArgumentError("place_wells: more wells than columns");
  std::mt19937_64 rng(seed);
  const int margin_x = nx > 4 ? std::max(1, nx / 10) : 0;
  const int margin_y = ny > 4 ? std::max(1, ny / 10) : 0;
  std::uniform_int_distribution<int> di(margin_x, nx - 1 - margin_x);
  std::uniform_int_distribution<int> dj(margin_y, ny - 1 - margin_y);
  double spacing = 0.8 * std::sqrt(static_cast<double>(nx) * ny / total);
  std::vector<std::pair<int, int>> spots;
  int failures = 0;
  while (static_cast<int>(spots.size()) < total) {
    const std::pair<int, int> cand{di(rng), dj(rng)};
    const bool clear = std::all_of(spots.begin(), spots.end(), [&](const auto& s) {
      return std::hypot(s.first - cand.first, s.second - cand.second) >= spacing && s != cand;
    });
    if (clear) {
      spots.push_back(cand);
      failures = 0;
    } else if (++failures > 2000) {
      spacing *= 0.9;
      failures = 0;
    }
  }
  // Injectors are drawn first so they are spread by the spacing rule among themselves too.
  std::vector<sim::WellSpec> wells;
  for (int p = 0; p < producers; ++p) {
    auto w = sim::default_producer(spots[injectors + p].first, spots[injectors + p].second);
    w.name = "P" + std::to_string(p + 1);
    wells.push_back(w);
  }
  for (int q = 0; q < injectors; ++q) {
    auto w = sim::default_injector(spots[q].first, spots[q].second);
    w.name = "I" + std::to_string(q + 1);
    wells.push_back(w);
  }
  for (std::size_t w = 0; w < wells.size(); ++w) wells[w].well_id = static_cast<int>(w);
  return wells;
}

AssetSpec table1_asset(char letter) {
  const auto row = table_row(letter);
  AssetSpec spec;
  spec.asset_id = letter_index(letter) + 1;
  spec.name = std::string(1, letter);
  spec.grid = {60, 60, 1, 60.0, 60.0, 12.0};
  spec.variogram = {row.kind, row.range, 3.0};
  spec.wells = place_wells(60, 60, row.producers, row.injectors, 1000 + letter_index(letter));
  spec.hard_data_seed = 2000 + letter_index(letter);
  return spec;
}

AssetSpec table2_asset(char letter) {
  static constexpr int areal[4] = {60, 65, 40, 50};
  static constexpr int layers[4] = {5, 4, 9, 7};
  AssetSpec spec = table1_asset(letter);
  const int idx = letter_index(letter);
  const int n = areal[idx];
  spec.grid = {n, n, layers[idx], 60.0, 60.0, 3.0};
  for (auto& w : spec.wells) {
    w.i = std::min(n - 1, static_cast<int>(std::lround(w.i * (n - 1) / 59.0)));
    w.j = std::min(n - 1, static_cast<int>(std::lround(w.j * (n - 1) / 59.0)));
  }
  spec.variogram.vertical_range = 3.0;
  spec.hard_data_seed = 3000 + idx;
  return spec;
}

AssetSpec desk_asset(char letter) {
  AssetSpec spec = table1_asset(letter);
  const int n = 25;
  spec.grid.nx = spec.grid.ny = n;
  spec.variogram.horizontal_range *= 25.0 / 60.0;
  const int idx = letter_index(letter);
  spec.wells = place_wells(n, n, spec.producer_count(), spec.injector_count(), 4000 + idx);
  spec.hard_data_seed = 5000 + idx;
  return spec;
}

AssetSpec preset_asset(const std::string& name) {
  const auto colon = name.find(':');
  if (colon == std::string::npos || colon + 2 != name.size()) {
    throw ConfigError("asset preset must look like 'table1:A', got '" + name + "'");
  }
  const std::string family = name.substr(0, colon);
  const char letter = name.back();
  if (letter < 'A' || letter > 'D') throw ConfigError("asset preset letter must be A-D in '" + name + "'");
  if (family == "table1") return table1_asset(letter);
  if (family == "table2") return table2_asset(letter);
  if (family == "desk") return desk_asset(letter);
  throw ConfigError("unknown asset preset family '" + family + "'");
}

}  // namespace clrm::geostat
