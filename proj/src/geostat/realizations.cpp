#include "clrm/geostat/realizations.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "clrm/common/binary_container.hpp"
#include "clrm/common/errors.hpp"

namespace clrm::geostat {
namespace {

constexpr double kJitter = 1e-10;

struct Cell {
  int i, j, k;
};

std::vector<Cell> cell_coordinates(const sim::Grid& g) {
  std::vector<Cell> cells(g.cell_count());
  for (int k = 0; k < g.nz; ++k)
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) cells[g.index(i, j, k)] = {i, j, k};
  return cells;
}

double correlation(const Cell& a, const Cell& b, const VariogramModel& v) {
  return covariance(a.i - b.i, a.j - b.j, a.k - b.k, v);
}

// Works in standardized units (zero mean, unit variance); callers rescale.
class CholeskySampler {
 public:
  CholeskySampler(const AssetSpec& spec, const std::vector<HardDatum>& hard) : hard_(hard) {
    const auto cells = cell_coordinates(spec.grid);
    const int n = static_cast<int>(cells.size());
    Eigen::MatrixXd c(n, n);
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b <= a; ++b) c(a, b) = c(b, a) = correlation(cells[a], cells[b], spec.variogram);
      c(a, a) += kJitter;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() != Eigen::Success) {
      throw GenerationError("covariance matrix of asset " + spec.name + " is not positive definite after jitter");
    }
    lower_ = llt.matrixL();
    const int m = static_cast<int>(hard.size());
    if (m > 0) {
      Eigen::MatrixXd cdd(m, m), cxd(n, m);
      for (int p = 0; p < m; ++p) {
        for (int q = 0; q < m; ++q) cdd(p, q) = c(hard[p].cell, hard[q].cell);
        for (int x = 0; x < n; ++x) cxd(x, p) = c(x, hard[p].cell);
      }
      Eigen::LLT<Eigen::MatrixXd> dd(cdd);
      if (dd.info() != Eigen::Success) throw GenerationError("hard-data covariance is not positive definite");
      weights_ = dd.solve(cxd.transpose()).transpose();
    }
  }

  // standardized hard data -> standardized conditioned field
  Eigen::VectorXd draw(std::mt19937_64& rng, const Eigen::VectorXd& hard_std) const {
    std::normal_distribution<double> normal;
    Eigen::VectorXd xi(lower_.rows());
    for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = normal(rng);
    Eigen::VectorXd z = lower_.triangularView<Eigen::Lower>() * xi;
    if (!hard_.empty()) {
      Eigen::VectorXd residual(hard_.size());
      for (std::size_t p = 0; p < hard_.size(); ++p) residual[p] = hard_std[p] - z[hard_[p].cell];
      z += weights_ * residual;
    }
    return z;
  }

 private:
  std::vector<HardDatum> hard_;
  Eigen::MatrixXd lower_;
  Eigen::MatrixXd weights_;
};

struct Offset {
  int di, dj, dk;
  double r2;
};

class SequentialSampler {
 public:
  SequentialSampler(const AssetSpec& spec, const std::vector<HardDatum>& hard, int neighbors)
      : spec_(spec), hard_(hard), neighbors_(neighbors) {
    const auto& g = spec.grid;
    const auto& v = spec.variogram;
    const int rh = std::min(std::max(g.nx, g.ny) - 1, static_cast<int>(std::ceil(v.horizontal_range)));
    const int rv = g.nz > 1 ? std::min(g.nz - 1, static_cast<int>(std::ceil(v.vertical_range))) : 0;
    for (int dk = -rv; dk <= rv; ++dk) {
      for (int dj = -rh; dj <= rh; ++dj) {
        for (int di = -rh; di <= rh; ++di) {
          if (di == 0 && dj == 0 && dk == 0) continue;
          double r2 = (di * di + dj * dj) / (v.horizontal_range * v.horizontal_range);
          if (dk != 0) r2 += dk * dk / (v.vertical_range * v.vertical_range);
          template_.push_back({di, dj, dk, r2});
        }
      }
    }
    std::stable_sort(template_.begin(), template_.end(), [](const Offset& a, const Offset& b) { return a.r2 < b.r2; });
  }

  Eigen::VectorXd draw(std::mt19937_64& rng, const Eigen::VectorXd& hard_std) const {
    const auto& g = spec_.grid;
    const int n = g.cell_count();
    Eigen::VectorXd value = Eigen::VectorXd::Zero(n);
    std::vector<char> known(n, 0);
    for (std::size_t p = 0; p < hard_.size(); ++p) {
      value[hard_[p].cell] = hard_std[p];
      known[hard_[p].cell] = 1;
    }
    std::vector<int> path;
    path.reserve(n);
    for (int c = 0; c < n; ++c)
      if (!known[c]) path.push_back(c);
    std::shuffle(path.begin(), path.end(), rng);

    std::normal_distribution<double> normal;
    std::vector<Cell> found;
    std::vector<int> found_cells;
    for (int c : path) {
      const int i = c % g.nx;
      const int j = (c / g.nx) % g.ny;
      const int k = c / (g.nx * g.ny);
      found.clear();
      found_cells.clear();
      for (const auto& o : template_) {
        const int ii = i + o.di, jj = j + o.dj, kk = k + o.dk;
        if (ii < 0 || jj < 0 || kk < 0 || ii >= g.nx || jj >= g.ny || kk >= g.nz) continue;
        const int cc = g.index(ii, jj, kk);
        if (!known[cc]) continue;
        found.push_back({o.di, o.dj, o.dk});
        found_cells.push_back(cc);
        if (static_cast<int>(found.size()) == neighbors_) break;
      }
      double mean = 0.0, var = 1.0;
      if (!found.empty()) {
        const int m = static_cast<int>(found.size());
        Eigen::MatrixXd a(m, m);
        Eigen::VectorXd b(m), vals(m);
        for (int p = 0; p < m; ++p) {
          for (int q = 0; q <= p; ++q) a(p, q) = a(q, p) = correlation(found[p], found[q], spec_.variogram);
          a(p, p) += kJitter;
          b[p] = correlation(found[p], {0, 0, 0}, spec_.variogram);
          vals[p] = value[found_cells[p]];
        }
        const Eigen::VectorXd w = a.ldlt().solve(b);
        mean = w.dot(vals);
        var = std::max(0.0, 1.0 - w.dot(b));
      }
      value[c] = mean + std::sqrt(var) * normal(rng);
      known[c] = 1;
    }
    return value;
  }

 private:
  const AssetSpec& spec_;
  std::vector<HardDatum> hard_;
  int neighbors_;
  std::vector<Offset> template_;
};

bool use_cholesky(const AssetSpec& spec, const GenerationOptions& options) {
  switch (options.method) {
    case FieldMethod::cholesky: return true;
    case FieldMethod::sequential: return false;
    case FieldMethod::automatic: break;
  }
  return spec.grid.cell_count() <= options.cholesky_cell_limit;
}

RealizationSet generate(const AssetSpec& spec, int count, std::uint64_t seed, const GenerationOptions& options,
                        const std::vector<HardDatum>& hard) {
  spec.validate();
  if (count < 1) throw ArgumentError("generate_realizations: count must be >= 1");
  std::set<int> cells;
  for (const auto& d : hard) {
    if (d.cell < 0 || d.cell >= spec.grid.cell_count()) throw ArgumentError("hard datum outside the grid");
    if (!cells.insert(d.cell).second) throw ArgumentError("duplicate hard datum at cell " + std::to_string(d.cell));
  }
  const double mean = spec.log_perm_mean;
  const double sd = std::sqrt(spec.log_perm_variance);
  Eigen::VectorXd hard_std(hard.size());
  for (std::size_t p = 0; p < hard.size(); ++p) hard_std[p] = (hard[p].value - mean) / sd;

  RealizationSet set;
  set.asset_id = spec.asset_id;
  set.nx = spec.grid.nx;
  set.ny = spec.grid.ny;
  set.nz = spec.grid.nz;
  set.seed = seed;
  set.hard_data = hard;
  set.fields.resize(count);

  auto finish = [&](int r, const Eigen::VectorXd& z) {
    auto& f = set.fields[r];
    f.resize(z.size());
    for (Eigen::Index c = 0; c < z.size(); ++c) f[c] = mean + sd * z[c];
    for (const auto& d : hard) f[d.cell] = d.value;
  };

  if (use_cholesky(spec, options)) {
    const CholeskySampler sampler(spec, hard);
    for_each_index(options.exec, count, [&](std::size_t r) {
      std::mt19937_64 rng(derive_seed(seed, r));
      finish(static_cast<int>(r), sampler.draw(rng, hard_std));
    });
  } else {
    const SequentialSampler sampler(spec, hard, options.sgs_neighbors);
    for_each_index(options.exec, count, [&](std::size_t r) {
      std::mt19937_64 rng(derive_seed(seed, r));
      finish(static_cast<int>(r), sampler.draw(rng, hard_std));
    });
  }
  return set;
}

}  // namespace

std::vector<HardDatum> resolve_hard_data(const AssetSpec& spec, const GenerationOptions& options) {
  if (!spec.hard_data.empty()) return spec.hard_data;
  const auto reference = generate(spec, 1, spec.hard_data_seed, options, {});
  std::vector<HardDatum> hard;
  for (int c : spec.perforated_cells()) hard.push_back({c, reference.fields[0][c]});
  return hard;
}

RealizationSet generate_realizations(const AssetSpec& spec, int count, std::uint64_t seed,
                                     const GenerationOptions& options) {
  return generate(spec, count, seed, options, resolve_hard_data(spec, options));
}

RealizationSet generate_unconditional(const AssetSpec& spec, int count, std::uint64_t seed,
                                      const GenerationOptions& options) {
  return generate(spec, count, seed, options, {});
}

void save_realizations(const std::filesystem::path& dir, const RealizationSet& set, const AssetSpec& spec) {
  std::filesystem::create_directories(dir);
  BinaryContainer c;
  c.attributes = {{"asset_id", set.asset_id}, {"nx", set.nx},       {"ny", set.ny},
                  {"nz", set.nz},             {"count", set.count()}, {"seed", static_cast<std::int64_t>(set.seed)}};
  TensorRecord fields{"log_perm", {static_cast<std::uint64_t>(set.count()), static_cast<std::uint64_t>(set.cell_count())}, {}};
  fields.data.reserve(static_cast<std::size_t>(set.count()) * set.cell_count());
  for (const auto& f : set.fields) fields.data.insert(fields.data.end(), f.begin(), f.end());
  c.tensors.push_back(std::move(fields));
  TensorRecord hard{"hard_data", {set.hard_data.size(), 2}, {}};
  for (const auto& d : set.hard_data) {
    hard.data.push_back(d.cell);
    hard.data.push_back(d.value);
  }
  c.tensors.push_back(std::move(hard));
  write_container(dir / "realizations.bin", c);
  write_json(dir / "asset.json", to_json(spec));
}

LoadedRealizations load_realizations(const std::filesystem::path& dir) {
  LoadedRealizations out;
  out.spec = asset_from_json(read_json(dir / "asset.json"));
  const auto c = read_container(dir / "realizations.bin");
  auto& set = out.set;
  set.asset_id = static_cast<int>(c.attribute("asset_id"));
  set.nx = static_cast<int>(c.attribute("nx"));
  set.ny = static_cast<int>(c.attribute("ny"));
  set.nz = static_cast<int>(c.attribute("nz"));
  set.seed = static_cast<std::uint64_t>(c.attribute("seed"));
  const auto count = c.attribute("count");
  const auto& fields = c.tensor("log_perm");
  const auto n = static_cast<std::size_t>(set.cell_count());
  if (fields.dims.size() != 2 || fields.dims[0] != static_cast<std::uint64_t>(count) || fields.dims[1] != n) {
    throw LoadError("realizations.bin: log_perm shape does not match its header");
  }
  if (set.nx != out.spec.grid.nx || set.ny != out.spec.grid.ny || set.nz != out.spec.grid.nz) {
    throw LoadError("realizations.bin: grid does not match asset.json");
  }
  for (std::int64_t r = 0; r < count; ++r) {
    set.fields.emplace_back(fields.data.begin() + r * n, fields.data.begin() + (r + 1) * n);
  }
  const auto& hard = c.tensor("hard_data");
  for (std::size_t p = 0; p + 1 < hard.data.size(); p += 2) {
    set.hard_data.push_back({static_cast<int>(hard.data[p]), hard.data[p + 1]});
  }
  return out;
}

}  // namespace clrm::geostat
