#include "cno/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cno/binary_io.hpp"
#include "cno/error.hpp"
#include "cno/parallel.hpp"
#include "cno/rng.hpp"

namespace cno {

void ICSpec::validate() const {
  if (n_waves < 1) throw ConfigError("ic: n_waves must be >= 1");
  if (n_max < 1) throw ConfigError("ic: n_max must be >= 1");
  if (!(amp_hi >= amp_lo)) throw ConfigError("ic: empty amplitude range");
}

Field1D sample_ic(const ICSpec& spec, const Grid1D& grid, Rng& rng) {
  spec.validate();
  std::vector<double> values(grid.nx, 0.0);
  for (int i = 0; i < spec.n_waves; ++i) {
    const double amp = rng.uniform(spec.amp_lo, spec.amp_hi);
    const auto wave = static_cast<double>(rng.uniform_int(1, spec.n_max));
    const double phase = 2.0 * std::numbers::pi * rng.uniform_open01();
    const double k = 2.0 * std::numbers::pi * wave / grid.length;
    for (int j = 0; j < grid.nx; ++j) values[j] += amp * std::sin(k * grid.x(j) + phase);
  }
  return Field1D(grid, std::move(values));
}

int Dataset::n_params() const {
  return (needs_beta(kind) ? 1 : 0) + (needs_nu(kind) ? 1 : 0);
}

void Dataset::validate() const {
  for (const auto& t : trajectories) {
    t.validate();
    if (!(t.grid() == grid)) throw ConfigError("dataset: trajectory grid differs from dataset grid");
    if (t.dt != dt) throw ConfigError("dataset: trajectory stride differs from dataset stride");
    if (t.n_steps() != n_steps()) throw ConfigError("dataset: trajectories have different horizons");
    require_params(kind, t.params);
    if (t.params.dimension() != n_params()) throw ConfigError("dataset: unexpected extra parameters");
  }
}

Dataset generate_dataset(EquationKind kind, const std::vector<ParamVector>& param_grid, int n_per_param,
                         const Grid1D& grid, int n_steps, const ICSpec& spec, const SolverConfig& solver) {
  if (param_grid.empty()) throw ConfigError("generate_dataset: empty parameter grid");
  if (n_per_param < 0) throw ConfigError("generate_dataset: n_per_param must be non-negative");
  spec.validate();
  for (const auto& p : param_grid) require_params(kind, p);

  Dataset ds;
  ds.kind = kind;
  ds.grid = grid;
  ds.dt = solver.sample_dt;
  const std::size_t total = param_grid.size() * static_cast<std::size_t>(n_per_param);
  ds.trajectories.resize(total);

  SolverConfig cfg = solver;
  cfg.n_steps = n_steps;
  parallel_for(total, [&](std::size_t k) {
    Rng rng(spec.seed + k);
    const Field1D u0 = sample_ic(spec, grid, rng);
    const ParamVector& params = param_grid[k / n_per_param];
    try {
      ds.trajectories[k] = solve_trajectory(kind, u0, params, cfg);
    } catch (const Error& e) {
      throw DivergenceError("generate_dataset: sample " + std::to_string(k) + ": " + e.what());
    }
  });
  return ds;
}

namespace {
constexpr std::string_view kMagic = "CNO1DSET";
}  // namespace

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  ds.validate();
  BinaryWriter w;
  w.magic(kMagic);
  w.u32(kDatasetVersion);
  w.u8(static_cast<std::uint8_t>(ds.kind));
  w.u32(static_cast<std::uint32_t>(ds.grid.nx));
  w.f64(ds.grid.length);
  w.f64(ds.dt);
  w.u32(static_cast<std::uint32_t>(ds.n_steps()));
  w.u32(static_cast<std::uint32_t>(ds.trajectories.size()));
  w.u8(static_cast<std::uint8_t>(ds.n_params()));
  for (const auto& t : ds.trajectories) {
    w.f64s(t.params.values());
    for (const auto& s : t.snapshots) w.f64s(s.values());
  }
  w.seal();
  return w.bytes();
}

Dataset decode_dataset(std::vector<std::uint8_t> bytes) {
  BinaryReader r(std::move(bytes), "dataset");
  r.expect_magic(kMagic);
  const auto version = r.u32();
  if (version != kDatasetVersion) {
    throw FormatVersionError("dataset: unsupported version " + std::to_string(version));
  }
  Dataset ds;
  ds.kind = equation_from_tag(r.u8());
  const auto nx = static_cast<int>(r.u32());
  const double length = r.f64();
  try {
    ds.grid = make_grid(nx, length);
  } catch (const ConfigError& e) {
    throw DataError(std::string("dataset: bad grid: ") + e.what());
  }
  ds.dt = r.f64();
  const auto n_steps = r.u32();
  const auto n_traj = r.u32();
  const auto n_params = r.u8();
  if (n_params != ds.n_params()) throw MetadataMismatchError("dataset: parameter count does not match equation");

  const std::size_t per_traj = (static_cast<std::size_t>(n_steps) + 1) * nx;
  r.require(static_cast<std::size_t>(n_traj) * (per_traj + n_params) * 8);
  ds.trajectories.reserve(n_traj);
  std::vector<double> params(n_params);
  for (std::uint32_t i = 0; i < n_traj; ++i) {
    Trajectory t;
    t.dt = ds.dt;
    r.f64s(params);
    std::size_t next = 0;
    if (needs_beta(ds.kind)) t.params.beta = params[next++];
    if (needs_nu(ds.kind)) t.params.nu = params[next++];
    t.snapshots.reserve(n_steps + 1);
    for (std::uint32_t s = 0; s <= n_steps; ++s) {
      std::vector<double> v(nx);
      r.f64s(v);
      t.snapshots.emplace_back(ds.grid, std::move(v));
    }
    ds.trajectories.push_back(std::move(t));
  }
  r.expect_end();
  r.verify_crc();
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  write_file_atomic(path, encode_dataset(ds));
}

Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

std::pair<Dataset, Dataset> split(const Dataset& ds, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("split: ratio must be in [0, 1]");
  // Groups in order of first appearance.
  std::vector<ParamVector> keys;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    const auto& p = ds.trajectories[i].params;
    auto it = std::find(keys.begin(), keys.end(), p);
    if (it == keys.end()) {
      keys.push_back(p);
      groups.push_back({i});
    } else {
      groups[it - keys.begin()].push_back(i);
    }
  }
  Rng rng(seed);
  std::vector<bool> in_first(ds.trajectories.size(), false);
  for (auto& g : groups) {
    rng.shuffle(std::span(g));
    const auto count = static_cast<long>(g.size());
    long take = std::lround(ratio * static_cast<double>(count));
    if (ratio > 0.0 && ratio < 1.0 && count >= 2) take = std::clamp(take, 1L, count - 1);
    for (long i = 0; i < take; ++i) in_first[g[i]] = true;
  }
  Dataset first, second;
  for (Dataset* d : {&first, &second}) {
    d->kind = ds.kind;
    d->grid = ds.grid;
    d->dt = ds.dt;
  }
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    (in_first[i] ? first : second).trajectories.push_back(ds.trajectories[i]);
  }
  return {std::move(first), std::move(second)};
}

}  // namespace cno
