#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "cno/fd_solvers.hpp"
#include "cno/grid.hpp"

namespace cno {

class Rng;

/// Initial conditions u0(x) = sum_i A_i sin(2 pi n_i x / L + phi_i).
struct ICSpec {
  int n_waves = 2;
  int n_max = 8;
  double amp_lo = 0.0;
  double amp_hi = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Draws one initial condition. Per wave: amplitude in [amp_lo, amp_hi), integer
/// wavenumber in [1, n_max], phase in (0, 2 pi), in that order.
Field1D sample_ic(const ICSpec& spec, const Grid1D& grid, Rng& rng);

struct Dataset {
  EquationKind kind = EquationKind::Convection;
  Grid1D grid{};
  double dt = 0.01;
  std::vector<Trajectory> trajectories;

  int n_steps() const { return trajectories.empty() ? 0 : trajectories.front().n_steps(); }
  /// Number of parameters stored per trajectory for this equation.
  int n_params() const;
  bool empty() const { return trajectories.empty(); }
  /// Throws ConfigError on mixed grids, strides, horizons, or missing parameters.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Trajectory k (row-major over param_grid x n_per_param) uses initial-condition seed
/// spec.seed + k. Generation runs across worker_count() threads.
Dataset generate_dataset(EquationKind kind, const std::vector<ParamVector>& param_grid, int n_per_param,
                         const Grid1D& grid, int n_steps, const ICSpec& spec,
                         const SolverConfig& solver = SolverConfig{});

/// Binary, little-endian: "CNO1DSET", u32 version, u8 equation, u32 nx, f64 length,
/// f64 dt, u32 n_steps, u32 n_traj, u8 n_params, then per trajectory the parameter
/// values followed by (n_steps + 1) * nx samples, then CRC32 of all preceding bytes.
inline constexpr std::uint32_t kDatasetVersion = 1;
std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::vector<std::uint8_t> bytes);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Stratified shuffled split. Within each distinct ParamVector, round(ratio * count)
/// trajectories go to the first part, clamped so both parts keep one when 0 < ratio < 1
/// and count >= 2. Each part keeps the input order.
std::pair<Dataset, Dataset> split(const Dataset& ds, double ratio, std::uint64_t seed);

}  // namespace cno
