#pragma once

#include <optional>
#include <span>
#include <vector>

namespace cno {

/// Uniform periodic 1D grid with nodes at x_j = j * dx, j in [0, nx).
struct Grid1D {
  int nx = 0;
  double length = 1.0;

  double dx() const { return length / nx; }
  double x(int j) const { return j * dx(); }

  friend bool operator==(const Grid1D&, const Grid1D&) = default;
};

/// Builds a grid; nx must be even and at least 8, length positive.
Grid1D make_grid(int nx, double length = 1.0);

/// Scalar field sampled on a Grid1D. Values are always finite.
class Field1D {
 public:
  Field1D() = default;
  /// Throws ConfigError on length mismatch and DivergenceError on non-finite values.
  Field1D(Grid1D grid, std::vector<double> values);

  static Field1D zeros(Grid1D grid);
  static Field1D constant(Grid1D grid, double value);
  template <class F>
  static Field1D sample(Grid1D grid, F&& f) {
    std::vector<double> v(grid.nx);
    for (int j = 0; j < grid.nx; ++j) v[j] = f(grid.x(j));
    return Field1D(grid, std::move(v));
  }

  const Grid1D& grid() const { return grid_; }
  int size() const { return grid_.nx; }
  std::span<const double> values() const { return values_; }
  const std::vector<double>& vector() const { return values_; }
  double operator[](int j) const { return values_[j]; }

  Field1D operator+(const Field1D& other) const;
  Field1D operator-(const Field1D& other) const;
  Field1D operator*(double s) const;

  friend bool operator==(const Field1D&, const Field1D&) = default;

 private:
  Grid1D grid_{};
  std::vector<double> values_;
};

/// PDE parameters: convection velocity beta and diffusivity nu, each optional.
struct ParamVector {
  std::optional<double> beta;
  std::optional<double> nu;

  /// Throws ConfigError when nu is present and not strictly positive.
  void validate() const;
  int dimension() const { return (beta ? 1 : 0) + (nu ? 1 : 0); }
  /// Present values in canonical order: beta, then nu.
  std::vector<double> values() const;

  friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

/// Time-indexed snapshots at a fixed stride; snapshots[0] is the state at t = 0.
struct Trajectory {
  std::vector<Field1D> snapshots;
  double dt = 0.01;
  ParamVector params;

  int n_steps() const { return static_cast<int>(snapshots.size()) - 1; }
  const Grid1D& grid() const { return snapshots.front().grid(); }
  /// Throws ConfigError if snapshots are empty or do not share one grid.
  void validate() const;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Dirichlet values at x_0 and x_L for each time index of a horizon.
struct BoundaryValues {
  std::vector<double> left;
  std::vector<double> right;

  std::size_t size() const { return left.size(); }
  static BoundaryValues from_trajectory(const Trajectory& traj);
};

/// Values at indices 0 and nx - 1.
std::pair<double, double> boundary_pair(const Field1D& field);

}  // namespace cno
