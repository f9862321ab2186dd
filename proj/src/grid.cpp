#include "cno/grid.hpp"

#include <cmath>
#include <string>

#include "cno/error.hpp"

namespace cno {

Grid1D make_grid(int nx, double length) {
  if (nx < 8) throw ConfigError("grid: nx must be at least 8, got " + std::to_string(nx));
  if (nx % 2 != 0) throw ConfigError("grid: nx must be even, got " + std::to_string(nx));
  if (!(length > 0.0) || !std::isfinite(length)) throw ConfigError("grid: length must be positive");
  return Grid1D{nx, length};
}

Field1D::Field1D(Grid1D grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
  if (static_cast<int>(values_.size()) != grid_.nx) {
    throw ConfigError("field: " + std::to_string(values_.size()) + " values for a grid of " +
                      std::to_string(grid_.nx) + " nodes");
  }
  for (std::size_t j = 0; j < values_.size(); ++j) {
    if (!std::isfinite(values_[j])) {
      throw DivergenceError("field: non-finite value at node " + std::to_string(j));
    }
  }
}

Field1D Field1D::zeros(Grid1D grid) { return Field1D(grid, std::vector<double>(grid.nx, 0.0)); }

Field1D Field1D::constant(Grid1D grid, double value) {
  return Field1D(grid, std::vector<double>(grid.nx, value));
}

namespace {
void require_same_grid(const Field1D& a, const Field1D& b) {
  if (!(a.grid() == b.grid())) throw ConfigError("field arithmetic on different grids");
}
}  // namespace

Field1D Field1D::operator+(const Field1D& other) const {
  require_same_grid(*this, other);
  std::vector<double> v(values_);
  for (std::size_t j = 0; j < v.size(); ++j) v[j] += other.values_[j];
  return Field1D(grid_, std::move(v));
}

Field1D Field1D::operator-(const Field1D& other) const {
  require_same_grid(*this, other);
  std::vector<double> v(values_);
  for (std::size_t j = 0; j < v.size(); ++j) v[j] -= other.values_[j];
  return Field1D(grid_, std::move(v));
}

Field1D Field1D::operator*(double s) const {
  std::vector<double> v(values_);
  for (double& x : v) x *= s;
  return Field1D(grid_, std::move(v));
}

void ParamVector::validate() const {
  if (beta && !std::isfinite(*beta)) throw ConfigError("params: beta must be finite");
  if (nu && !(*nu > 0.0 && std::isfinite(*nu))) throw ConfigError("params: nu must be strictly positive");
}

std::vector<double> ParamVector::values() const {
  std::vector<double> out;
  if (beta) out.push_back(*beta);
  if (nu) out.push_back(*nu);
  return out;
}

void Trajectory::validate() const {
  if (snapshots.empty()) throw ConfigError("trajectory: no snapshots");
  for (const auto& s : snapshots) {
    if (!(s.grid() == snapshots.front().grid())) throw ConfigError("trajectory: snapshots on mixed grids");
  }
}

BoundaryValues BoundaryValues::from_trajectory(const Trajectory& traj) {
  BoundaryValues bc;
  bc.left.reserve(traj.snapshots.size());
  bc.right.reserve(traj.snapshots.size());
  for (const auto& s : traj.snapshots) {
    auto [l, r] = boundary_pair(s);
    bc.left.push_back(l);
    bc.right.push_back(r);
  }
  return bc;
}

std::pair<double, double> boundary_pair(const Field1D& field) {
  return {field[0], field[field.size() - 1]};
}

}  // namespace cno
