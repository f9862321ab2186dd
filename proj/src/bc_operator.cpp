#include "cno/bc_operator.hpp"

#include <cmath>
#include <iostream>
#include <string>

#include "cno/error.hpp"

namespace cno {

namespace {

Field1D impulse(const Grid1D& grid, int index) {
  std::vector<double> v(grid.nx, 0.0);
  v[index] = 1.0;
  return Field1D(grid, std::move(v));
}

Field1D checked(const KernelHandle& K, const Field1D& u) {
  Field1D out = K(u);
  if (out.grid() != u.grid()) throw ConfigError("bc correction: kernel changed the grid");
  return out;
}

}  // namespace

KernelProbe measure_kernel(const KernelHandle& K, const Grid1D& grid) {
  const int L = grid.nx - 1;
  return KernelProbe{checked(K, impulse(grid, 0))[0], checked(K, impulse(grid, L))[L]};
}

KernelProbe probe_kernel(const KernelHandle& K, const Grid1D& grid, double floor) {
  const KernelProbe p = measure_kernel(K, grid);
  if (!(std::abs(p.k00) >= floor) || !(std::abs(p.kLL) >= floor)) {
    throw DegenerateKernelError("bc probe: kernel diagonal below floor (k00=" + std::to_string(p.k00) +
                                ", kLL=" + std::to_string(p.kLL) + ")");
  }
  return p;
}

bool apply_dirichlet_correction_lenient(const KernelHandle& K, const Field1D& u0, double alpha_left,
                                        double alpha_right, const KernelProbe& probe, Field1D& out, double floor) {
  const int L = u0.size() - 1;
  const bool adjust = std::abs(probe.k00) >= floor && std::abs(probe.kLL) >= floor;
  std::vector<double> u = u0.vector();
  if (adjust) {
    const Field1D z = checked(K, u0);
    u[0] = 2.0 * u0[0] - z[0] / probe.k00;
    u[L] = 2.0 * u0[L] - z[L] / probe.kLL;
  }
  // Field1D rejects non-finite values with DivergenceError.
  std::vector<double> v = checked(K, Field1D(u0.grid(), std::move(u))).vector();
  v[0] = alpha_left;
  v[L] = alpha_right;
  out = Field1D(u0.grid(), std::move(v));
  return adjust;
}

Field1D apply_dirichlet_correction(const KernelHandle& K, const Field1D& u0, double alpha_left, double alpha_right,
                                   const KernelProbe& probe, double floor) {
  if (!(std::abs(probe.k00) >= floor) || !(std::abs(probe.kLL) >= floor)) {
    throw DegenerateKernelError("bc correction: probe diagonal below floor");
  }
  Field1D out;
  apply_dirichlet_correction_lenient(K, u0, alpha_left, alpha_right, probe, out, floor);
  return out;
}

KernelProbe ProbeCache::get(const ParamForward& forward, const Grid1D& grid, const ParamVector& gamma) {
  const Key key{grid.nx, grid.length, gamma.values(), (gamma.beta ? 1 : 0) | (gamma.nu ? 2 : 0)};
  std::lock_guard lock(mutex_);
  auto it = probes_.find(key);
  if (it != probes_.end()) return it->second;
  const KernelProbe p = measure_kernel([&](const Field1D& u) { return forward(u, gamma); }, grid);
  ++count_;
  probes_.emplace(key, p);
  return p;
}

int ProbeCache::probe_count() const {
  std::lock_guard lock(mutex_);
  return count_;
}

void ProbeCache::clear() {
  std::lock_guard lock(mutex_);
  probes_.clear();
  count_ = 0;
}

BcWrappedForward::BcWrappedForward(ParamForward forward, std::shared_ptr<ProbeCache> cache)
    : forward_(std::move(forward)), cache_(std::move(cache)) {
  if (!forward_) throw ConfigError("bc wrap: empty forward map");
  if (!cache_) throw ConfigError("bc wrap: null probe cache");
}

Field1D BcWrappedForward::operator()(const Field1D& u, const ParamVector& gamma, double alpha_left,
                                     double alpha_right) const {
  const KernelProbe probe = cache_->get(forward_, u.grid(), gamma);
  Field1D out;
  const KernelHandle K = [&](const Field1D& x) { return forward_(x, gamma); };
  if (!apply_dirichlet_correction_lenient(K, u, alpha_left, alpha_right, probe, out)) {
    std::cerr << "warning: bc probe diagonal below " << kProbeFloor << " (k00=" << probe.k00
              << ", kLL=" << probe.kLL << "); skipping boundary pre-adjustment\n";
  }
  return out;
}

Trajectory BcWrappedForward::rollout(const Field1D& u0, const ParamVector& gamma, const BoundaryValues& bc,
                                     int n_steps, double dt) const {
  if (n_steps < 0) throw ConfigError("rollout: n_steps must be >= 0");
  if (bc.left.size() != bc.right.size() || static_cast<int>(bc.size()) < n_steps + 1) {
    throw ConfigError("bc rollout: boundary values cover " + std::to_string(bc.size()) + " steps, need " +
                      std::to_string(n_steps + 1));
  }
  Trajectory traj;
  traj.dt = dt;
  traj.params = gamma;
  traj.snapshots.push_back(u0);
  for (int t = 0; t < n_steps; ++t) {
    traj.snapshots.push_back((*this)(traj.snapshots.back(), gamma, bc.left[t + 1], bc.right[t + 1]));
  }
  return traj;
}

BcWrappedForward wrap_with_bc(ParamForward forward, std::shared_ptr<ProbeCache> cache) {
  return BcWrappedForward(std::move(forward), std::move(cache));
}

}  // namespace cno
