#pragma once

// Dirichlet boundary correction for a learned one-step map. The map is probed with unit
// impulses at both ends, the boundary inputs are pre-adjusted, the map is re-applied, and
// the prescribed values are finally assigned. Only that last assignment guarantees the
// boundary values; for a nonlinear map the probes are a linearization heuristic.

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "cno/grid.hpp"

namespace cno {

using KernelHandle = std::function<Field1D(const Field1D&)>;

struct KernelProbe {
  double k00 = 1.0;
  double kLL = 1.0;
};

inline constexpr double kProbeFloor = 1e-8;

/// k00 = K(e_0)[0], kLL = K(e_L)[L]. Throws DegenerateKernelError when either magnitude is
/// below floor.
KernelProbe probe_kernel(const KernelHandle& K, const Grid1D& grid, double floor = kProbeFloor);

/// Probes without the floor check; the caller decides how to handle tiny diagonals.
KernelProbe measure_kernel(const KernelHandle& K, const Grid1D& grid);

/// z = K(u0); u = u0 with u[0] = 2 u0[0] - z[0] / k00 and u[L] = 2 u0[L] - z[L] / kLL;
/// u = K(u); u[0] = alpha_left; u[L] = alpha_right. Throws DegenerateKernelError when a
/// divisor is below floor and DivergenceError when K produces non-finite values.
Field1D apply_dirichlet_correction(const KernelHandle& K, const Field1D& u0, double alpha_left, double alpha_right,
                                   const KernelProbe& probe, double floor = kProbeFloor);

/// Same correction, but a probe below floor skips the pre-adjustment instead of throwing.
/// Returns whether the pre-adjustment ran.
bool apply_dirichlet_correction_lenient(const KernelHandle& K, const Field1D& u0, double alpha_left,
                                        double alpha_right, const KernelProbe& probe, Field1D& out,
                                        double floor = kProbeFloor);

/// One-step model with its parameters supplied per call.
using ParamForward = std::function<Field1D(const Field1D&, const ParamVector&)>;

/// Probe results keyed by (grid, parameter vector). Thread-safe.
class ProbeCache {
 public:
  KernelProbe get(const ParamForward& forward, const Grid1D& grid, const ParamVector& gamma);
  /// Number of probe pairs evaluated so far.
  int probe_count() const;
  void clear();

 private:
  struct Key {
    int nx;
    double length;
    std::vector<double> params;
    int mask;
    auto operator<=>(const Key&) const = default;
  };
  mutable std::mutex mutex_;
  std::map<Key, KernelProbe> probes_;
  int count_ = 0;
};

/// A forward map wrapped with the correction. Each call probes at most once per (grid, gamma)
/// through the shared cache and pins the boundary to (alpha_left, alpha_right).
class BcWrappedForward {
 public:
  BcWrappedForward(ParamForward forward, std::shared_ptr<ProbeCache> cache = std::make_shared<ProbeCache>());

  Field1D operator()(const Field1D& u, const ParamVector& gamma, double alpha_left, double alpha_right) const;
  /// snapshots[0] = u0; step t + 1 is pinned to bc.left[t + 1], bc.right[t + 1].
  Trajectory rollout(const Field1D& u0, const ParamVector& gamma, const BoundaryValues& bc, int n_steps,
                     double dt = 0.01) const;
  const ProbeCache& cache() const { return *cache_; }

 private:
  ParamForward forward_;
  std::shared_ptr<ProbeCache> cache_;
};

BcWrappedForward wrap_with_bc(ParamForward forward, std::shared_ptr<ProbeCache> cache = std::make_shared<ProbeCache>());

}  // namespace cno
