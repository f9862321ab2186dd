#pragma once

// Metrics, dimensionless numbers, Peclet/Reynolds sweeps and resolution-transfer helpers.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cno/dataset.hpp"
#include "cno/fd_solvers.hpp"
#include "cno/grid.hpp"

namespace cno {

inline constexpr double kRelL2Eps = 1e-8;

/// Metrics compare predicted steps t = 1..T (the shared initial state is skipped); a
/// zero-step pair compares t = 0. Per-step arrays have one entry per compared step.
struct MetricReport {
  double mse = 0.0;
  double mae = 0.0;
  double rel_l2 = 0.0;
  double boundary_mae = 0.0;
  std::vector<double> step_mse;
  std::vector<double> step_mae;
  std::vector<double> step_rel_l2;
  std::vector<double> step_boundary_mae;
};

/// Throws ConfigError when the trajectories differ in length or grid.
MetricReport evaluate(const Trajectory& pred, const Trajectory& truth);
/// Mean over compared steps of ||u - u_hat||_2 / (||u||_2 + 1e-8), discrete sums over nodes.
double rel_l2(const Trajectory& pred, const Trajectory& truth);
/// MAE over nodes 0 and nx - 1 of every compared step.
double boundary_mae(const Trajectory& pred, const Trajectory& truth);
/// MAE over interior nodes 1..nx-2 of every compared step.
double interior_mae(const Trajectory& pred, const Trajectory& truth);

double peclet(double beta, double nu, double length = 1.0);
/// |mean(u)| * length / nu_eff.
double reynolds(const Field1D& u, double nu_eff, double length = 1.0);
/// Reynolds number of a trajectory from its initial snapshot and the equation's effective diffusivity.
double reynolds(EquationKind kind, const Trajectory& traj);

enum class SweepAxis { Peclet, Reynolds };
std::string_view to_string(SweepAxis axis);

/// Closed interval; hi may be +inf.
struct Bucket {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return x >= lo && x <= hi; }
};

/// [0, 0.5], [0.5, 2], [2, 10], [10, 50], [50, 100], [100, 200], [200, inf].
std::vector<Bucket> default_buckets();

struct SweepSpec {
  SweepAxis axis = SweepAxis::Peclet;
  EquationKind kind = EquationKind::ConvectionDiffusion;
  std::vector<ParamVector> points;
  std::vector<Bucket> buckets = default_buckets();
  int n_ics = 5;
  int nx = 128;
  int n_steps = 10;
  ICSpec ic{};
  SolverConfig solver{};
  std::uint64_t seed = 0;
  void validate() const;
};

struct SweepRow {
  Bucket bucket;
  double mean = 0.0;  // NaN when the bucket is empty
  double std = 0.0;   // population standard deviation; NaN when empty
  int n = 0;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::Peclet;
  std::vector<SweepRow> rows;  // one per bucket, in spec order
  std::vector<double> sample_values;  // Pe or Re of every sample
  std::vector<double> sample_errors;  // rel-L2 of every sample
};

/// Prediction for a ground-truth trajectory, typically a rollout from its initial state
/// (optionally pinned to its boundary values). Must be safe to call concurrently.
using Predictor = std::function<Trajectory(const Trajectory& truth)>;

/// Sample (point i, ic j) draws its initial condition with seed spec.seed + i * n_ics + j.
/// Each sample goes to the first bucket containing its Pe or Re; a sample no bucket
/// contains throws ConfigError. Empty buckets are kept with n = 0.
SweepResult run_sweep(const Predictor& predict, const SweepSpec& spec);
/// Header axis,value,rel_l2_mean,rel_l2_std,n_samples; value is the bucket's upper edge;
/// 17 significant digits; LF endings.
std::string sweep_csv(const SweepResult& result);

/// FFT zero padding (nx_new > nx) or truncation (nx_new < nx), amplitude preserving.
Field1D spectral_resample(const Field1D& u, int nx_new);
Trajectory spectral_resample(const Trajectory& traj, int nx_new);

using RolloutFn = std::function<Trajectory(const Field1D& u0, const ParamVector& gamma, int n_steps)>;

struct ExtrapolationReport {
  MetricReport all;     // every step up to train_horizon + extra_steps
  MetricReport within;  // steps 1..train_horizon
  MetricReport beyond;  // remaining steps; empty arrays when extra_steps = 0
};

/// Rolls out to train_horizon + extra_steps and compares with the finite-difference truth.
ExtrapolationReport extrapolation_eval(const RolloutFn& rollout, EquationKind kind, const Field1D& u0,
                                       const ParamVector& gamma, int train_horizon, int extra_steps,
                                       const SolverConfig& solver = SolverConfig{});

/// Formats with 17 significant digits ("nan", "inf" for non-finite values).
std::string format_g17(double x);

}  // namespace cno
