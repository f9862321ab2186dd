#include "cno/eval.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "cno/error.hpp"
#include "cno/fft.hpp"
#include "cno/parallel.hpp"
#include "cno/rng.hpp"

namespace cno {

namespace {

// Indices of the snapshots to compare.
std::pair<int, int> compared_range(const Trajectory& pred, const Trajectory& truth) {
  if (pred.snapshots.empty() || pred.snapshots.size() != truth.snapshots.size()) {
    throw ConfigError("metrics: trajectories have different lengths");
  }
  if (pred.grid() != truth.grid()) throw ConfigError("metrics: trajectories live on different grids");
  const int T = truth.n_steps();
  return T == 0 ? std::pair{0, 0} : std::pair{1, T};
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

MetricReport evaluate(const Trajectory& pred, const Trajectory& truth) {
  const auto [first, last] = compared_range(pred, truth);
  MetricReport r;
  for (int t = first; t <= last; ++t) {
    const auto& p = pred.snapshots[t];
    const auto& q = truth.snapshots[t];
    const int n = q.size();
    double se = 0.0;
    double ae = 0.0;
    double norm = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = p[j] - q[j];
      se += d * d;
      ae += std::abs(d);
      norm += q[j] * q[j];
    }
    r.step_mse.push_back(se / n);
    r.step_mae.push_back(ae / n);
    r.step_rel_l2.push_back(std::sqrt(se) / (std::sqrt(norm) + kRelL2Eps));
    r.step_boundary_mae.push_back(0.5 * (std::abs(p[0] - q[0]) + std::abs(p[n - 1] - q[n - 1])));
  }
  r.mse = mean_of(r.step_mse);
  r.mae = mean_of(r.step_mae);
  r.rel_l2 = mean_of(r.step_rel_l2);
  r.boundary_mae = mean_of(r.step_boundary_mae);
  return r;
}

double rel_l2(const Trajectory& pred, const Trajectory& truth) { return evaluate(pred, truth).rel_l2; }

double boundary_mae(const Trajectory& pred, const Trajectory& truth) { return evaluate(pred, truth).boundary_mae; }

double interior_mae(const Trajectory& pred, const Trajectory& truth) {
  const auto [first, last] = compared_range(pred, truth);
  double sum = 0.0;
  long count = 0;
  for (int t = first; t <= last; ++t) {
    const int n = truth.snapshots[t].size();
    for (int j = 1; j + 1 < n; ++j) {
      sum += std::abs(pred.snapshots[t][j] - truth.snapshots[t][j]);
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

double peclet(double beta, double nu, double length) {
  if (!(nu > 0.0)) throw ConfigError("peclet: nu must be positive");
  return beta * length / nu;
}

double reynolds(const Field1D& u, double nu_eff, double length) {
  if (!(nu_eff > 0.0)) throw ConfigError("reynolds: nu must be positive");
  double mean = 0.0;
  for (double x : u.values()) mean += x;
  mean /= u.size();
  return std::abs(mean) * length / nu_eff;
}

double reynolds(EquationKind kind, const Trajectory& traj) {
  return reynolds(traj.snapshots.front(), effective_diffusivity(kind, traj.params), traj.grid().length);
}

std::string_view to_string(SweepAxis axis) { return axis == SweepAxis::Peclet ? "peclet" : "reynolds"; }

std::vector<Bucket> default_buckets() {
  const double inf = std::numeric_limits<double>::infinity();
  return {{0.0, 0.5}, {0.5, 2.0}, {2.0, 10.0}, {10.0, 50.0}, {50.0, 100.0}, {100.0, 200.0}, {200.0, inf}};
}

void SweepSpec::validate() const {
  if (points.empty()) throw ConfigError("sweep: no parameter points");
  if (buckets.empty()) throw ConfigError("sweep: no buckets");
  for (const auto& b : buckets) {
    if (!(b.lo <= b.hi)) throw ConfigError("sweep: bucket with lo > hi");
  }
  if (n_ics < 1) throw ConfigError("sweep: n_ics must be >= 1");
  if (n_steps < 1) throw ConfigError("sweep: n_steps must be >= 1");
  if (axis == SweepAxis::Peclet && !(needs_beta(kind) && needs_nu(kind))) {
    throw ConfigError("sweep: the Peclet axis needs an equation with beta and nu");
  }
  if (axis == SweepAxis::Reynolds && !needs_nu(kind)) throw ConfigError("sweep: the Reynolds axis needs nu");
  for (const auto& p : points) require_params(kind, p);
  ic.validate();
}

SweepResult run_sweep(const Predictor& predict, const SweepSpec& spec) {
  spec.validate();
  const Grid1D grid = make_grid(spec.nx);
  const std::size_t n = spec.points.size() * static_cast<std::size_t>(spec.n_ics);
  SweepResult result;
  result.axis = spec.axis;
  result.sample_values.assign(n, 0.0);
  result.sample_errors.assign(n, 0.0);
  SolverConfig solver = spec.solver;
  solver.n_steps = spec.n_steps;

  parallel_for(n, [&](std::size_t k) {
    const std::size_t i = k / spec.n_ics;
    const std::size_t j = k % spec.n_ics;
    ICSpec ic = spec.ic;
    ic.seed = spec.seed + i * spec.n_ics + j;
    Rng rng(ic.seed);
    const Field1D u0 = sample_ic(ic, grid, rng);
    const ParamVector& gamma = spec.points[i];
    const Trajectory truth = solve_trajectory(spec.kind, u0, gamma, solver);
    result.sample_values[k] = spec.axis == SweepAxis::Peclet
                                  ? peclet(*gamma.beta, effective_diffusivity(spec.kind, gamma), grid.length)
                                  : reynolds(spec.kind, truth);
    result.sample_errors[k] = rel_l2(predict(truth), truth);
  });

  std::vector<std::vector<double>> members(spec.buckets.size());
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t b = 0;
    while (b < spec.buckets.size() && !spec.buckets[b].contains(result.sample_values[k])) ++b;
    if (b == spec.buckets.size()) {
      throw ConfigError("sweep: " + std::string(to_string(spec.axis)) + " value " +
                        format_g17(result.sample_values[k]) + " falls outside every bucket");
    }
    members[b].push_back(result.sample_errors[k]);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t b = 0; b < spec.buckets.size(); ++b) {
    SweepRow row{spec.buckets[b], nan, nan, static_cast<int>(members[b].size())};
    if (row.n > 0) {
      row.mean = mean_of(members[b]);
      double var = 0.0;
      for (double e : members[b]) var += (e - row.mean) * (e - row.mean);
      row.std = std::sqrt(var / row.n);
    }
    result.rows.push_back(row);
  }
  return result;
}

std::string format_g17(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string sweep_csv(const SweepResult& result) {
  std::string out = "axis,value,rel_l2_mean,rel_l2_std,n_samples\n";
  for (const auto& row : result.rows) {
    out += std::string(to_string(result.axis)) + "," + format_g17(row.bucket.hi) + "," + format_g17(row.mean) + "," +
           format_g17(row.std) + "," + std::to_string(row.n) + "\n";
  }
  return out;
}

Field1D spectral_resample(const Field1D& u, int nx_new) {
  const Grid1D target = make_grid(nx_new, u.grid().length);
  const int n = u.size();
  if (nx_new == n) return u;
  const auto spec = rfft(u.values());
  std::vector<Complex> out(nx_new / 2 + 1, Complex(0.0, 0.0));
  const double scale = static_cast<double>(nx_new) / n;
  const int keep = std::min(n, nx_new) / 2;  // index of the smaller grid's Nyquist bin
  for (int k = 0; k < keep; ++k) out[k] = spec[k] * scale;
  if (nx_new > n) {
    // The old Nyquist bin holds both +k and -k; split it across the two new bins.
    out[keep] = Complex(0.5 * spec[keep].real() * scale, 0.0);
  } else {
    // Fold +k and -k of the finer grid onto the new Nyquist bin.
    out[keep] = Complex(2.0 * spec[keep].real() * scale, 0.0);
  }
  return Field1D(target, irfft(out, nx_new));
}

Trajectory spectral_resample(const Trajectory& traj, int nx_new) {
  Trajectory out;
  out.dt = traj.dt;
  out.params = traj.params;
  for (const auto& s : traj.snapshots) out.snapshots.push_back(spectral_resample(s, nx_new));
  return out;
}

namespace {

MetricReport slice(const Trajectory& pred, const Trajectory& truth, int first, int last) {
  Trajectory p;
  Trajectory q;
  p.dt = q.dt = truth.dt;
  // Start from the snapshot before the window so step t of the slice is step first - 1 + t.
  for (int t = first - 1; t <= last; ++t) {
    p.snapshots.push_back(pred.snapshots[t]);
    q.snapshots.push_back(truth.snapshots[t]);
  }
  return evaluate(p, q);
}

}  // namespace

ExtrapolationReport extrapolation_eval(const RolloutFn& rollout, EquationKind kind, const Field1D& u0,
                                       const ParamVector& gamma, int train_horizon, int extra_steps,
                                       const SolverConfig& solver) {
  if (train_horizon < 1 || extra_steps < 0) throw ConfigError("extrapolation: invalid horizon");
  const int total = train_horizon + extra_steps;
  SolverConfig cfg = solver;
  cfg.n_steps = total;
  const Trajectory truth = solve_trajectory(kind, u0, gamma, cfg);
  const Trajectory pred = rollout(u0, gamma, total);
  ExtrapolationReport r;
  r.all = evaluate(pred, truth);
  r.within = slice(pred, truth, 1, train_horizon);
  if (extra_steps > 0) r.beyond = slice(pred, truth, train_horizon + 1, total);
  return r;
}

}  // namespace cno
