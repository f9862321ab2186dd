#include "cno/fd_solvers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cno/error.hpp"
#include "cno/fft.hpp"

namespace cno {

std::string_view to_string(EquationKind kind) {
  switch (kind) {
    case EquationKind::Convection: return "convection";
    case EquationKind::Diffusion: return "diffusion";
    case EquationKind::NonlinearConvection: return "nonlinear_convection";
    case EquationKind::Burgers: return "burgers";
    case EquationKind::ConvectionDiffusion: return "convection_diffusion";
  }
  return "unknown";
}

EquationKind equation_from_string(std::string_view name) {
  for (std::uint8_t t = 0; t <= 4; ++t) {
    auto kind = static_cast<EquationKind>(t);
    if (to_string(kind) == name) return kind;
  }
  throw ConfigError("unknown equation \"" + std::string(name) + "\"");
}

EquationKind equation_from_tag(std::uint8_t tag) {
  if (tag > 4) throw DataError("unknown equation tag " + std::to_string(tag));
  return static_cast<EquationKind>(tag);
}

bool needs_beta(EquationKind kind) {
  return kind == EquationKind::Convection || kind == EquationKind::ConvectionDiffusion;
}

bool needs_nu(EquationKind kind) {
  return kind == EquationKind::Diffusion || kind == EquationKind::Burgers ||
         kind == EquationKind::ConvectionDiffusion;
}

void require_params(EquationKind kind, const ParamVector& params) {
  params.validate();
  if (needs_beta(kind) && !params.beta) {
    throw ConfigError(std::string(to_string(kind)) + " requires parameter beta");
  }
  if (needs_nu(kind) && !params.nu) {
    throw ConfigError(std::string(to_string(kind)) + " requires parameter nu");
  }
}

double effective_diffusivity(EquationKind kind, const ParamVector& params) {
  if (!needs_nu(kind)) return 0.0;
  require_params(kind, params);
  return kind == EquationKind::Burgers ? *params.nu / std::numbers::pi : *params.nu;
}

namespace {

bool is_nonlinear(EquationKind kind) {
  return kind == EquationKind::NonlinearConvection || kind == EquationKind::Burgers;
}

double advective_speed(EquationKind kind, const ParamVector& params, double u_max) {
  if (is_nonlinear(kind)) return u_max;
  if (needs_beta(kind)) return std::abs(*params.beta);
  return 0.0;
}

// Courant-number slack for rounding in dt_int = sample_dt / m.
constexpr double kSlack = 1e-12;

void require_stable(bool ok, const char* scheme, double courant, double diffusion) {
  if (!ok) {
    throw StabilityError(std::string(scheme) + ": unstable step (courant " + std::to_string(courant) +
                         ", diffusion number " + std::to_string(diffusion) + ")");
  }
}

double max_abs(const std::vector<double>& u) {
  double m = 0.0;
  for (double v : u) m = std::max(m, std::abs(v));
  return m;
}

inline int wrap(int j, int n) { return j < 0 ? j + n : (j >= n ? j - n : j); }

// In-place kernels on raw node values. dx is the grid spacing.

void upwind1_inplace(std::vector<double>& u, double beta, double dt, double dx) {
  const int n = static_cast<int>(u.size());
  const double c = beta * dt / dx;
  require_stable(std::abs(c) <= 1.0 + kSlack, "convection/upwind1", std::abs(c), 0.0);
  std::vector<double> out(n);
  if (beta >= 0.0) {
    for (int j = 0; j < n; ++j) out[j] = u[j] - c * (u[j] - u[wrap(j - 1, n)]);
  } else {
    for (int j = 0; j < n; ++j) out[j] = u[j] - c * (u[wrap(j + 1, n)] - u[j]);
  }
  u.swap(out);
}

void diffusion_inplace(std::vector<double>& u, double nu_eff, double dt, double dx) {
  const int n = static_cast<int>(u.size());
  const double mu = nu_eff * dt / (dx * dx);
  require_stable(mu >= 0.0 && mu <= 0.5 + kSlack, "diffusion/central", 0.0, mu);
  std::vector<double> out(n);
  for (int j = 0; j < n; ++j) out[j] = u[j] + mu * (u[wrap(j + 1, n)] - 2.0 * u[j] + u[wrap(j - 1, n)]);
  u.swap(out);
}

// Godunov flux for the convex flux f(u) = u^2 / 2.
inline double godunov_flux(double ul, double ur) {
  if (ul > ur) {  // shock: upwind by the interface (Rankine-Hugoniot) velocity
    return (ul + ur >= 0.0) ? 0.5 * ul * ul : 0.5 * ur * ur;
  }
  if (ul >= 0.0) return 0.5 * ul * ul;  // rarefaction moving right
  if (ur <= 0.0) return 0.5 * ur * ur;  // rarefaction moving left
  return 0.0;                           // transonic rarefaction
}

void nonlinear_inplace(std::vector<double>& u, double dt, double dx) {
  const int n = static_cast<int>(u.size());
  const double c = max_abs(u) * dt / dx;
  require_stable(c <= 1.0 + kSlack, "nonlinear_convection/godunov", c, 0.0);
  std::vector<double> flux(n);  // flux[j] sits at interface j + 1/2
  for (int j = 0; j < n; ++j) flux[j] = godunov_flux(u[j], u[wrap(j + 1, n)]);
  const double r = dt / dx;
  for (int j = 0; j < n; ++j) u[j] -= r * (flux[j] - flux[wrap(j - 1, n)]);
}

enum class Flux { Linear, Burgers };

// du/dt = -d/dx f(u) + nu_eff u_xx with the three-point second-order upwind difference of f,
// biased by the local advection velocity (beta, or u_j for Burgers).
void upwind2_rhs(const std::vector<double>& u, Flux flux, double beta, double nu_eff, double dx,
                 std::vector<double>& rhs) {
  const int n = static_cast<int>(u.size());
  std::vector<double> f(n);
  if (flux == Flux::Linear) {
    for (int j = 0; j < n; ++j) f[j] = beta * u[j];
  } else {
    for (int j = 0; j < n; ++j) f[j] = 0.5 * u[j] * u[j];
  }
  const double inv2dx = 1.0 / (2.0 * dx);
  const double inv_dx2 = 1.0 / (dx * dx);
  for (int j = 0; j < n; ++j) {
    const double velocity = flux == Flux::Linear ? beta : u[j];
    double adv;
    if (velocity >= 0.0) {
      adv = (3.0 * f[j] - 4.0 * f[wrap(j - 1, n)] + f[wrap(j - 2, n)]) * inv2dx;
    } else {
      adv = (-3.0 * f[j] + 4.0 * f[wrap(j + 1, n)] - f[wrap(j + 2, n)]) * inv2dx;
    }
    const double lap = (u[wrap(j + 1, n)] - 2.0 * u[j] + u[wrap(j - 1, n)]) * inv_dx2;
    rhs[j] = -adv + nu_eff * lap;
  }
}

// Two-stage Heun (SSP-RK2). Forward Euler with the second-order upwind stencil is unstable;
// Heun is stable for courant + diffusion_number <= 1/2.
void upwind2_heun_inplace(std::vector<double>& u, Flux flux, double beta, double nu_eff, double dt, double dx,
                          const char* scheme) {
  const int n = static_cast<int>(u.size());
  const double speed = flux == Flux::Linear ? std::abs(beta) : max_abs(u);
  const double courant = speed * dt / dx;
  const double mu = nu_eff * dt / (dx * dx);
  require_stable(mu >= 0.0 && courant + mu <= 0.5 + kSlack, scheme, courant, mu);
  std::vector<double> rhs(n), stage(n);
  upwind2_rhs(u, flux, beta, nu_eff, dx, rhs);
  for (int j = 0; j < n; ++j) stage[j] = u[j] + dt * rhs[j];
  upwind2_rhs(stage, flux, beta, nu_eff, dx, rhs);
  for (int j = 0; j < n; ++j) u[j] = 0.5 * u[j] + 0.5 * (stage[j] + dt * rhs[j]);
}

void check_dt(double dt_int) {
  if (!(dt_int > 0.0) || !std::isfinite(dt_int)) throw ConfigError("step: dt_int must be positive");
}

// One internal step of kind, in place.
void step_kind_inplace(EquationKind kind, const ParamVector& params, std::vector<double>& u, double dt,
                       double dx) {
  switch (kind) {
    case EquationKind::Convection: upwind1_inplace(u, *params.beta, dt, dx); return;
    case EquationKind::Diffusion: diffusion_inplace(u, *params.nu, dt, dx); return;
    case EquationKind::NonlinearConvection: nonlinear_inplace(u, dt, dx); return;
    case EquationKind::Burgers:
      upwind2_heun_inplace(u, Flux::Burgers, 0.0, *params.nu / std::numbers::pi, dt, dx, "burgers");
      return;
    case EquationKind::ConvectionDiffusion:
      upwind2_heun_inplace(u, Flux::Linear, *params.beta, *params.nu, dt, dx, "convection_diffusion");
      return;
  }
}

// Whether m substeps per sample satisfy the scheme's combined stability condition for the
// current state. substep_count enforces each limit separately; the Heun schemes also need
// their sum below one half.
bool combined_stable(EquationKind kind, const ParamVector& params, const Grid1D& grid, double u_max,
                     double sample_dt, int m) {
  if (kind != EquationKind::Burgers && kind != EquationKind::ConvectionDiffusion) return true;
  const double dt = sample_dt / m;
  const double courant = advective_speed(kind, params, u_max) * dt / grid.dx();
  const double mu = effective_diffusivity(kind, params) * dt / (grid.dx() * grid.dx());
  return courant + mu <= 0.5;
}

Field1D spectral_propagate(const Field1D& u0, double beta, double nu_eff, double t) {
  const int n = u0.size();
  auto spec = rfft(u0.values());
  const double k0 = 2.0 * std::numbers::pi / u0.grid().length;
  for (int k = 0; k <= n / 2; ++k) {
    const double wk = k0 * k;
    spec[k] *= std::exp(Complex(-nu_eff * wk * wk * t, -wk * beta * t));
  }
  return Field1D(u0.grid(), irfft(spec, n));
}

}  // namespace

int substep_count(EquationKind kind, const ParamVector& params, const Grid1D& grid, double u_max,
                  double cfl_safety, double sample_dt) {
  require_params(kind, params);
  if (!(u_max >= 0.0)) throw ConfigError("substep_count: u_max must be non-negative");
  if (!(cfl_safety > 0.0 && cfl_safety < 1.0)) throw ConfigError("substep_count: cfl_safety must be in (0, 1)");
  if (!(sample_dt > 0.0)) throw ConfigError("substep_count: sample_dt must be positive");
  const double dx = grid.dx();
  const double speed = advective_speed(kind, params, u_max);
  const double nu_eff = effective_diffusivity(kind, params);
  // Tiny relative shave so exact-integer ratios are not bumped up by rounding.
  const double shave = 1.0 - 1e-12;
  const double m_adv = std::ceil(speed * sample_dt / (cfl_safety * dx) * shave);
  const double m_diff = std::ceil(2.0 * nu_eff * sample_dt / (cfl_safety * dx * dx) * shave);
  return static_cast<int>(std::max({1.0, m_adv, m_diff}));
}

Field1D step_convection_upwind1(const Field1D& u, double beta, double dt_int) {
  check_dt(dt_int);
  std::vector<double> v = u.vector();
  upwind1_inplace(v, beta, dt_int, u.grid().dx());
  return Field1D(u.grid(), std::move(v));
}

Field1D step_convection_upwind2(const Field1D& u, double beta, double dt_int) {
  check_dt(dt_int);
  std::vector<double> v = u.vector();
  upwind2_heun_inplace(v, Flux::Linear, beta, 0.0, dt_int, u.grid().dx(), "convection/upwind2");
  return Field1D(u.grid(), std::move(v));
}

Field1D step_diffusion_central(const Field1D& u, double nu_eff, double dt_int) {
  check_dt(dt_int);
  std::vector<double> v = u.vector();
  diffusion_inplace(v, nu_eff, dt_int, u.grid().dx());
  return Field1D(u.grid(), std::move(v));
}

Field1D step_nonlinear_convection(const Field1D& u, double dt_int) {
  check_dt(dt_int);
  std::vector<double> v = u.vector();
  nonlinear_inplace(v, dt_int, u.grid().dx());
  return Field1D(u.grid(), std::move(v));
}

Field1D step_burgers(const Field1D& u, double nu, double dt_int) {
  check_dt(dt_int);
  if (!(nu >= 0.0)) throw ConfigError("step_burgers: nu must be non-negative");
  std::vector<double> v = u.vector();
  upwind2_heun_inplace(v, Flux::Burgers, 0.0, nu / std::numbers::pi, dt_int, u.grid().dx(), "burgers");
  return Field1D(u.grid(), std::move(v));
}

Field1D step_convection_diffusion(const Field1D& u, double beta, double nu, double dt_int) {
  check_dt(dt_int);
  if (!(nu >= 0.0)) throw ConfigError("step_convection_diffusion: nu must be non-negative");
  std::vector<double> v = u.vector();
  upwind2_heun_inplace(v, Flux::Linear, beta, nu, dt_int, u.grid().dx(), "convection_diffusion");
  return Field1D(u.grid(), std::move(v));
}

Trajectory solve_trajectory(EquationKind kind, const Field1D& u0, const ParamVector& params,
                            const SolverConfig& config) {
  require_params(kind, params);
  if (config.n_steps < 0) throw ConfigError("solve_trajectory: n_steps must be non-negative");
  const Grid1D grid = u0.grid();
  const double dx = grid.dx();

  Trajectory traj;
  traj.dt = config.sample_dt;
  traj.params = params;
  traj.snapshots.reserve(config.n_steps + 1);
  traj.snapshots.push_back(u0);

  std::vector<double> u = u0.vector();
  for (int s = 1; s <= config.n_steps; ++s) {
    const double u_max = max_abs(u);
    int m = substep_count(kind, params, grid, u_max, config.cfl_safety, config.sample_dt);
    while (!combined_stable(kind, params, grid, u_max, config.sample_dt, m)) ++m;
    // Nonlinear states can steepen within a sample interval; restart it with finer substeps.
    for (int attempt = 0;; ++attempt) {
      std::vector<double> trial = u;
      try {
        const double dt = config.sample_dt / m;
        for (int i = 0; i < m; ++i) step_kind_inplace(kind, params, trial, dt, dx);
        u.swap(trial);
        break;
      } catch (const StabilityError&) {
        if (attempt >= 8) throw;
        m *= 2;
      }
    }
    try {
      traj.snapshots.emplace_back(grid, u);
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(to_string(kind)) + ": non-finite state at output step " +
                            std::to_string(s) + " (" + e.what() + ")");
    }
  }
  return traj;
}

Field1D exact_convection(const Field1D& u0, double beta, double t) { return spectral_propagate(u0, beta, 0.0, t); }

Field1D exact_diffusion(const Field1D& u0, double nu_eff, double t) {
  return spectral_propagate(u0, 0.0, nu_eff, t);
}

Field1D exact_convection_diffusion(const Field1D& u0, double beta, double nu, double t) {
  return spectral_propagate(u0, beta, nu, t);
}

}  // namespace cno
