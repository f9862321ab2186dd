#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "cno/grid.hpp"

namespace cno {

/// The five equations of the toolkit. Values are the on-disk tags.
enum class EquationKind : std::uint8_t {
  Convection = 0,           // u_t + beta u_x = 0
  Diffusion = 1,            // u_t - nu u_xx = 0
  NonlinearConvection = 2,  // u_t + u u_x = 0
  Burgers = 3,              // u_t + u u_x - (nu / pi) u_xx = 0
  ConvectionDiffusion = 4,  // u_t + beta u_x - nu u_xx = 0
};

std::string_view to_string(EquationKind kind);
/// Accepts snake_case names ("convection_diffusion"); throws ConfigError otherwise.
EquationKind equation_from_string(std::string_view name);
/// Throws DataError for unknown tags.
EquationKind equation_from_tag(std::uint8_t tag);

bool needs_beta(EquationKind kind);
bool needs_nu(EquationKind kind);
/// Throws ConfigError when params lacks a field the equation needs.
void require_params(EquationKind kind, const ParamVector& params);
/// Coefficient multiplying u_xx: nu for diffusion and convection-diffusion, nu / pi for Burgers.
double effective_diffusivity(EquationKind kind, const ParamVector& params);

struct SolverConfig {
  double sample_dt = 0.01;
  double cfl_safety = 0.4;
  int n_steps = 10;
};

/// Smallest m such that dt_int = sample_dt / m satisfies |c| dt_int / dx <= cfl_safety and
/// nu_eff dt_int / dx^2 <= cfl_safety / 2, where c is beta (linear) or u_max (nonlinear).
int substep_count(EquationKind kind, const ParamVector& params, const Grid1D& grid, double u_max,
                  double cfl_safety, double sample_dt = 0.01);

// Single explicit steps on the periodic grid. Each refuses (StabilityError) a dt_int
// outside its scheme's stability region.

/// First-order upwind, forward Euler.
Field1D step_convection_upwind1(const Field1D& u, double beta, double dt_int);
/// Second-order upwind (three-point biased), two-stage Heun step.
Field1D step_convection_upwind2(const Field1D& u, double beta, double dt_int);
/// Central second difference, forward Euler.
Field1D step_diffusion_central(const Field1D& u, double nu_eff, double dt_int);
/// Conservative Godunov flux for f = u^2 / 2 (upwind by interface velocity), forward Euler.
Field1D step_nonlinear_convection(const Field1D& u, double dt_int);
/// Second-order upwind flux of u^2 / 2 plus central diffusion with coefficient nu / pi, Heun.
Field1D step_burgers(const Field1D& u, double nu, double dt_int);
/// Second-order upwind advection with velocity beta plus central diffusion with nu, Heun.
Field1D step_convection_diffusion(const Field1D& u, double beta, double nu, double dt_int);

/// Integrates kind from u0 for config.n_steps samples of stride config.sample_dt.
Trajectory solve_trajectory(EquationKind kind, const Field1D& u0, const ParamVector& params,
                            const SolverConfig& config);

// Spectral closed-form solutions of the linear equations on the periodic domain.
Field1D exact_convection(const Field1D& u0, double beta, double t);
Field1D exact_diffusion(const Field1D& u0, double nu_eff, double t);
Field1D exact_convection_diffusion(const Field1D& u0, double beta, double nu, double t);

}  // namespace cno
