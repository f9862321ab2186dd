#include <catch_amalgamated.hpp>
#include <cmath>
#include <numbers>

#include "cno/error.hpp"
#include "cno/fd_solvers.hpp"
#include "support.hpp"

using namespace cno;
using test::kTwoPi;

namespace {

// Integrate to time t with the solver's own substep choice by asking for one sample of length t.
Field1D integrate(EquationKind kind, const Field1D& u0, const ParamVector& p, double t) {
  SolverConfig c;
  c.sample_dt = t;
  c.n_steps = 1;
  return solve_trajectory(kind, u0, p, c).snapshots.back();
}

// Every 8th node of a grid 8x finer coincides with a node of the coarse grid.
Field1D restrict_by(const Field1D& fine, const Grid1D& coarse, int factor) {
  std::vector<double> v(coarse.nx);
  for (int j = 0; j < coarse.nx; ++j) v[j] = fine[j * factor];
  return Field1D(coarse, std::move(v));
}

double mean(const Field1D& u) {
  double s = 0.0;
  for (double v : u.values()) s += v;
  return s / u.size();
}

}  // namespace

TEST_CASE("substep_count follows the stated formula") {
  CHECK(substep_count(EquationKind::Diffusion, {std::nullopt, 2.0}, make_grid(256), 0.0, 0.4) == 6554);
  CHECK(substep_count(EquationKind::Convection, {1.0, std::nullopt}, make_grid(128), 0.0, 0.5) == 3);
  CHECK_NOTHROW(substep_count(EquationKind::Convection, {1.0, std::nullopt}, make_grid(128), 0.0, 0.4));
  CHECK_THROWS_AS(substep_count(EquationKind::Diffusion, {1.0, std::nullopt}, make_grid(128), 0.0, 0.4),
                  ConfigError);
  // Burgers: u_max drives advection, nu / pi drives diffusion.
  const Grid1D g = make_grid(128);
  const double dx = g.dx();
  const int expect = static_cast<int>(std::max(std::ceil(2.0 * 0.01 / (0.4 * dx)),
                                               std::ceil(2.0 * (0.5 / std::numbers::pi) * 0.01 / (0.4 * dx * dx))));
  CHECK(substep_count(EquationKind::Burgers, {std::nullopt, 0.5}, g, 2.0, 0.4) == expect);
}

TEST_CASE("trivial steps leave constants and zero-coefficient fields alone") {
  const Grid1D g = make_grid(64);
  const Field1D c = Field1D::constant(g, 0.7);
  const Field1D s = test::sine(g, 3);
  const double dt = 1e-4;
  CHECK(test::max_abs_diff(step_convection_upwind1(c, 1.3, dt), c) < 1e-15);
  CHECK(step_convection_upwind1(s, 0.0, dt) == s);
  CHECK(test::max_abs_diff(step_diffusion_central(c, 0.5, dt), c) < 1e-15);
  CHECK(step_diffusion_central(s, 0.0, dt) == s);
  CHECK(test::max_abs_diff(step_nonlinear_convection(c, dt), c) < 1e-15);
  CHECK(step_nonlinear_convection(Field1D::zeros(g), dt) == Field1D::zeros(g));
  CHECK(test::max_abs_diff(step_burgers(c, 0.3, dt), c) < 1e-15);
  CHECK(test::max_abs_diff(step_convection_diffusion(c, 1.0, 0.3, dt), c) < 1e-15);
}

TEST_CASE("unstable steps are refused") {
  const Grid1D g = make_grid(64);
  const Field1D s = test::sine(g);
  CHECK_THROWS_AS(step_convection_upwind1(s, 1.0, 2.0 * g.dx()), StabilityError);
  CHECK_THROWS_AS(step_diffusion_central(s, 1.0, g.dx() * g.dx()), StabilityError);
  CHECK_THROWS_AS(step_nonlinear_convection(s * 3.0, g.dx()), StabilityError);
  CHECK_THROWS_AS(step_burgers(s, 0.1, g.dx()), StabilityError);
  CHECK_THROWS_AS(step_convection_diffusion(s, 1.0, 0.0, g.dx()), StabilityError);
  CHECK_THROWS_AS(step_convection_upwind1(s, 1.0, 0.0), ConfigError);
}

TEST_CASE("upwind1 matches the analytic translation") {
  const Grid1D g = make_grid(256);
  const Field1D u = integrate(EquationKind::Convection, test::sine(g), {1.0, std::nullopt}, 0.1);
  CHECK(test::rel_err(u, test::sine(g, 1, 0.1)) <= 0.05);
  // Negative velocity uses the mirrored stencil.
  const Field1D v = integrate(EquationKind::Convection, test::sine(g), {-1.0, std::nullopt}, 0.1);
  CHECK(test::rel_err(v, test::sine(g, 1, -0.1)) <= 0.05);
}

TEST_CASE("central diffusion matches the analytic decay") {
  const Grid1D g = make_grid(256);
  const Field1D u = integrate(EquationKind::Diffusion, test::sine(g), {std::nullopt, 0.1}, 0.05);
  const double amp = std::exp(-0.1 * kTwoPi * kTwoPi * 0.05);
  CHECK(amp == Catch::Approx(0.8208).margin(1e-4));
  CHECK(test::rel_err(u, test::sine(g) * amp) <= 0.01);
}

TEST_CASE("convection-diffusion matches the analytic shift and decay") {
  const Grid1D g = make_grid(256);
  const Field1D u = integrate(EquationKind::ConvectionDiffusion, test::sine(g), {1.0, 0.1}, 0.05);
  const Field1D ref = test::sine(g, 1, 0.05) * std::exp(-0.1 * kTwoPi * kTwoPi * 0.05);
  CHECK(test::rel_err(u, ref) <= 0.02);
}

TEST_CASE("nonlinear convection converges to a fine-grid run") {
  const Grid1D g = make_grid(128);
  const Grid1D fine = make_grid(128 * 8);
  auto ic = [](const Grid1D& gr) {
    return Field1D::sample(gr, [](double x) { return 0.5 + 0.3 * std::sin(kTwoPi * x); });
  };
  const Field1D coarse = integrate(EquationKind::NonlinearConvection, ic(g), {}, 0.1);
  const Field1D ref = restrict_by(integrate(EquationKind::NonlinearConvection, ic(fine), {}, 0.1), g, 8);
  CHECK(test::rel_err(coarse, ref) <= 0.05);
}

TEST_CASE("Burgers converges to a fine-grid run") {
  const Grid1D g = make_grid(128);
  const Grid1D fine = make_grid(128 * 8);
  const ParamVector p{std::nullopt, 0.1};
  const Field1D coarse = integrate(EquationKind::Burgers, test::sine(g), p, 0.1);
  const Field1D ref = restrict_by(integrate(EquationKind::Burgers, test::sine(fine), p, 0.1), g, 8);
  CHECK(test::rel_err(coarse, ref) <= 0.05);
}

TEST_CASE("conservative schemes preserve the grid mean") {
  Rng rng(11);
  const Grid1D g = make_grid(128);
  const Field1D u0 = test::random_field(g, rng);
  const double m0 = mean(u0);
  Field1D a = u0, b = u0, c = u0;
  for (int i = 0; i < 50; ++i) {
    a = step_convection_upwind1(a, 0.7, 1e-3);
    b = step_nonlinear_convection(b, 1e-3);
    c = step_convection_upwind2(c, -0.7, 1e-3);
  }
  CHECK(std::abs(mean(a) - m0) <= 1e-12);
  CHECK(std::abs(mean(b) - m0) <= 1e-12);
  CHECK(std::abs(mean(c) - m0) <= 1e-12);
}

TEST_CASE("diffusive schemes never increase the L2 norm") {
  Rng rng(12);
  const Grid1D g = make_grid(128);
  Field1D d = test::random_field(g, rng);
  Field1D b = d;
  const double dt_d = 0.4 * g.dx() * g.dx() / 0.5;
  // Large viscosity: the step is diffusion-dominated.
  const double nu = 50.0;
  const double dt_b = 0.4 * g.dx() * g.dx() / (nu / std::numbers::pi);
  for (int i = 0; i < 40; ++i) {
    const double nd = test::l2(d), nb = test::l2(b);
    d = step_diffusion_central(d, 0.5, dt_d);
    b = step_burgers(b, nu, dt_b * 0.5);
    CHECK(test::l2(d) <= nd + 1e-14);
    CHECK(test::l2(b) <= nb + 1e-14);
  }
}

TEST_CASE("refinement reduces error against the analytic solutions") {
  const auto error_at = [](EquationKind kind, const ParamVector& p, int nx, double t) {
    const Grid1D g = make_grid(nx);
    const Field1D u0 = test::sine(g);
    const Field1D u = integrate(kind, u0, p, t);
    const double beta = p.beta.value_or(0.0), nu = p.nu.value_or(0.0);
    return test::rel_err(u, test::sine(g, 1, beta * t) * std::exp(-nu * kTwoPi * kTwoPi * t));
  };
  for (const auto& [kind, p, t] : {std::tuple{EquationKind::Convection, ParamVector{1.0, std::nullopt}, 0.1},
                                    std::tuple{EquationKind::Diffusion, ParamVector{std::nullopt, 0.1}, 0.05},
                                    std::tuple{EquationKind::ConvectionDiffusion, ParamVector{1.0, 0.1}, 0.05}}) {
    double prev = error_at(kind, p, 32, t);
    for (int nx : {64, 128, 256}) {
      const double e = error_at(kind, p, nx, t);
      INFO(to_string(kind) << " nx=" << nx << " error " << e << " previous " << prev);
      CHECK(e < prev);
      prev = e;
    }
  }
}

TEST_CASE("convection-diffusion reduces to its parts") {
  Rng rng(5);
  const Grid1D g = make_grid(64);
  const Field1D u = test::random_field(g, rng);
  const double dt = 1e-4;
  // nu = 0 takes exactly the convection branch.
  CHECK(step_convection_diffusion(u, 0.8, 0.0, dt) == step_convection_upwind2(u, 0.8, dt));
  CHECK(step_convection_diffusion(u, -0.8, 0.0, dt) == step_convection_upwind2(u, -0.8, dt));

  // beta = 0 is a Heun step of central diffusion: two Euler stages averaged.
  const double nu = 0.2;
  const Field1D stage = step_diffusion_central(u, nu, dt);
  const Field1D heun = u * 0.5 + step_diffusion_central(stage, nu, dt) * 0.5;
  CHECK(test::max_abs_diff(step_convection_diffusion(u, 0.0, nu, dt), heun) < 1e-13);
  // On a smooth field it agrees with a single Euler step up to the second-order term.
  const Field1D s = test::sine(g);
  const Field1D euler = step_diffusion_central(s, nu, dt);
  CHECK(test::max_abs_diff(step_convection_diffusion(s, 0.0, nu, dt), euler) < 1e-3 * test::max_abs_diff(euler, s));
}

TEST_CASE("solve_trajectory shape and trivial cases") {
  const Grid1D g = make_grid(128);
  SolverConfig c;
  c.n_steps = 10;
  const Trajectory t = solve_trajectory(EquationKind::Convection, test::sine(g), {1.0, std::nullopt}, c);
  REQUIRE(t.n_steps() == 10);
  CHECK(t.dt == 0.01);
  for (int k = 0; k <= 10; ++k) CHECK(test::rel_err(t.snapshots[k], test::sine(g, 1, 0.01 * k)) <= 0.05 + 1e-12 * k);

  const Field1D c0 = Field1D::constant(g, 0.3);
  const Trajectory d = solve_trajectory(EquationKind::Diffusion, c0, {std::nullopt, 1.0}, c);
  for (const auto& s : d.snapshots) CHECK(test::max_abs_diff(s, c0) < 1e-14);

  c.n_steps = 0;
  const Trajectory z = solve_trajectory(EquationKind::Convection, test::sine(g), {1.0, std::nullopt}, c);
  CHECK(z.snapshots.size() == 1);
  CHECK(z.snapshots[0] == test::sine(g));

  CHECK_THROWS_AS(solve_trajectory(EquationKind::Convection, test::sine(g), {}, c), ConfigError);
}

TEST_CASE("analytic oracles") {
  const Grid1D g = make_grid(64);
  Rng rng(3);
  const Field1D u0 = test::sine(g, 2, 0.1, 0.5) + test::sine(g, 5, 0.3, 0.2);

  CHECK(test::max_abs_diff(exact_convection(u0, 1.0, 0.0), u0) < 1e-14);
  CHECK(test::max_abs_diff(exact_convection(u0, 2.0, 0.5), u0) < 1e-13);
  CHECK(test::max_abs_diff(exact_convection(test::sine(g), 1.0, 0.25), test::sine(g, 1, 0.25)) < 1e-14);

  CHECK(test::max_abs_diff(exact_diffusion(u0, 0.3, 0.0), u0) < 1e-14);
  const Field1D c = Field1D::constant(g, 1.7);
  CHECK(test::max_abs_diff(exact_diffusion(c, 0.3, 2.0), c) < 1e-14);
  CHECK(test::max_abs_diff(exact_diffusion(test::sine(g), 0.1, 0.05), test::sine(g) * 0.82086) < 1e-5);

  CHECK(test::max_abs_diff(exact_convection_diffusion(u0, 0.7, 0.0, 0.2), exact_convection(u0, 0.7, 0.2)) < 1e-14);
  CHECK(test::max_abs_diff(exact_convection_diffusion(u0, 0.0, 0.1, 0.2), exact_diffusion(u0, 0.1, 0.2)) < 1e-14);
  const Field1D ref = test::sine(g, 1, 0.1) * std::exp(-0.3948);
  CHECK(test::max_abs_diff(exact_convection_diffusion(test::sine(g), 1.0, 0.1, 0.1), ref) < 1e-4);

  // Closed form for a two-mode field.
  const double t = 0.03, beta = 0.4, nu = 0.05;
  const Field1D two = Field1D::sample(g, [&](double x) {
    return 0.5 * std::exp(-nu * std::pow(kTwoPi * 2, 2) * t) * std::sin(kTwoPi * 2 * (x - 0.1 - beta * t)) +
           0.2 * std::exp(-nu * std::pow(kTwoPi * 5, 2) * t) * std::sin(kTwoPi * 5 * (x - 0.3 - beta * t));
  });
  CHECK(test::max_abs_diff(exact_convection_diffusion(u0, beta, nu, t), two) < 1e-13);
}

TEST_CASE("equation names, tags and diffusivity") {
  CHECK(equation_from_string("convection_diffusion") == EquationKind::ConvectionDiffusion);
  CHECK_THROWS_AS(equation_from_string("heat"), ConfigError);
  CHECK(equation_from_tag(3) == EquationKind::Burgers);
  CHECK_THROWS_AS(equation_from_tag(9), DataError);
  CHECK(effective_diffusivity(EquationKind::Burgers, {std::nullopt, 0.5}) == 0.5 / std::numbers::pi);
  CHECK(effective_diffusivity(EquationKind::ConvectionDiffusion, {1.0, 0.5}) == 0.5);
  CHECK(effective_diffusivity(EquationKind::Convection, {1.0, std::nullopt}) == 0.0);
}
