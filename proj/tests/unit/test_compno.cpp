#include <catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "cno/binary_io.hpp"
#include "cno/compno.hpp"
#include "cno/error.hpp"
#include "cno/rng.hpp"
#include "support.hpp"

using namespace cno;
using test::central_diff;
using test::grad_rel_err;
using test::kTwoPi;

namespace {

PFNOConfig tiny(int n_params) { return PFNOConfig{4, 2, 5, n_params}; }

std::vector<AssemblyBlock> conv_diff_blocks(std::uint64_t seed) {
  return {{"conv", EquationKind::Convection, ParamRoute::Beta, PFNOModel::random(tiny(1), seed), 0},
          {"diff", EquationKind::Diffusion, ParamRoute::Nu, PFNOModel::random(tiny(1), seed + 1), 0}};
}

Dataset small_conv_diff(int per_point, std::uint64_t seed) {
  ICSpec ic;
  ic.n_max = 3;
  ic.seed = seed;
  return generate_dataset(EquationKind::ConvectionDiffusion, {{0.5, 0.05}, {1.0, 0.1}}, per_point, make_grid(16), 3,
                          ic);
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "cno_test_compno" / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("routing rules") {
  const ParamVector g{0.7, 0.3};
  CHECK(route_params(ParamRoute::Beta, g) == ParamVector{0.7, std::nullopt});
  CHECK(route_params(ParamRoute::Nu, g) == ParamVector{std::nullopt, 0.3});
  CHECK(route_params(ParamRoute::NuOverPi, g).nu == 0.3 / std::numbers::pi);
  CHECK(route_params(ParamRoute::None, g).dimension() == 0);
  CHECK_THROWS_AS(route_params(ParamRoute::Beta, {std::nullopt, 0.3}), ConfigError);
  CHECK(route_from_string("nu_over_pi") == ParamRoute::NuOverPi);
  CHECK_THROWS_AS(route_from_string("gamma"), ConfigError);

  const auto cd = default_routing(EquationKind::ConvectionDiffusion);
  CHECK(cd[0] == std::pair{EquationKind::Convection, ParamRoute::Beta});
  CHECK(cd[1] == std::pair{EquationKind::Diffusion, ParamRoute::Nu});
  const auto bu = default_routing(EquationKind::Burgers);
  CHECK(bu[0] == std::pair{EquationKind::NonlinearConvection, ParamRoute::None});
  CHECK(bu[1] == std::pair{EquationKind::Diffusion, ParamRoute::NuOverPi});
  CHECK_THROWS_AS(default_routing(EquationKind::Diffusion), ConfigError);
}

TEST_CASE("assembly validation") {
  // Two default-width blocks feed a 256-wide aggregator.
  std::vector<AssemblyBlock> wide{
      {"c", EquationKind::Convection, ParamRoute::Beta, PFNOModel::zeros(PFNOConfig{128, 1, 4, 1}), 0},
      {"d", EquationKind::Diffusion, ParamRoute::Nu, PFNOModel::zeros(PFNOConfig{128, 1, 4, 1}), 0}};
  const CompNOModel m = assemble(EquationKind::ConvectionDiffusion, wide, AggregatorConfig::linear(256), 1);
  CHECK(m.aggregator.layers.front().d_in() == 256);

  CHECK_THROWS_AS(assemble(EquationKind::ConvectionDiffusion, conv_diff_blocks(1), AggregatorConfig::linear(10), 1),
                  ConfigError);
  auto gap = conv_diff_blocks(1);
  gap[1] = gap[0];
  CHECK_THROWS_AS(assemble(EquationKind::ConvectionDiffusion, gap, AggregatorConfig::linear(8), 1), ConfigError);
  auto mixed = conv_diff_blocks(1);
  mixed[1].model = PFNOModel::random(PFNOConfig{6, 2, 5, 1}, 3);
  CHECK_THROWS_AS(assemble(EquationKind::ConvectionDiffusion, mixed, AggregatorConfig::linear(8), 1), ConfigError);
  CHECK_THROWS_AS((AggregatorConfig{AggregatorKind::MLP, {8, 1}}.validate()), ConfigError);
}

TEST_CASE("zero aggregator yields its bias") {
  CompNOModel m = assemble(EquationKind::ConvectionDiffusion, conv_diff_blocks(2), AggregatorConfig::linear(8), 1);
  m.aggregator = Aggregator::zeros(m.aggregator.config);
  m.aggregator.layers[0].b(0) = -0.25;
  const Grid1D g = make_grid(16);
  const Field1D out = compno_forward(m, test::sine(g), {1.0, 0.1});
  for (double v : out.values()) CHECK(v == -0.25);
}

TEST_CASE("forward concatenates routed block embeddings") {
  const CompNOModel m = assemble(EquationKind::ConvectionDiffusion, conv_diff_blocks(3), AggregatorConfig::linear(8), 4);
  const Grid1D g = make_grid(16);
  Rng rng(1);
  const Field1D u = test::random_field(g, rng);
  const ParamVector gamma{0.6, 0.2};
  const ChannelField e0 = pfno_embed(m.blocks[0].model, u, {0.6, std::nullopt});
  const ChannelField e1 = pfno_embed(m.blocks[1].model, u, {std::nullopt, 0.2});
  Matrix x(8, 16);
  x << e0.values, e1.values;
  const Matrix ref = affine_forward(x, m.aggregator.layers[0]);
  const Field1D out = compno_forward(m, u, gamma);
  for (int j = 0; j < 16; ++j) CHECK(out[j] == Catch::Approx(ref(0, j)).epsilon(1e-13));

  const Trajectory r = rollout(m, u, gamma, 2);
  CHECK(r.snapshots[1] == out);
  CHECK(r.snapshots[2] == compno_forward(m, out, gamma));
  CHECK(compno_map(m)(u, gamma) == out);
}

TEST_CASE("aggregator is pointwise") {
  Aggregator a = Aggregator::random(AggregatorConfig::mlp(6, 5), 7);
  Rng rng(2);
  Matrix x(6, 10);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
  std::vector<int> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(std::span<int>(perm));
  Matrix xp(6, 10);
  for (int j = 0; j < 10; ++j) xp.col(j) = x.col(perm[j]);
  const Matrix y = a.forward(x), yp = a.forward(xp);
  for (int j = 0; j < 10; ++j) CHECK(yp(0, j) == y(0, perm[j]));
}

TEST_CASE("aggregator gradient matches finite differences") {
  Aggregator a = Aggregator::random(AggregatorConfig::mlp(6, 5), 8);
  Rng rng(3);
  Matrix x(6, 12), t(1, 12);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-2, 2);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-1, 1);
  Aggregator::Tape tape;
  const LossResult loss = mse_loss(a.forward(x, &tape), t);
  Aggregator grad = Aggregator::zeros(a.config);
  const Matrix gx = a.backward(tape, loss.grad, grad);
  const auto f = [&] { return mse_loss(a.forward(x), t).value; };
  int checked = 0;
  for (const auto& v : a.param_views(grad)) {
    for (int n = 0; n < 5; ++n) {
      const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(v.value.size()) - 1));
      CHECK(grad_rel_err(v.grad[i], central_diff(f, &v.value[i]), 1e-7) <= 1e-6);
      ++checked;
    }
  }
  for (int n = 0; n < 5; ++n) {
    const auto r = static_cast<Eigen::Index>(rng.uniform_int(0, 5));
    const auto c = static_cast<Eigen::Index>(rng.uniform_int(0, 11));
    CHECK(grad_rel_err(gx(r, c), central_diff(f, &x(r, c)), 1e-7) <= 1e-6);
  }
  CHECK(checked >= 20);
}

TEST_CASE("fine-tuning trains only the aggregator") {
  const CompNOModel m = assemble(EquationKind::ConvectionDiffusion, conv_diff_blocks(5), AggregatorConfig::linear(8), 6);
  const Dataset ds = small_conv_diff(6, 10);
  const auto [train, test] = split(ds, 0.8, 1);

  FinetuneHyper h;
  h.epochs = 0;
  const FinetuneResult none = finetune_aggregator(m, train, test, h);
  CHECK(none.history.train.empty());
  CHECK(none.history.test.empty());
  CHECK(encode_assembly(none.model) == encode_assembly(m));

  h.epochs = 30;
  h.schedule = {1e-2, 100, 0.5};
  h.seed = 3;
  const FinetuneResult a = finetune_aggregator(m, train, test, h);
  const FinetuneResult b = finetune_aggregator(m, train, test, h);
  CHECK(a.history.train == b.history.train);
  CHECK(a.history.test == b.history.test);
  REQUIRE(a.history.train.size() == 30);
  CHECK(a.history.train.back() < a.history.train.front());
  CHECK(one_step_mae(a.model, test) == Catch::Approx(a.history.test.back()).epsilon(1e-12));
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    CHECK(encode_block(a.model.blocks[i].model, a.model.blocks[i].kind) ==
          encode_block(m.blocks[i].model, m.blocks[i].kind));
  }
  CHECK(a.model.aggregator.layers[0].W != m.aggregator.layers[0].W);

  CHECK_THROWS_AS(finetune_aggregator(m, Dataset{}, test, h), DataError);
  const Dataset wrong = generate_dataset(EquationKind::Diffusion, {{std::nullopt, 0.1}}, 2, make_grid(16), 3, {});
  CHECK_THROWS_AS(finetune_aggregator(m, wrong, Dataset{}, h), DataError);
}

TEST_CASE("boundary-corrected one-step error") {
  const CompNOModel m = assemble(EquationKind::ConvectionDiffusion, conv_diff_blocks(7), AggregatorConfig::linear(8), 2);
  const Dataset ds = small_conv_diff(2, 20);

  // Reference: every pair through compno_forward with the target's boundary values.
  double sum = 0.0;
  int count = 0;
  for (const auto& t : ds.trajectories) {
    for (int s = 0; s < t.n_steps(); ++s) {
      const auto [l, r] = boundary_pair(t.snapshots[s + 1]);
      const Field1D p = compno_forward(m, t.snapshots[s], t.params, DirichletPair{l, r});
      CHECK(p[0] == l);
      CHECK(p[15] == r);
      for (int j = 0; j < 16; ++j) sum += std::abs(p[j] - t.snapshots[s + 1][j]);
      count += 16;
    }
  }
  CHECK(one_step_mae(m, ds, true) == Catch::Approx(sum / count).epsilon(1e-10));

  FinetuneHyper h;
  h.epochs = 5;
  h.schedule = {1e-2, 100, 0.5};
  h.bc_in_loop = true;
  const FinetuneResult r = finetune_aggregator(m, ds, ds, h);
  REQUIRE(r.history.test.size() == 5);
  CHECK(r.history.test.back() == Catch::Approx(one_step_mae(r.model, ds, true)).epsilon(1e-10));
}

TEST_CASE("linear residual") {
  const Grid1D g = make_grid(64);
  const Field1D s = test::sine(g);
  CHECK(test::max_abs_diff(residual_linear(s, s, 0.0, 0.0, 1.0, 0.1), Field1D::zeros(g)) == 0.0);

  const Field1D c = Field1D::constant(g, 3.0);
  const Field1D grad_u = Field1D::sample(g, [](double x) { return kTwoPi * std::cos(kTwoPi * x); });
  CHECK(test::max_abs_diff(residual_linear(s, c, 0.5, 2.0, 1.0, 0.1), grad_u * (-0.5 * 0.1)) < 1e-10);

  const Field1D expect = Field1D::sample(g, [](double x) {
    return -4.0 * std::numbers::pi * std::numbers::pi * std::sin(kTwoPi * x) - 0.1 * kTwoPi * std::cos(kTwoPi * x);
  });
  CHECK(test::max_abs_diff(residual_linear(s, s, 1.0, 1.0, 1.0, 0.1), expect) <= 1e-8);
  CHECK_THROWS_AS(residual_linear(s, test::sine(make_grid(32)), 1, 1, 1, 1), ConfigError);
}

TEST_CASE("nonlinear residual") {
  const Grid1D g = make_grid(64);
  const double pi = std::numbers::pi;
  // u = sin(2 pi x), v = 0.3 + cos(4 pi x), with hand-derived derivatives.
  const auto u = [&](double x) { return std::sin(2 * pi * x); };
  const auto ux = [&](double x) { return 2 * pi * std::cos(2 * pi * x); };
  const auto uxx = [&](double x) { return -4 * pi * pi * std::sin(2 * pi * x); };
  const auto v = [&](double x) { return 0.3 + std::cos(4 * pi * x); };
  const auto vx = [&](double x) { return -4 * pi * std::sin(4 * pi * x); };
  const Field1D U = Field1D::sample(g, u), V = Field1D::sample(g, v);

  CHECK(test::max_abs_diff(residual_nonlinear(U, V, 0.0, 0.0, 0.2), Field1D::zeros(g)) == 0.0);
  const Field1D only_v = Field1D::sample(g, [&](double x) { return 0.49 * v(x) * vx(x); });
  CHECK(test::max_abs_diff(residual_nonlinear(Field1D::zeros(g), V, 0.3, 0.7, 0.2), only_v) <= 1e-8);

  const double a1 = 0.8, a2 = -0.4, nu = 0.05;
  const Field1D full = Field1D::sample(g, [&](double x) {
    return a1 * a1 * u(x) * ux(x) + a2 * a2 * v(x) * vx(x) + a1 * a2 * (v(x) * ux(x) + u(x) * vx(x)) -
           a1 * nu * uxx(x);
  });
  CHECK(test::max_abs_diff(residual_nonlinear(U, V, a1, a2, nu), full) <= 1e-8);

  // Swapping (u, a1) with (v, a2) only changes the diffusion operand.
  Rng rng(4);
  const Field1D A = test::sine(g, 2, 0.1, 0.6) + test::sine(g, 5, 0.4, 0.2);
  const Field1D B = test::sine(g, 3, 0.7, 0.5) + Field1D::constant(g, 0.1);
  const Field1D diff = residual_nonlinear(A, B, a1, a2, nu) - residual_nonlinear(B, A, a2, a1, nu);
  const Field1D expect = spectral_derivative(B, 2) * (a2 * nu) - spectral_derivative(A, 2) * (a1 * nu);
  CHECK(test::max_abs_diff(diff, expect) <= 1e-8);
}

TEST_CASE("least-squares mixing weights") {
  const Grid1D g = make_grid(32);
  const Field1D u = test::sine(g, 1), v = test::sine(g, 3, 0.2);
  const auto [a1, a2] = fit_alphas(u * 0.7 + v * -1.3, u, v);
  CHECK(a1 == Catch::Approx(0.7).epsilon(1e-12));
  CHECK(a2 == Catch::Approx(-1.3).epsilon(1e-12));
}

TEST_CASE("assembly checkpoints reference library blocks") {
  const auto root = fresh_dir("lib");
  FoundationLibrary lib(root);
  auto blocks = conv_diff_blocks(9);
  lib.save_block("conv", blocks[0].model, EquationKind::Convection, {});
  lib.save_block("diff", blocks[1].model, EquationKind::Diffusion, {});
  const CompNOModel m =
      assemble(EquationKind::ConvectionDiffusion, lib, {"conv", "diff"}, AggregatorKind::Linear, 0, 5);
  CHECK(m.blocks[0].crc == lib.entry("conv").crc);
  CHECK_THROWS_AS(assemble(EquationKind::ConvectionDiffusion, lib, {"diff", "conv"}, AggregatorKind::Linear, 0, 5),
                  MetadataMismatchError);
  CHECK_THROWS_AS(assemble(EquationKind::ConvectionDiffusion, lib, {"conv"}, AggregatorKind::Linear, 0, 5),
                  ConfigError);

  const auto bytes = encode_assembly(m);
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "CNOASSMB");
  const CompNOModel back = decode_assembly(bytes, lib);
  CHECK(encode_assembly(back) == bytes);
  const Grid1D g = make_grid(16);
  CHECK(compno_forward(back, test::sine(g), {1.0, 0.1}) == compno_forward(m, test::sine(g), {1.0, 0.1}));

  auto flip = bytes;
  flip[bytes.size() - 10] ^= 0x4;
  CHECK_THROWS_AS(decode_assembly(flip, lib), ChecksumError);

  // Replacing a block in the library invalidates assemblies built on the old one.
  lib.save_block("diff", PFNOModel::random(tiny(1), 99), EquationKind::Diffusion, {}, true);
  CHECK_THROWS_AS(decode_assembly(bytes, lib), ChecksumError);

  const auto mlp = assemble(EquationKind::ConvectionDiffusion, lib, {"conv", "diff"}, AggregatorKind::MLP, 7, 5);
  CHECK(mlp.aggregator.config.widths == std::vector<int>{8, 7, 1});
}
