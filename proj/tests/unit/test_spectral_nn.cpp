#include <catch_amalgamated.hpp>
#include <cmath>
#include <complex>
#include <numbers>

#include "cno/error.hpp"
#include "cno/rng.hpp"
#include "cno/spectral_nn.hpp"
#include "support.hpp"

using namespace cno;
using test::central_diff;
using test::grad_rel_err;

namespace {

Matrix random_matrix(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}

SpectralWeights random_spectral(int modes, int d_out, int d_in, Rng& rng) {
  SpectralWeights w = SpectralWeights::zeros(modes, d_out, d_in);
  w.re = random_matrix(modes * d_out, d_in, rng);
  w.im = random_matrix(modes * d_out, d_in, rng);
  return w;
}

// Direct evaluation of the per-mode mixing: naive DFT, complex matrix product per mode,
// Hermitian reconstruction with weights 1 (mode 0 and nx/2) and 2 (others).
Matrix brute_force_conv(const Matrix& x, const SpectralWeights& R) {
  const int nx = static_cast<int>(x.cols());
  const double w0 = 2.0 * std::numbers::pi / nx;
  Matrix out = Matrix::Zero(R.d_out, nx);
  for (int k = 0; k < R.modes; ++k) {
    std::vector<std::complex<double>> X(R.d_in);
    for (int i = 0; i < R.d_in; ++i) {
      for (int j = 0; j < nx; ++j) X[i] += x(i, j) * std::polar(1.0, -w0 * k * j);
    }
    const double c = (k == 0 || 2 * k == nx) ? 1.0 : 2.0;
    for (int o = 0; o < R.d_out; ++o) {
      std::complex<double> Y = 0.0;
      for (int i = 0; i < R.d_in; ++i) Y += R.at(k, o, i) * X[i];
      for (int j = 0; j < nx; ++j) out(o, j) += c * (Y * std::polar(1.0, w0 * k * j)).real() / nx;
    }
  }
  return out;
}

double weighted_sum(const Matrix& a, const Matrix& w) { return (a.array() * w.array()).sum(); }

}  // namespace

TEST_CASE("rfft conventions") {
  const Grid1D g = make_grid(8);
  const auto c = rfft(std::vector<double>(8, 1.5));
  CHECK(c[0].real() == Catch::Approx(12.0));
  for (std::size_t k = 1; k < c.size(); ++k) CHECK(std::abs(c[k]) < 1e-14);

  const auto s = rfft(test::sine(g).values());
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (k == 1) {
      CHECK(std::abs(s[k] - std::complex<double>(0.0, -4.0)) < 1e-14);
    } else {
      CHECK(std::abs(s[k]) < 1e-14);
    }
  }
}

TEST_CASE("rfft round trip and Parseval on channel fields") {
  Rng rng(1);
  const Grid1D g = make_grid(64);
  ChannelField x{random_matrix(3, 64, rng), g};
  const ComplexMatrix spec = rfft(x);
  REQUIRE(spec.rows() == 3);
  REQUIRE(spec.cols() == 33);
  const ChannelField back = irfft(spec, g);
  CHECK((back.values - x.values).cwiseAbs().maxCoeff() <= 1e-12 * x.values.cwiseAbs().maxCoeff());

  for (int ch = 0; ch < 3; ++ch) {
    const double energy = x.values.row(ch).squaredNorm();
    double spectral = 0.0;
    for (int k = 0; k <= 32; ++k) spectral += (k == 0 || k == 32 ? 1.0 : 2.0) * std::norm(spec(ch, k));
    CHECK(std::abs(spectral / 64.0 - energy) <= 1e-12 * energy);
  }
}

TEST_CASE("spectral derivative of a sine") {
  const Grid1D g = make_grid(32);
  const Field1D d1 = spectral_derivative(test::sine(g), 1);
  const Field1D d2 = spectral_derivative(test::sine(g), 2);
  const Field1D cosine = Field1D::sample(g, [](double x) { return test::kTwoPi * std::cos(test::kTwoPi * x); });
  CHECK(test::max_abs_diff(d1, cosine) < 1e-12);
  CHECK(test::max_abs_diff(d2, test::sine(g) * (-test::kTwoPi * test::kTwoPi)) < 1e-11);
}

TEST_CASE("spectral convolution special cases") {
  Rng rng(2);
  const Grid1D g = make_grid(16);
  const ChannelField x{random_matrix(2, 16, rng), g};

  const ChannelField same = spectral_conv_forward(x, SpectralWeights::identity(9, 2));
  CHECK((same.values - x.values).cwiseAbs().maxCoeff() < 1e-13);

  const ChannelField mean = spectral_conv_forward(x, SpectralWeights::identity(1, 2));
  for (int ch = 0; ch < 2; ++ch) {
    const double m = x.values.row(ch).mean();
    CHECK((mean.values.row(ch).array() - m).abs().maxCoeff() < 1e-14);
  }

  CHECK_THROWS_AS(spectral_conv_forward(x, SpectralWeights::identity(10, 2)), ConfigError);
  CHECK_THROWS_AS(spectral_conv_forward(x, SpectralWeights::identity(4, 3)), ConfigError);
}

TEST_CASE("spectral convolution matches the direct index sum") {
  Rng rng(3);
  for (const auto& [nx, modes, d_in, d_out] : {std::tuple{16, 9, 3, 2}, std::tuple{32, 5, 4, 4}, std::tuple{12, 7, 1, 3}}) {
    const Grid1D g = make_grid(nx);
    const ChannelField x{random_matrix(d_in, nx, rng), g};
    const SpectralWeights R = random_spectral(modes, d_out, d_in, rng);
    const Matrix ref = brute_force_conv(x.values, R);
    CHECK((spectral_conv_forward(x, R).values - ref).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("spectral convolution batches are independent segments") {
  Rng rng(4);
  const int nx = 16;
  const Matrix a = random_matrix(3, nx, rng), b = random_matrix(3, nx, rng);
  Matrix batch(3, 2 * nx);
  batch << a, b;
  const SpectralWeights R = random_spectral(6, 2, 3, rng);
  const Matrix out = spectral_conv_forward(batch, nx, R);
  CHECK((out.leftCols(nx) - brute_force_conv(a, R)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((out.rightCols(nx) - brute_force_conv(b, R)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mode truncation is idempotent") {
  Rng rng(5);
  const Grid1D g = make_grid(32);
  const ChannelField x{random_matrix(2, 32, rng), g};
  const SpectralWeights P = SpectralWeights::identity(6, 2);
  const ChannelField once = spectral_conv_forward(x, P);
  const ChannelField twice = spectral_conv_forward(once, P);
  CHECK((once.values - twice.values).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("spectral convolution backward") {
  Rng rng(6);
  const Grid1D g = make_grid(16);
  ChannelField x{random_matrix(3, 16, rng), g};
  SpectralWeights R = random_spectral(7, 2, 3, rng);
  const Matrix G = random_matrix(2, 16, rng);

  const auto [zx, zR] = spectral_conv_backward(x, R, ChannelField{Matrix::Zero(2, 16), g});
  CHECK(zx.values.cwiseAbs().maxCoeff() == 0.0);
  CHECK(zR.re.cwiseAbs().maxCoeff() == 0.0);
  CHECK(zR.im.cwiseAbs().maxCoeff() == 0.0);

  const auto [gx, gR] = spectral_conv_backward(x, R, ChannelField{G, g});
  const auto [gx2, gR2] = spectral_conv_backward(x, R, ChannelField{2.0 * G, g});
  CHECK((gx2.values - 2.0 * gx.values).cwiseAbs().maxCoeff() < 1e-13);
  CHECK((gR2.re - 2.0 * gR.re).cwiseAbs().maxCoeff() < 1e-13);

  const auto loss = [&] { return weighted_sum(spectral_conv_forward(x, R).values, G); };
  int checked = 0;
  for (int n = 0; n < 24; ++n) {
    const auto r = static_cast<Eigen::Index>(rng.uniform_int(0, R.re.rows() - 1));
    const auto c = static_cast<Eigen::Index>(rng.uniform_int(0, R.re.cols() - 1));
    CHECK(grad_rel_err(gR.re(r, c), central_diff(loss, &R.re(r, c))) <= 1e-6);
    CHECK(grad_rel_err(gR.im(r, c), central_diff(loss, &R.im(r, c))) <= 1e-6);
    const auto i = static_cast<Eigen::Index>(rng.uniform_int(0, 2));
    const auto j = static_cast<Eigen::Index>(rng.uniform_int(0, 15));
    CHECK(grad_rel_err(gx.values(i, j), central_diff(loss, &x.values(i, j))) <= 1e-6);
    ++checked;
  }
  CHECK(checked >= 20);
}

TEST_CASE("affine map forward and backward") {
  Rng rng(7);
  const Matrix x = random_matrix(3, 10, rng);
  AffineWeights id = AffineWeights::zeros(3, 3);
  id.W.setIdentity();
  CHECK(affine_forward(x, id) == x);

  AffineWeights w = AffineWeights::zeros(2, 3);
  w.W = random_matrix(2, 3, rng);
  w.b = Vector::Random(2);
  const Matrix y0 = affine_forward(Matrix::Zero(3, 5), w);
  for (int j = 0; j < 5; ++j) CHECK(y0.col(j) == w.b);

  Matrix xin = x;
  const Matrix G = random_matrix(2, 10, rng);
  AffineWeights grad = AffineWeights::zeros(2, 3);
  const Matrix gx = affine_backward(xin, w, G, grad);
  const auto loss = [&] { return weighted_sum(affine_forward(xin, w), G); };
  for (int n = 0; n < 20; ++n) {
    const auto i = static_cast<Eigen::Index>(rng.uniform_int(0, 1));
    const auto j = static_cast<Eigen::Index>(rng.uniform_int(0, 2));
    CHECK(grad_rel_err(grad.W(i, j), central_diff(loss, &w.W(i, j))) <= 1e-6);
    CHECK(grad_rel_err(grad.b(i), central_diff(loss, &w.b(i))) <= 1e-6);
    const auto c = static_cast<Eigen::Index>(rng.uniform_int(0, 9));
    CHECK(grad_rel_err(gx(j, c), central_diff(loss, &xin(j, c))) <= 1e-6);
  }
  CHECK_THROWS_AS(affine_forward(random_matrix(4, 2, rng), w), ConfigError);
}

TEST_CASE("gelu values and derivative") {
  CHECK(gelu(0.0) == 0.0);
  CHECK(std::abs(gelu(10.0) - 10.0) <= 1e-6);
  const auto reference = [](double x) {
    return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / std::numbers::pi) * (x + 0.044715 * x * x * x)));
  };
  for (double x : {-2.0, -0.5, 0.3, 4.0}) {
    CHECK(gelu(x) == Catch::Approx(reference(x)).epsilon(1e-14));
    double xv = x;
    const double fd = central_diff([&] { return gelu(xv); }, &xv, 1e-5);
    CHECK(std::abs(gelu_grad(x) - fd) <= 1e-8);
  }
  // Within 1e-3 of the exact erf form.
  for (double x = -4.0; x <= 4.0; x += 0.25) {
    CHECK(std::abs(gelu(x) - 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)))) < 1e-3);
  }
  Matrix m(2, 3);
  m << -2, -0.5, 0, 0.3, 4, 10;
  const Matrix gm = gelu(m);
  const Matrix gb = gelu_backward(m, Matrix::Ones(2, 3));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    CHECK(gm.data()[i] == Catch::Approx(gelu(m.data()[i])).epsilon(1e-14).margin(1e-300));
    CHECK(gb.data()[i] == Catch::Approx(gelu_grad(m.data()[i])).epsilon(1e-13).margin(1e-15));
  }
}

TEST_CASE("losses and their gradients") {
  Rng rng(8);
  const Matrix t = random_matrix(2, 6, rng);
  const LossResult zero = mse_loss(t, t);
  CHECK(zero.value == 0.0);
  CHECK(zero.grad.cwiseAbs().maxCoeff() == 0.0);
  CHECK(mae_loss(t, t).grad.cwiseAbs().maxCoeff() == 0.0);

  const Matrix shifted = t.array() + 1.0;
  CHECK(mse_loss(shifted, t).value == Catch::Approx(1.0));
  CHECK(mae_loss(shifted, t).value == Catch::Approx(1.0));

  Matrix p = random_matrix(2, 6, rng);
  const LossResult mse = mse_loss(p, t);
  const LossResult mae = mae_loss(p, t);
  CHECK((mse.grad - 2.0 * (p - t) / 12.0).cwiseAbs().maxCoeff() < 1e-15);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double fd_mse = central_diff([&] { return mse_loss(p, t).value; }, &p.data()[i], 1e-5);
    CHECK(std::abs(mse.grad.data()[i] - fd_mse) <= 1e-8);
    const double fd_mae = central_diff([&] { return mae_loss(p, t).value; }, &p.data()[i], 1e-7);
    CHECK(std::abs(mae.grad.data()[i] - fd_mae) <= 1e-8);
  }
  CHECK_THROWS_AS(mse_loss(p, random_matrix(3, 6, rng)), ConfigError);
}

TEST_CASE("adam matches a hand-written recurrence") {
  SECTION("zero gradient and zero decay leave parameters alone") {
    std::vector<double> theta{0.3, -1.2};
    const std::vector<double> g{0.0, 0.0};
    AdamState st{{0.9, 0.999, 1e-8, 0.0}, {}, {}, 0};
    const ParamView view{theta, g};
    for (int i = 0; i < 3; ++i) adam_step(std::span(&view, 1), st, 1e-3);
    CHECK(theta == std::vector<double>{0.3, -1.2});
  }
  SECTION("first step moves by about lr against the gradient") {
    std::vector<double> theta{1.0};
    const std::vector<double> g{0.37};
    AdamState st{{0.9, 0.999, 1e-8, 0.0}, {}, {}, 0};
    const ParamView view{theta, g};
    adam_step(std::span(&view, 1), st, 1e-3);
    CHECK(theta[0] == Catch::Approx(1.0 - 1e-3).epsilon(1e-9));
  }
  SECTION("two steps with coupled decay") {
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 1e-2, lr = 0.05;
    std::vector<double> theta{0.8};
    std::vector<double> g{0.0};
    AdamState st{{b1, b2, eps, wd}, {}, {}, 0};
    double ref = 0.8, m = 0.0, v = 0.0;
    for (int t = 1; t <= 2; ++t) {
      g[0] = t == 1 ? 0.5 : -0.2;
      const ParamView view{theta, g};
      adam_step(std::span(&view, 1), st, lr);
      const double gg = g[0] + wd * ref;
      m = b1 * m + (1 - b1) * gg;
      v = b2 * v + (1 - b2) * gg * gg;
      ref -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
      CHECK(theta[0] == ref);
    }
    CHECK(st.t == 2);
  }
}

TEST_CASE("step schedule") {
  const StepSchedule s{1e-3, 100, 0.5};
  CHECK(lr_at(s, 0) == 1e-3);
  CHECK(lr_at(s, 99) == 1e-3);
  CHECK(lr_at(s, 100) == Catch::Approx(5e-4).epsilon(1e-15));
  CHECK(lr_at(s, 999) == Catch::Approx(1e-3 * std::pow(0.5, 9)).epsilon(1e-15));
  CHECK_THROWS_AS(lr_at({1e-3, 0, 0.5}, 1), ConfigError);
}

TEST_CASE("initialisation ranges") {
  Rng rng(9);
  AffineWeights w = AffineWeights::zeros(8, 16);
  init_affine(w, rng);
  CHECK(w.W.cwiseAbs().maxCoeff() <= 0.25);
  CHECK(w.b.cwiseAbs().maxCoeff() <= 0.25);
  CHECK(w.W.cwiseAbs().maxCoeff() > 0.0);
  SpectralWeights s = SpectralWeights::zeros(4, 3, 5);
  init_spectral(s, rng);
  CHECK(s.re.minCoeff() >= 0.0);
  CHECK(s.re.maxCoeff() < 1.0 / 15.0);
  CHECK(s.im.maxCoeff() < 1.0 / 15.0);
}
