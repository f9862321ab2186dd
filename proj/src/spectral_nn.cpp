#include "cno/spectral_nn.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <string>

#include "cno/error.hpp"
#include "cno/rng.hpp"

namespace cno {

ComplexMatrix rfft(const ChannelField& x) {
  const int n = x.grid.nx;
  if (x.values.cols() != n) throw ConfigError("rfft: channel field width does not match grid");
  ComplexMatrix out(x.channels(), n / 2 + 1);
  for (int c = 0; c < x.channels(); ++c) {
    const auto spec = rfft(std::span<const double>(x.values.row(c).data(), n));
    for (int k = 0; k <= n / 2; ++k) out(c, k) = spec[k];
  }
  return out;
}

ChannelField irfft(const ComplexMatrix& spectrum, const Grid1D& grid) {
  const int n = grid.nx;
  if (spectrum.cols() != n / 2 + 1) throw ConfigError("irfft: spectrum width does not match grid");
  ChannelField out{Matrix(spectrum.rows(), n), grid};
  std::vector<Complex> row(n / 2 + 1);
  for (int c = 0; c < spectrum.rows(); ++c) {
    for (int k = 0; k <= n / 2; ++k) row[k] = spectrum(c, k);
    const auto v = irfft(row, n);
    for (int j = 0; j < n; ++j) out.values(c, j) = v[j];
  }
  return out;
}

SpectralWeights SpectralWeights::zeros(int modes, int d_out, int d_in) {
  SpectralWeights w;
  w.modes = modes;
  w.d_out = d_out;
  w.d_in = d_in;
  w.re = Matrix::Zero(modes * d_out, d_in);
  w.im = Matrix::Zero(modes * d_out, d_in);
  return w;
}

SpectralWeights SpectralWeights::identity(int modes, int channels) {
  auto w = zeros(modes, channels, channels);
  for (int k = 0; k < modes; ++k) w.re.middleRows(k * channels, channels).setIdentity();
  return w;
}

AffineWeights AffineWeights::zeros(int d_out, int d_in) {
  return AffineWeights{Matrix::Zero(d_out, d_in), Vector::Zero(d_out)};
}

TruncatedDft::TruncatedDft(int nx, int modes) : nx_(nx), modes_(modes) {
  if (nx < 2 || nx % 2 != 0) throw ConfigError("spectral conv: nx must be even");
  if (modes < 1 || modes > nx / 2 + 1) {
    throw ConfigError("spectral conv: " + std::to_string(modes) + " modes exceed nx/2 + 1 = " +
                      std::to_string(nx / 2 + 1));
  }
  forward_.resize(nx, 2 * modes);
  inverse_.resize(2 * modes, nx);
  for (int j = 0; j < nx; ++j) {
    for (int k = 0; k < modes; ++k) {
      // Reduce j*k modulo nx before scaling so the angle stays exact for large indices.
      const double theta = 2.0 * std::numbers::pi * static_cast<double>((static_cast<long>(j) * k) % nx) / nx;
      const double c = std::cos(theta);
      const double s = std::sin(theta);
      const double weight = (k == 0 || 2 * k == nx) ? 1.0 / nx : 2.0 / nx;
      forward_(j, k) = c;
      forward_(j, modes + k) = -s;
      inverse_(k, j) = weight * c;
      inverse_(modes + k, j) = -weight * s;
    }
  }
}

std::shared_ptr<const TruncatedDft> TruncatedDft::get(int nx, int modes) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::shared_ptr<const TruncatedDft>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[{nx, modes}];
  if (!slot) slot = std::make_shared<const TruncatedDft>(nx, modes);
  return slot;
}

namespace {

using ModeMap = Eigen::Map<Matrix>;
using ConstModeMap = Eigen::Map<const Matrix>;

// Coefficients are kept mode-major, [2K, channels * batch]: row k holds the real part of mode k
// and row K + k its imaginary part, each a contiguous row-major [channels, batch] block.
ConstModeMap mode_view(const Matrix& coeffs, int channels, int batch, int row) {
  return ConstModeMap(coeffs.row(row).data(), channels, batch);
}

ModeMap mode_view(Matrix& coeffs, int channels, int batch, int row) {
  return ModeMap(coeffs.row(row).data(), channels, batch);
}

int batch_of(const Matrix& x, int nx) {
  if (nx <= 0 || x.cols() % nx != 0) throw ConfigError("batched field width is not a multiple of nx");
  return static_cast<int>(x.cols() / nx);
}

}  // namespace

Matrix spectral_conv_forward(const Matrix& x, int nx, const SpectralWeights& R, SpectralConvTape* tape) {
  if (x.rows() != R.d_in) throw ConfigError("spectral conv: input channels do not match weights");
  const int batch = batch_of(x, nx);
  const auto dft = TruncatedDft::get(nx, R.modes);
  const int K = R.modes;

  // [d_in, batch * nx] row-major has the same memory as [d_in * batch, nx].
  Eigen::Map<const Matrix> xs(x.data(), static_cast<Eigen::Index>(R.d_in) * batch, nx);
  Matrix coeffs = dft->forward().transpose() * xs.transpose();

  Matrix mixed(2 * K, static_cast<Eigen::Index>(R.d_out) * batch);
  for (int k = 0; k < K; ++k) {
    const auto xr = mode_view(coeffs, R.d_in, batch, k);
    const auto xi = mode_view(coeffs, R.d_in, batch, K + k);
    const auto rr = R.re.middleRows(k * R.d_out, R.d_out);
    const auto ri = R.im.middleRows(k * R.d_out, R.d_out);
    auto yr = mode_view(mixed, R.d_out, batch, k);
    auto yi = mode_view(mixed, R.d_out, batch, K + k);
    yr.noalias() = rr * xr;
    yr.noalias() -= ri * xi;
    yi.noalias() = rr * xi;
    yi.noalias() += ri * xr;
  }
  Matrix out = mixed.transpose() * dft->inverse();
  out.resize(R.d_out, static_cast<Eigen::Index>(batch) * nx);  // row-major reshape, no data movement
  if (tape) tape->coeffs = std::move(coeffs);
  return out;
}

Matrix spectral_conv_backward(const Matrix& grad_out, int nx, const SpectralWeights& R,
                              const SpectralConvTape& tape, SpectralWeights& grad_R) {
  if (grad_out.rows() != R.d_out) throw ConfigError("spectral conv backward: gradient channels mismatch");
  const int batch = batch_of(grad_out, nx);
  const auto dft = TruncatedDft::get(nx, R.modes);
  const int K = R.modes;

  // The inverse map is linear, so its adjoint is multiplication by the transpose.
  Eigen::Map<const Matrix> gs(grad_out.data(), static_cast<Eigen::Index>(R.d_out) * batch, nx);
  Matrix g = dft->inverse() * gs.transpose();

  Matrix h(2 * K, static_cast<Eigen::Index>(R.d_in) * batch);
  for (int k = 0; k < K; ++k) {
    const auto gr = mode_view(g, R.d_out, batch, k);
    const auto gi = mode_view(g, R.d_out, batch, K + k);
    const auto xr = mode_view(tape.coeffs, R.d_in, batch, k);
    const auto xi = mode_view(tape.coeffs, R.d_in, batch, K + k);
    const auto rr = R.re.middleRows(k * R.d_out, R.d_out);
    const auto ri = R.im.middleRows(k * R.d_out, R.d_out);
    // dL/dR = g x^H
    auto gre = grad_R.re.middleRows(k * R.d_out, R.d_out);
    auto gim = grad_R.im.middleRows(k * R.d_out, R.d_out);
    gre.noalias() += gr * xr.transpose();
    gre.noalias() += gi * xi.transpose();
    gim.noalias() += gi * xr.transpose();
    gim.noalias() -= gr * xi.transpose();
    // dL/dx_hat = R^H g
    auto hr = mode_view(h, R.d_in, batch, k);
    auto hi = mode_view(h, R.d_in, batch, K + k);
    hr.noalias() = rr.transpose() * gr;
    hr.noalias() += ri.transpose() * gi;
    hi.noalias() = rr.transpose() * gi;
    hi.noalias() -= ri.transpose() * gr;
  }
  Matrix grad_x = h.transpose() * dft->forward().transpose();
  grad_x.resize(R.d_in, static_cast<Eigen::Index>(batch) * nx);
  return grad_x;
}

ChannelField spectral_conv_forward(const ChannelField& x, const SpectralWeights& R) {
  return ChannelField{spectral_conv_forward(x.values, x.grid.nx, R), x.grid};
}

std::pair<ChannelField, SpectralWeights> spectral_conv_backward(const ChannelField& x, const SpectralWeights& R,
                                                                 const ChannelField& grad_out) {
  SpectralConvTape tape;
  spectral_conv_forward(x.values, x.grid.nx, R, &tape);
  auto grad_R = SpectralWeights::zeros(R.modes, R.d_out, R.d_in);
  Matrix gx = spectral_conv_backward(grad_out.values, x.grid.nx, R, tape, grad_R);
  return {ChannelField{std::move(gx), x.grid}, std::move(grad_R)};
}

Matrix affine_forward(const Matrix& x, const AffineWeights& w) {
  if (x.rows() != w.d_in()) throw ConfigError("affine: input channels do not match weights");
  Matrix y = w.W * x;
  y.colwise() += w.b;
  return y;
}

Matrix affine_backward(const Matrix& x, const AffineWeights& w, const Matrix& grad_out, AffineWeights& grad) {
  grad.W.noalias() += grad_out * x.transpose();
  grad.b += grad_out.rowwise().sum();
  return w.W.transpose() * grad_out;
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

double gelu_grad(double x) {
  const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

namespace {
using FlatArray = Eigen::Map<const Eigen::ArrayXd>;
using FlatArrayOut = Eigen::Map<Eigen::ArrayXd>;

FlatArray flat(const Matrix& m) { return FlatArray(m.data(), m.size()); }

// 0.5 (1 + tanh(z)) = 1 / (1 + e^{-2z}); Eigen vectorizes exp but not tanh in double precision.
// Works on the flat buffer so the row-major layout is never transposed.
Eigen::ArrayXd gelu_gate(const Matrix& x) {
  const FlatArray a = flat(x);
  return 1.0 / (1.0 + ((-2.0 * kGeluC) * (a + kGeluA * a.cube())).exp());
}
}  // namespace

Matrix gelu(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  FlatArrayOut(y.data(), y.size()) = flat(x) * gelu_gate(x);
  return y;
}

Matrix gelu_backward(const Matrix& x, const Matrix& grad_out) {
  if (x.rows() != grad_out.rows() || x.cols() != grad_out.cols()) throw ConfigError("gelu: shape mismatch");
  const Eigen::ArrayXd s = gelu_gate(x);
  const FlatArray a = flat(x);
  Matrix g(x.rows(), x.cols());
  // d/dx [x s(2z)] = s + x * 2 s (1 - s) * dz/dx
  FlatArrayOut(g.data(), g.size()) =
      flat(grad_out) * (s + (2.0 * kGeluC) * a * s * (1.0 - s) * (1.0 + (3.0 * kGeluA) * a.square()));
  return g;
}

LossResult mse_loss(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw ConfigError("mse: shape mismatch");
  const double count = static_cast<double>(pred.size());
  const Matrix diff = pred - target;
  return LossResult{diff.squaredNorm() / count, (2.0 / count) * diff};
}

LossResult mae_loss(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw ConfigError("mae: shape mismatch");
  const double count = static_cast<double>(pred.size());
  const Matrix diff = pred - target;
  Matrix grad = diff.unaryExpr([count](double d) { return d > 0.0 ? 1.0 / count : (d < 0.0 ? -1.0 / count : 0.0); });
  return LossResult{diff.cwiseAbs().sum() / count, std::move(grad)};
}

void adam_step(std::span<const ParamView> params, AdamState& state, double lr) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value.size(), 0.0);
      state.v.emplace_back(p.value.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ConfigError("adam: parameter list changed between steps");
  const auto& c = state.config;
  ++state.t;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto value = params[p].value;
    auto grad = params[p].grad;
    auto& m = state.m[p];
    auto& v = state.v[p];
    if (m.size() != value.size() || grad.size() != value.size()) throw ConfigError("adam: buffer size mismatch");
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i] + c.weight_decay * value[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      value[i] -= lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

double lr_at(const StepSchedule& schedule, int epoch) {
  if (schedule.step_size <= 0) throw ConfigError("schedule: step_size must be positive");
  if (!(schedule.gamma > 0.0 && schedule.gamma <= 1.0)) throw ConfigError("schedule: gamma must be in (0, 1]");
  return schedule.lr0 * std::pow(schedule.gamma, epoch / schedule.step_size);
}

void init_affine(AffineWeights& w, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(w.d_in()));
  for (Eigen::Index i = 0; i < w.W.size(); ++i) w.W.data()[i] = rng.uniform(-bound, bound);
  for (Eigen::Index i = 0; i < w.b.size(); ++i) w.b[i] = rng.uniform(-bound, bound);
}

void init_spectral(SpectralWeights& w, Rng& rng) {
  const double scale = 1.0 / (static_cast<double>(w.d_in) * w.d_out);
  for (Eigen::Index i = 0; i < w.re.size(); ++i) w.re.data()[i] = scale * rng.uniform01();
  for (Eigen::Index i = 0; i < w.im.size(); ++i) w.im.data()[i] = scale * rng.uniform01();
}

}  // namespace cno
