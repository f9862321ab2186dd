#pragma once

// Differentiable building blocks of the Fourier neural operator. Every forward kernel has a
// hand-written backward; batched kernels act on row-major matrices of shape
// [channels, batch * nx] where each row holds `batch` contiguous segments of nx nodes.

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "cno/fft.hpp"
#include "cno/grid.hpp"

namespace cno {

class Rng;

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using ComplexMatrix = Eigen::MatrixXcd;

/// Multi-channel field: values has shape [channels, grid.nx].
struct ChannelField {
  Matrix values;
  Grid1D grid{};

  int channels() const { return static_cast<int>(values.rows()); }
};

/// Row-wise rfft: [channels, nx] -> [channels, nx/2 + 1], unnormalized.
ComplexMatrix rfft(const ChannelField& x);
ChannelField irfft(const ComplexMatrix& spectrum, const Grid1D& grid);

/// Complex per-mode channel mixing R[k] of shape [d_out, d_in], stored as separate real and
/// imaginary parts. Row k * d_out + o of re/im holds R[k](o, :).
struct SpectralWeights {
  int modes = 0;
  int d_out = 0;
  int d_in = 0;
  Matrix re;
  Matrix im;

  static SpectralWeights zeros(int modes, int d_out, int d_in);
  /// R[k] = identity for every retained mode.
  static SpectralWeights identity(int modes, int channels);
  Complex at(int k, int o, int i) const { return {re(k * d_out + o, i), im(k * d_out + o, i)}; }
};

/// Pointwise dense map y = W x + b applied at every node.
struct AffineWeights {
  Matrix W;
  Vector b;

  static AffineWeights zeros(int d_out, int d_in);
  int d_out() const { return static_cast<int>(W.rows()); }
  int d_in() const { return static_cast<int>(W.cols()); }
};

/// Retained-mode real DFT of length nx: forward() is [nx, 2K] = [cos | -sin], inverse() is
/// [2K, nx] with the c_k / nx weights of the half-spectrum inverse (c_0 = c_{nx/2} = 1,
/// otherwise 2). Evaluating only K modes as a dense product is exactly rfft followed by
/// truncation, and the inverse equals irfft with the discarded modes zeroed.
class TruncatedDft {
 public:
  TruncatedDft(int nx, int modes);
  static std::shared_ptr<const TruncatedDft> get(int nx, int modes);

  int nx() const { return nx_; }
  int modes() const { return modes_; }
  const Matrix& forward() const { return forward_; }
  const Matrix& inverse() const { return inverse_; }

 private:
  int nx_;
  int modes_;
  Matrix forward_;
  Matrix inverse_;
};

/// Input spectrum kept for the backward pass: [2K, d_in * batch], real parts of every mode
/// then imaginary parts.
struct SpectralConvTape {
  Matrix coeffs;
};

/// Spectral convolution over a batch: retained modes mixed by R, higher modes zeroed.
/// Throws ConfigError when R.modes > nx/2 + 1 or channel counts disagree.
Matrix spectral_conv_forward(const Matrix& x, int nx, const SpectralWeights& R, SpectralConvTape* tape = nullptr);
/// Accumulates dL/dR into grad_R and returns dL/dx.
Matrix spectral_conv_backward(const Matrix& grad_out, int nx, const SpectralWeights& R,
                              const SpectralConvTape& tape, SpectralWeights& grad_R);

ChannelField spectral_conv_forward(const ChannelField& x, const SpectralWeights& R);
/// Returns (dL/dx, dL/dR).
std::pair<ChannelField, SpectralWeights> spectral_conv_backward(const ChannelField& x, const SpectralWeights& R,
                                                                 const ChannelField& grad_out);

Matrix affine_forward(const Matrix& x, const AffineWeights& w);
/// Accumulates parameter gradients into grad and returns dL/dx.
Matrix affine_backward(const Matrix& x, const AffineWeights& w, const Matrix& grad_out, AffineWeights& grad);

/// Tanh approximation 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
double gelu(double x);
double gelu_grad(double x);
Matrix gelu(const Matrix& x);
/// grad_out * gelu'(x), elementwise.
Matrix gelu_backward(const Matrix& x, const Matrix& grad_out);

struct LossResult {
  double value = 0.0;
  Matrix grad;
};

/// Mean of squared differences over all entries; grad = 2 (pred - target) / count.
LossResult mse_loss(const Matrix& pred, const Matrix& target);
/// Mean of absolute differences; the subgradient at zero difference is 0.
LossResult mae_loss(const Matrix& pred, const Matrix& target);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t t = 0;
};

struct ParamView {
  std::span<double> value;
  std::span<const double> grad;
};

/// One Adam update with bias correction. Weight decay is coupled: wd * theta is added to the
/// gradient before the moment updates. Moment buffers are created zeroed on first use.
void adam_step(std::span<const ParamView> params, AdamState& state, double lr);

struct StepSchedule {
  double lr0 = 1e-3;
  int step_size = 100;
  double gamma = 0.5;
};

/// lr0 * gamma^floor(epoch / step_size).
double lr_at(const StepSchedule& schedule, int epoch);

/// W and b uniform in +-1/sqrt(d_in).
void init_affine(AffineWeights& w, Rng& rng);
/// Real and imaginary parts uniform in [0, 1) scaled by 1 / (d_in * d_out).
void init_spectral(SpectralWeights& w, Rng& rng);

}  // namespace cno
