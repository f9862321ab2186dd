#pragma once

// Parametric FNO foundation block: lift -> Fourier layers -> project, with the parameter
// vector broadcast as extra input channels.

#include <cstdint>
#include <vector>

#include "cno/dataset.hpp"
#include "cno/grid.hpp"
#include "cno/spectral_nn.hpp"

namespace cno {

struct PFNOConfig {
  int d_h = 128;
  int n_layers = 4;
  int modes = 16;
  int n_params = 0;

  void validate() const;
  friend bool operator==(const PFNOConfig&, const PFNOConfig&) = default;
};

struct FourierLayer {
  SpectralWeights spectral;
  AffineWeights pointwise;
};

struct PFNOModel {
  PFNOConfig config;
  AffineWeights lift;  // 1 + p -> d_h
  std::vector<FourierLayer> layers;
  AffineWeights project;  // d_h -> 1

  static PFNOModel zeros(const PFNOConfig& config);
  static PFNOModel random(const PFNOConfig& config, std::uint64_t seed);
  /// Throws ConfigError when tensor shapes disagree with config.
  void validate() const;
  /// Views over every weight tensor in declaration order, paired with the matching tensor
  /// of grad (which must have the same shapes).
  std::vector<ParamView> param_views(const PFNOModel& grad);
  std::size_t parameter_count() const;
};

/// Stacks a batch of states and parameter vectors into the [1 + p, batch * nx] input.
/// states is [batch, nx]; params is [batch, p].
Matrix pfno_input(const Matrix& states, const Matrix& params);

/// Activations kept for the backward pass.
struct PFNOTape {
  Matrix input;
  std::vector<Matrix> layer_in;   // input to layer l
  std::vector<Matrix> layer_pre;  // pre-activation of layer l
  std::vector<SpectralConvTape> spectral;
  Matrix embed;
};

/// Batched embedding [d_h, batch * nx]: the pipeline without the projection.
Matrix pfno_embed_batch(const PFNOModel& model, const Matrix& input, int nx, PFNOTape* tape = nullptr);
/// Batched prediction [1, batch * nx].
Matrix pfno_forward_batch(const PFNOModel& model, const Matrix& input, int nx, PFNOTape* tape = nullptr);
/// Backpropagates dL/d(embedding) through the Fourier layers and lift. Gradients accumulate into grad;
/// returns dL/d(input).
Matrix pfno_embed_backward(const PFNOModel& model, const PFNOTape& tape, int nx, const Matrix& grad_embed,
                           PFNOModel& grad);
/// Backpropagates dL/d(prediction) through the whole block.
Matrix pfno_forward_backward(const PFNOModel& model, const PFNOTape& tape, int nx, const Matrix& grad_out,
                             PFNOModel& grad);

/// Throws ConfigError unless gamma has exactly config.n_params entries.
Field1D pfno_forward(const PFNOModel& model, const Field1D& u, const ParamVector& gamma);
ChannelField pfno_embed(const PFNOModel& model, const Field1D& u, const ParamVector& gamma);
/// Autoregressive chaining; snapshots[0] = u0.
Trajectory rollout(const PFNOModel& model, const Field1D& u0, const ParamVector& gamma, int n_steps,
                   double dt = 0.01);

struct TrainHyper {
  int epochs = 1000;
  int batch = 50;
  StepSchedule schedule{};
  AdamConfig adam{};
  std::uint64_t seed = 0;
};

struct LossHistory {
  std::vector<double> train;
  std::vector<double> test;
};

struct PretrainResult {
  PFNOModel model;
  LossHistory history;
};

/// One-step training pairs (u_t -> u_{t+1}) for every t of every trajectory.
struct StepPairs {
  Matrix inputs;   // [n, nx]
  Matrix targets;  // [n, nx]
  Matrix params;   // [n, p]
  int nx = 0;
  int size() const { return static_cast<int>(inputs.rows()); }
};
StepPairs harvest_pairs(const Dataset& ds);

/// Teacher-forced MSE training. Per-epoch train loss is the mean over minibatches, test loss
/// the MSE over every test pair (empty when test is empty). Throws DataError for an empty
/// training set and DivergenceError when the loss becomes non-finite.
PretrainResult pretrain_block(const Dataset& train, const Dataset& test, const PFNOConfig& config,
                              const TrainHyper& hyper);
/// MSE of one-step predictions over all pairs of ds.
double one_step_mse(const PFNOModel& model, const Dataset& ds);

/// Checkpoint: "CNOBLOCK", u32 version, u8 equation tag, u32 d_h, n_layers, modes, n_params,
/// then every tensor as u32 rank, u32 dims, f64 data, then CRC32 of all preceding bytes.
inline constexpr std::uint32_t kBlockVersion = 1;
struct BlockCheckpoint {
  EquationKind kind = EquationKind::Convection;
  PFNOModel model;
};
std::vector<std::uint8_t> encode_block(const PFNOModel& model, EquationKind kind);
BlockCheckpoint decode_block(std::vector<std::uint8_t> bytes);

}  // namespace cno
