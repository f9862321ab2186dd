#pragma once

// Compositional assembly: frozen foundation blocks whose embeddings are concatenated per
// grid node and mapped to the next state by a trainable pointwise aggregator.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cno/bc_operator.hpp"
#include "cno/dataset.hpp"
#include "cno/library.hpp"
#include "cno/pfno.hpp"

namespace cno {

/// Which field of the target parameters a block receives.
enum class ParamRoute : std::uint8_t {
  None = 0,      // no parameters
  Beta = 1,      // beta
  Nu = 2,        // nu
  NuOverPi = 3,  // nu / pi, delivered as the block's nu
};

std::string_view to_string(ParamRoute route);
ParamRoute route_from_string(std::string_view name);
ParamVector route_params(ParamRoute route, const ParamVector& gamma);

struct AssemblyBlock {
  std::string name;
  EquationKind kind = EquationKind::Convection;
  ParamRoute route = ParamRoute::None;
  PFNOModel model;
  std::uint32_t crc = 0;  // library CRC of the checkpoint the block was loaded from
};

/// Standard routing: convection <- beta and diffusion <- nu for convection-diffusion;
/// nonlinear convection <- none and diffusion <- nu / pi for Burgers.
std::vector<std::pair<EquationKind, ParamRoute>> default_routing(EquationKind target);

enum class AggregatorKind : std::uint8_t { Linear = 0, MLP = 1 };

struct AggregatorConfig {
  AggregatorKind kind = AggregatorKind::Linear;
  std::vector<int> widths;  // Linear: {in, 1}; MLP: {in, hidden, 1}

  static AggregatorConfig linear(int in) { return {AggregatorKind::Linear, {in, 1}}; }
  static AggregatorConfig mlp(int in, int hidden) { return {AggregatorKind::MLP, {in, hidden, 1}}; }
  void validate() const;
};

/// Pointwise map from concatenated embeddings to one channel. GELU between MLP layers.
struct Aggregator {
  AggregatorConfig config;
  std::vector<AffineWeights> layers;

  static Aggregator zeros(const AggregatorConfig& config);
  static Aggregator random(const AggregatorConfig& config, std::uint64_t seed);

  struct Tape {
    std::vector<Matrix> inputs;  // input of each layer
    std::vector<Matrix> pre;     // pre-activation of each hidden layer
  };
  Matrix forward(const Matrix& x, Tape* tape = nullptr) const;
  /// Accumulates into grad; returns dL/dx.
  Matrix backward(const Tape& tape, const Matrix& grad_out, Aggregator& grad) const;
  std::vector<ParamView> param_views(const Aggregator& grad);
};

struct CompNOModel {
  EquationKind target = EquationKind::ConvectionDiffusion;
  std::vector<AssemblyBlock> blocks;
  Aggregator aggregator;

  /// Throws ConfigError on unequal embedding widths, an aggregator input width other than
  /// n_blocks * d_h, or a target parameter no block receives.
  void validate() const;
  int embed_width() const;
};

/// Loads the blocks named in order from the library with the target's default routing and a
/// randomly initialized aggregator.
CompNOModel assemble(EquationKind target, const FoundationLibrary& library, const std::vector<std::string>& names,
                     AggregatorKind kind, int hidden_width, std::uint64_t seed);
/// Same, for blocks already in memory.
CompNOModel assemble(EquationKind target, std::vector<AssemblyBlock> blocks, const AggregatorConfig& config,
                     std::uint64_t seed);

/// Concatenated block embeddings [n_blocks * d_h, batch * nx] for states [batch, nx].
Matrix compno_embed_batch(const CompNOModel& model, const Matrix& states, const std::vector<ParamVector>& gammas);

/// Dirichlet values imposed on one output state.
struct DirichletPair {
  double left = 0.0;
  double right = 0.0;
};

/// One step. With bc, the output passes through the Dirichlet correction with the full
/// composed map as kernel; probes come from cache when given.
Field1D compno_forward(const CompNOModel& model, const Field1D& u, const ParamVector& gamma,
                       std::optional<DirichletPair> bc = std::nullopt, ProbeCache* cache = nullptr);
/// The uncorrected one-step map as a ParamForward.
ParamForward compno_map(const CompNOModel& model);
Trajectory rollout(const CompNOModel& model, const Field1D& u0, const ParamVector& gamma, int n_steps,
                   double dt = 0.01);

struct FinetuneHyper {
  int epochs = 100;
  int batch = 4;
  StepSchedule schedule{1e-4, 100, 0.5};
  AdamConfig adam{};
  std::uint64_t seed = 0;
  // Train through the Dirichlet correction. The adjusted input is held fixed per step
  // (no gradient through the probes), boundary nodes are pinned to the target.
  bool bc_in_loop = false;
};

struct FinetuneResult {
  CompNOModel model;
  LossHistory history;  // MAE per epoch
};

/// MAE training of the aggregator only. Block checkpoints are re-encoded before and after and
/// compared byte for byte; a change throws FreezeViolationError.
FinetuneResult finetune_aggregator(const CompNOModel& model, const Dataset& train, const Dataset& test,
                                   const FinetuneHyper& hyper);
/// Teacher-forced one-step MAE over all pairs of ds. With bc, each step goes through the
/// Dirichlet correction using the target's boundary values.
double one_step_mae(const CompNOModel& model, const Dataset& ds, bool bc = false);

/// a2 * beta * d2v/dx2 - a1 * nu * du/dx, spectral derivatives.
Field1D residual_linear(const Field1D& u, const Field1D& v, double a1, double a2, double beta, double nu);
/// a1^2 u u_x + a2^2 v v_x + a1 a2 (v u_x + u v_x) - a1 nu u_xx, spectral derivatives.
Field1D residual_nonlinear(const Field1D& u, const Field1D& v, double a1, double a2, double nu);

/// Least-squares weights (a1, a2) with pred ~ a1 u + a2 v.
std::pair<double, double> fit_alphas(const Field1D& pred, const Field1D& u, const Field1D& v);

/// Assembly checkpoint: "CNOASSMB", u32 version, u8 target, u32 n_blocks, per block (name,
/// u8 equation, u8 route, u32 crc), u8 aggregator kind, u32 n_widths, widths, tensors, CRC32.
inline constexpr std::uint32_t kAssemblyVersion = 1;
std::vector<std::uint8_t> encode_assembly(const CompNOModel& model);
/// Resolves blocks from the library; a block whose library CRC differs from the recorded one
/// throws ChecksumError.
CompNOModel decode_assembly(std::vector<std::uint8_t> bytes, const FoundationLibrary& library);

}  // namespace cno
