#include "cno/compno.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <string>

#include "cno/binary_io.hpp"
#include "cno/error.hpp"
#include "cno/fft.hpp"
#include "cno/parallel.hpp"
#include "cno/rng.hpp"
#include "tensor_io.hpp"

namespace cno {

using detail::read_tensor;
using detail::write_tensor;

std::string_view to_string(ParamRoute route) {
  switch (route) {
    case ParamRoute::None: return "none";
    case ParamRoute::Beta: return "beta";
    case ParamRoute::Nu: return "nu";
    case ParamRoute::NuOverPi: return "nu_over_pi";
  }
  return "unknown";
}

ParamRoute route_from_string(std::string_view name) {
  for (auto r : {ParamRoute::None, ParamRoute::Beta, ParamRoute::Nu, ParamRoute::NuOverPi}) {
    if (to_string(r) == name) return r;
  }
  throw ConfigError("unknown parameter route '" + std::string(name) + "'");
}

namespace {

ParamRoute route_from_tag(std::uint8_t tag) {
  if (tag > 3) throw DataError("assembly: unknown route tag " + std::to_string(tag));
  return static_cast<ParamRoute>(tag);
}

int route_arity(ParamRoute route) { return route == ParamRoute::None ? 0 : 1; }

}  // namespace

ParamVector route_params(ParamRoute route, const ParamVector& gamma) {
  switch (route) {
    case ParamRoute::None: return {};
    case ParamRoute::Beta:
      if (!gamma.beta) throw ConfigError("routing: block needs beta but the parameters have none");
      return ParamVector{gamma.beta, std::nullopt};
    case ParamRoute::Nu:
    case ParamRoute::NuOverPi:
      if (!gamma.nu) throw ConfigError("routing: block needs nu but the parameters have none");
      return ParamVector{std::nullopt, route == ParamRoute::Nu ? *gamma.nu : *gamma.nu / std::numbers::pi};
  }
  throw ConfigError("routing: invalid route");
}

std::vector<std::pair<EquationKind, ParamRoute>> default_routing(EquationKind target) {
  switch (target) {
    case EquationKind::ConvectionDiffusion:
      return {{EquationKind::Convection, ParamRoute::Beta}, {EquationKind::Diffusion, ParamRoute::Nu}};
    case EquationKind::Burgers:
      return {{EquationKind::NonlinearConvection, ParamRoute::None}, {EquationKind::Diffusion, ParamRoute::NuOverPi}};
    default:
      throw ConfigError("no assembly is defined for " + std::string(to_string(target)));
  }
}

void AggregatorConfig::validate() const {
  const std::size_t expected = kind == AggregatorKind::Linear ? 2 : 3;
  if (widths.size() != expected) {
    throw ConfigError(std::string("aggregator: ") + (kind == AggregatorKind::Linear ? "linear" : "mlp") +
                      " needs " + std::to_string(expected) + " widths");
  }
  if (widths.back() != 1) throw ConfigError("aggregator: last width must be 1");
  for (int w : widths) {
    if (w < 1) throw ConfigError("aggregator: widths must be positive");
  }
}

Aggregator Aggregator::zeros(const AggregatorConfig& config) {
  config.validate();
  Aggregator a;
  a.config = config;
  for (std::size_t i = 0; i + 1 < config.widths.size(); ++i) {
    a.layers.push_back(AffineWeights::zeros(config.widths[i + 1], config.widths[i]));
  }
  return a;
}

Aggregator Aggregator::random(const AggregatorConfig& config, std::uint64_t seed) {
  Aggregator a = zeros(config);
  Rng rng(seed);
  for (auto& layer : a.layers) init_affine(layer, rng);
  return a;
}

Matrix Aggregator::forward(const Matrix& x, Tape* tape) const {
  if (x.rows() != config.widths.front()) {
    throw ConfigError("aggregator: input width " + std::to_string(x.rows()) + " does not match " +
                      std::to_string(config.widths.front()));
  }
  if (tape) {
    tape->inputs.clear();
    tape->pre.clear();
  }
  Matrix h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix z = affine_forward(h, layers[l]);
    if (tape) tape->inputs.push_back(std::move(h));
    if (l + 1 < layers.size()) {
      h = gelu(z);
      if (tape) tape->pre.push_back(std::move(z));
    } else {
      h = std::move(z);
    }
  }
  return h;
}

Matrix Aggregator::backward(const Tape& tape, const Matrix& grad_out, Aggregator& grad) const {
  Matrix g = grad_out;
  for (std::size_t l = layers.size(); l-- > 0;) {
    if (l + 1 < layers.size()) g = gelu_backward(tape.pre[l], g);
    g = affine_backward(tape.inputs[l], layers[l], g, grad.layers[l]);
  }
  return g;
}

std::vector<ParamView> Aggregator::param_views(const Aggregator& grad) {
  std::vector<ParamView> views;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    views.push_back({{layers[l].W.data(), static_cast<std::size_t>(layers[l].W.size())},
                     {grad.layers[l].W.data(), static_cast<std::size_t>(grad.layers[l].W.size())}});
    views.push_back({{layers[l].b.data(), static_cast<std::size_t>(layers[l].b.size())},
                     {grad.layers[l].b.data(), static_cast<std::size_t>(grad.layers[l].b.size())}});
  }
  return views;
}

int CompNOModel::embed_width() const { return blocks.empty() ? 0 : blocks.front().model.config.d_h; }

void CompNOModel::validate() const {
  if (blocks.empty()) throw ConfigError("assembly: no blocks");
  const int d = embed_width();
  bool has_beta = false;
  bool has_nu = false;
  for (const auto& b : blocks) {
    b.model.validate();
    if (b.model.config.d_h != d) throw ConfigError("assembly: block '" + b.name + "' has a different embedding width");
    if (b.model.config.n_params != route_arity(b.route)) {
      throw ConfigError("assembly: block '" + b.name + "' expects " + std::to_string(b.model.config.n_params) +
                        " parameters but its route delivers " + std::to_string(route_arity(b.route)));
    }
    has_beta |= b.route == ParamRoute::Beta;
    has_nu |= b.route == ParamRoute::Nu || b.route == ParamRoute::NuOverPi;
  }
  if ((needs_beta(target) && !has_beta) || (needs_nu(target) && !has_nu)) {
    throw ConfigError("assembly: routing leaves a " + std::string(to_string(target)) + " parameter unused");
  }
  aggregator.config.validate();
  const int width = d * static_cast<int>(blocks.size());
  if (aggregator.config.widths.front() != width) {
    throw ConfigError("assembly: aggregator input width " + std::to_string(aggregator.config.widths.front()) +
                      " != n_blocks * d_h = " + std::to_string(width));
  }
  for (std::size_t l = 0; l < aggregator.layers.size(); ++l) {
    const auto& w = aggregator.layers[l];
    if (w.d_in() != aggregator.config.widths[l] || w.d_out() != aggregator.config.widths[l + 1] ||
        w.b.size() != w.d_out()) {
      throw ConfigError("assembly: aggregator weights do not match widths");
    }
  }
}

CompNOModel assemble(EquationKind target, std::vector<AssemblyBlock> blocks, const AggregatorConfig& config,
                     std::uint64_t seed) {
  CompNOModel m;
  m.target = target;
  m.blocks = std::move(blocks);
  m.aggregator = Aggregator::random(config, seed);
  m.validate();
  return m;
}

CompNOModel assemble(EquationKind target, const FoundationLibrary& library, const std::vector<std::string>& names,
                     AggregatorKind kind, int hidden_width, std::uint64_t seed) {
  const auto routing = default_routing(target);
  if (names.size() != routing.size()) {
    throw ConfigError("assembly: " + std::string(to_string(target)) + " needs " + std::to_string(routing.size()) +
                      " blocks, got " + std::to_string(names.size()));
  }
  std::vector<AssemblyBlock> blocks;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto [kind_i, route] = routing[i];
    blocks.push_back({names[i], kind_i, route, library.load_block(names[i], kind_i), library.entry(names[i]).crc});
  }
  const int width = blocks.front().model.config.d_h * static_cast<int>(blocks.size());
  const auto config = kind == AggregatorKind::Linear ? AggregatorConfig::linear(width)
                                                     : AggregatorConfig::mlp(width, hidden_width);
  return assemble(target, std::move(blocks), config, seed);
}

namespace {

Matrix block_params(ParamRoute route, const std::vector<ParamVector>& gammas) {
  Matrix p(static_cast<Eigen::Index>(gammas.size()), route_arity(route));
  for (std::size_t b = 0; b < gammas.size(); ++b) {
    const auto vals = route_params(route, gammas[b]).values();
    for (std::size_t i = 0; i < vals.size(); ++i) p(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i)) = vals[i];
  }
  return p;
}

}  // namespace

Matrix compno_embed_batch(const CompNOModel& model, const Matrix& states, const std::vector<ParamVector>& gammas) {
  if (static_cast<std::size_t>(states.rows()) != gammas.size()) {
    throw ConfigError("assembly: batch size of states and parameters differ");
  }
  const int nx = static_cast<int>(states.cols());
  const int d = model.embed_width();
  Matrix out(static_cast<Eigen::Index>(d) * model.blocks.size(), states.rows() * nx);
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    const auto& b = model.blocks[i];
    out.middleRows(static_cast<Eigen::Index>(i) * d, d) =
        pfno_embed_batch(b.model, pfno_input(states, block_params(b.route, gammas)), nx);
  }
  return out;
}

namespace {

Field1D plain_forward(const CompNOModel& model, const Field1D& u, const ParamVector& gamma) {
  const Matrix states = Eigen::Map<const Matrix>(u.values().data(), 1, u.size());
  const Matrix y = model.aggregator.forward(compno_embed_batch(model, states, {gamma}));
  return Field1D(u.grid(), std::vector<double>(y.data(), y.data() + y.size()));
}

}  // namespace

ParamForward compno_map(const CompNOModel& model) {
  return [&model](const Field1D& u, const ParamVector& gamma) { return plain_forward(model, u, gamma); };
}

Field1D compno_forward(const CompNOModel& model, const Field1D& u, const ParamVector& gamma,
                       std::optional<DirichletPair> bc, ProbeCache* cache) {
  if (!bc) return plain_forward(model, u, gamma);
  ProbeCache local;
  const ParamForward map = compno_map(model);
  const KernelProbe probe = (cache ? *cache : local).get(map, u.grid(), gamma);
  const KernelHandle K = [&](const Field1D& x) { return plain_forward(model, x, gamma); };
  Field1D out;
  apply_dirichlet_correction_lenient(K, u, bc->left, bc->right, probe, out);
  return out;
}

Trajectory rollout(const CompNOModel& model, const Field1D& u0, const ParamVector& gamma, int n_steps, double dt) {
  if (n_steps < 0) throw ConfigError("rollout: n_steps must be >= 0");
  Trajectory traj;
  traj.dt = dt;
  traj.params = gamma;
  traj.snapshots.push_back(u0);
  for (int t = 0; t < n_steps; ++t) traj.snapshots.push_back(plain_forward(model, traj.snapshots.back(), gamma));
  return traj;
}

namespace {

struct EmbeddedPairs {
  Matrix embed;    // [C, n * nx]
  Matrix targets;  // [1, n * nx]
  Matrix inputs;   // [n, nx]
  std::vector<ParamVector> gammas;
  int nx = 0;
  int size() const { return nx == 0 ? 0 : static_cast<int>(targets.cols() / nx); }
};

Matrix embed_rows(const CompNOModel& model, const Matrix& states, const std::vector<ParamVector>& gammas) {
  constexpr int kChunk = 32;
  const int n = static_cast<int>(states.rows());
  const int nx = static_cast<int>(states.cols());
  const int C = model.embed_width() * static_cast<int>(model.blocks.size());
  Matrix out(C, static_cast<Eigen::Index>(n) * nx);
  const int n_chunks = (n + kChunk - 1) / kChunk;
  parallel_for(static_cast<std::size_t>(n_chunks), [&](std::size_t c) {
    const int start = static_cast<int>(c) * kChunk;
    const int len = std::min(kChunk, n - start);
    const std::vector<ParamVector> g(gammas.begin() + start, gammas.begin() + start + len);
    out.middleCols(static_cast<Eigen::Index>(start) * nx, static_cast<Eigen::Index>(len) * nx) =
        compno_embed_batch(model, states.middleRows(start, len), g);
  });
  return out;
}

EmbeddedPairs embed_pairs(const CompNOModel& model, const Dataset& ds) {
  StepPairs pairs = harvest_pairs(ds);
  EmbeddedPairs out;
  out.nx = pairs.nx;
  out.targets = Eigen::Map<const Matrix>(pairs.targets.data(), 1, pairs.targets.size());
  for (const auto& traj : ds.trajectories) {
    for (int t = 0; t < ds.n_steps(); ++t) out.gammas.push_back(traj.params);
  }
  out.inputs = std::move(pairs.inputs);
  out.embed = embed_rows(model, out.inputs, out.gammas);
  return out;
}

double embedded_mae(const Aggregator& agg, const EmbeddedPairs& pairs) {
  constexpr int kChunk = 256;
  double sum = 0.0;
  const Eigen::Index total = pairs.targets.cols();
  const Eigen::Index step = static_cast<Eigen::Index>(kChunk) * pairs.nx;
  for (Eigen::Index start = 0; start < total; start += step) {
    const Eigen::Index len = std::min(step, total - start);
    const Matrix pred = agg.forward(pairs.embed.middleCols(start, len));
    sum += (pred - pairs.targets.middleCols(start, len)).cwiseAbs().sum();
  }
  return sum / static_cast<double>(total);
}

// Embedding columns of the boundary impulses, one per distinct parameter vector. The
// blocks are frozen, so the probe diagonals only need the aggregator applied to these.
struct ProbeEmbeds {
  std::vector<int> index;  // pair -> column
  Matrix left, right;      // [C, n_distinct]
};

ProbeEmbeds probe_embeds(const CompNOModel& model, const EmbeddedPairs& p) {
  std::vector<ParamVector> keys;
  ProbeEmbeds out;
  for (const auto& g : p.gammas) {
    auto it = std::find(keys.begin(), keys.end(), g);
    out.index.push_back(static_cast<int>(it - keys.begin()));
    if (it == keys.end()) keys.push_back(g);
  }
  const int nx = p.nx;
  const Eigen::Index C = p.embed.rows();
  out.left.resize(C, static_cast<Eigen::Index>(keys.size()));
  out.right.resize(C, static_cast<Eigen::Index>(keys.size()));
  Matrix e0 = Matrix::Zero(1, nx), eL = Matrix::Zero(1, nx);
  e0(0, 0) = 1.0;
  eL(0, nx - 1) = 1.0;
  for (std::size_t k = 0; k < keys.size(); ++k) {
    out.left.col(static_cast<Eigen::Index>(k)) = compno_embed_batch(model, e0, {keys[k]}).col(0);
    out.right.col(static_cast<Eigen::Index>(k)) = compno_embed_batch(model, eL, {keys[k]}).col(nx - 1);
  }
  return out;
}

// Embeddings of the boundary-adjusted inputs for pairs idx, mirroring
// apply_dirichlet_correction_lenient with the current aggregator.
Matrix adjusted_embed(const CompNOModel& model, const Aggregator& agg, const EmbeddedPairs& p,
                      const ProbeEmbeds& pe, std::span<const int> idx) {
  const int nx = p.nx;
  const int L = nx - 1;
  const Matrix k_left = agg.forward(pe.left);
  const Matrix k_right = agg.forward(pe.right);
  const auto n = static_cast<Eigen::Index>(idx.size());
  Matrix ends(p.embed.rows(), 2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index src = static_cast<Eigen::Index>(idx[i]) * nx;
    ends.col(2 * i) = p.embed.col(src);
    ends.col(2 * i + 1) = p.embed.col(src + L);
  }
  const Matrix z = agg.forward(ends);
  Matrix states(n, nx);
  std::vector<ParamVector> gammas;
  for (Eigen::Index i = 0; i < n; ++i) {
    states.row(i) = p.inputs.row(idx[i]);
    gammas.push_back(p.gammas[idx[i]]);
    const int g = pe.index[idx[i]];
    const double k00 = k_left(0, g), kLL = k_right(0, g);
    if (std::abs(k00) >= kProbeFloor && std::abs(kLL) >= kProbeFloor) {
      states(i, 0) = 2.0 * states(i, 0) - z(0, 2 * i) / k00;
      states(i, L) = 2.0 * states(i, L) - z(0, 2 * i + 1) / kLL;
    }
  }
  if (!states.allFinite()) throw DivergenceError("bc correction: adjusted input is not finite");
  return embed_rows(model, states, gammas);
}

void pin_boundaries(Matrix& pred, const Matrix& targets, int nx) {
  for (Eigen::Index s = 0; s < pred.cols(); s += nx) {
    pred(0, s) = targets(0, s);
    pred(0, s + nx - 1) = targets(0, s + nx - 1);
  }
}

double corrected_mae(const CompNOModel& model, const Aggregator& agg, const EmbeddedPairs& p,
                     const ProbeEmbeds& pe) {
  std::vector<int> all(p.size());
  std::iota(all.begin(), all.end(), 0);
  Matrix pred = agg.forward(adjusted_embed(model, agg, p, pe, all));
  pin_boundaries(pred, p.targets, p.nx);
  return (pred - p.targets).cwiseAbs().sum() / static_cast<double>(p.targets.cols());
}

std::vector<std::vector<std::uint8_t>> block_images(const CompNOModel& model) {
  std::vector<std::vector<std::uint8_t>> images;
  for (const auto& b : model.blocks) images.push_back(encode_block(b.model, b.kind));
  return images;
}

}  // namespace

double one_step_mae(const CompNOModel& model, const Dataset& ds, bool bc) {
  const EmbeddedPairs pairs = embed_pairs(model, ds);
  if (pairs.size() == 0) throw DataError("one_step_mae: dataset has no step pairs");
  if (!bc) return embedded_mae(model.aggregator, pairs);
  return corrected_mae(model, model.aggregator, pairs, probe_embeds(model, pairs));
}

FinetuneResult finetune_aggregator(const CompNOModel& model, const Dataset& train, const Dataset& test,
                                   const FinetuneHyper& hyper) {
  model.validate();
  if (hyper.epochs < 0) throw ConfigError("finetune: epochs must be >= 0");
  if (hyper.batch < 1) throw ConfigError("finetune: batch must be >= 1");
  if (train.empty() || train.n_steps() < 1) throw DataError("finetune: training dataset is empty");
  if (train.kind != model.target) {
    throw DataError("finetune: dataset holds " + std::string(to_string(train.kind)) + ", assembly targets " +
                    std::string(to_string(model.target)));
  }
  if (!test.empty() && (test.kind != train.kind || test.grid != train.grid)) {
    throw DataError("finetune: test set differs from train set");
  }

  FinetuneResult result{model, {}};
  const auto before = block_images(model);
  const EmbeddedPairs pairs = embed_pairs(model, train);
  const EmbeddedPairs test_pairs = test.empty() ? EmbeddedPairs{} : embed_pairs(model, test);
  const bool bc = hyper.bc_in_loop;
  const ProbeEmbeds probes = bc ? probe_embeds(model, pairs) : ProbeEmbeds{};
  const ProbeEmbeds test_probes = bc && test_pairs.size() > 0 ? probe_embeds(model, test_pairs) : ProbeEmbeds{};

  Aggregator& agg = result.model.aggregator;
  Aggregator grad = Aggregator::zeros(agg.config);
  AdamState adam{hyper.adam, {}, {}, 0};
  Rng shuffle_rng(hyper.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<int> order(pairs.size());
  Aggregator::Tape tape;
  const int nx = pairs.nx;
  const Eigen::Index C = pairs.embed.rows();

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(std::span<int>(order));
    const double lr = lr_at(hyper.schedule, epoch);
    double loss_sum = 0.0;
    int n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch) {
      const std::size_t len = std::min<std::size_t>(hyper.batch, order.size() - start);
      const std::span<const int> idx(order.data() + start, len);
      Matrix x(C, static_cast<Eigen::Index>(len) * nx);
      Matrix y(1, static_cast<Eigen::Index>(len) * nx);
      for (std::size_t i = 0; i < len; ++i) {
        const Eigen::Index src = static_cast<Eigen::Index>(idx[i]) * nx;
        if (!bc) x.middleCols(static_cast<Eigen::Index>(i) * nx, nx) = pairs.embed.middleCols(src, nx);
        y.middleCols(static_cast<Eigen::Index>(i) * nx, nx) = pairs.targets.middleCols(src, nx);
      }
      if (bc) x = adjusted_embed(result.model, agg, pairs, probes, idx);
      Matrix pred = agg.forward(x, &tape);
      // Pinned nodes match the target exactly, so they contribute neither loss nor gradient.
      if (bc) pin_boundaries(pred, y, nx);
      const LossResult loss = mae_loss(pred, y);
      if (!std::isfinite(loss.value)) {
        throw DivergenceError("finetune: loss became non-finite at epoch " + std::to_string(epoch));
      }
      for (auto& l : grad.layers) {
        l.W.setZero();
        l.b.setZero();
      }
      agg.backward(tape, loss.grad, grad);
      const auto views = agg.param_views(grad);
      adam_step(views, adam, lr);
      loss_sum += loss.value;
      ++n_batches;
    }
    result.history.train.push_back(loss_sum / n_batches);
    if (test_pairs.size() > 0) {
      result.history.test.push_back(bc ? corrected_mae(result.model, agg, test_pairs, test_probes)
                                       : embedded_mae(agg, test_pairs));
    }
  }

  if (block_images(result.model) != before) {
    throw FreezeViolationError("finetune: foundation block weights changed during aggregator training");
  }
  return result;
}

Field1D residual_linear(const Field1D& u, const Field1D& v, double a1, double a2, double beta, double nu) {
  if (u.grid() != v.grid()) throw ConfigError("residual: u and v live on different grids");
  const Field1D lap_v = spectral_derivative(v, 2);
  const Field1D grad_u = spectral_derivative(u, 1);
  std::vector<double> r(u.size());
  for (int j = 0; j < u.size(); ++j) r[j] = a2 * beta * lap_v[j] - a1 * nu * grad_u[j];
  return Field1D(u.grid(), std::move(r));
}

Field1D residual_nonlinear(const Field1D& u, const Field1D& v, double a1, double a2, double nu) {
  if (u.grid() != v.grid()) throw ConfigError("residual: u and v live on different grids");
  const Field1D ux = spectral_derivative(u, 1);
  const Field1D vx = spectral_derivative(v, 1);
  const Field1D uxx = spectral_derivative(u, 2);
  std::vector<double> r(u.size());
  for (int j = 0; j < u.size(); ++j) {
    r[j] = a1 * a1 * u[j] * ux[j] + a2 * a2 * v[j] * vx[j] + a1 * a2 * (v[j] * ux[j] + u[j] * vx[j]) -
           a1 * nu * uxx[j];
  }
  return Field1D(u.grid(), std::move(r));
}

std::pair<double, double> fit_alphas(const Field1D& pred, const Field1D& u, const Field1D& v) {
  if (pred.grid() != u.grid() || u.grid() != v.grid()) throw ConfigError("fit_alphas: grids differ");
  Eigen::MatrixX2d A(u.size(), 2);
  Eigen::VectorXd b(u.size());
  for (int j = 0; j < u.size(); ++j) {
    A(j, 0) = u[j];
    A(j, 1) = v[j];
    b[j] = pred[j];
  }
  const Eigen::Vector2d a = A.completeOrthogonalDecomposition().solve(b);
  return {a[0], a[1]};
}

std::vector<std::uint8_t> encode_assembly(const CompNOModel& model) {
  model.validate();
  BinaryWriter w;
  w.magic("CNOASSMB");
  w.u32(kAssemblyVersion);
  w.u8(static_cast<std::uint8_t>(model.target));
  w.u32(static_cast<std::uint32_t>(model.blocks.size()));
  for (const auto& b : model.blocks) {
    w.string(b.name);
    w.u8(static_cast<std::uint8_t>(b.kind));
    w.u8(static_cast<std::uint8_t>(b.route));
    w.u32(b.crc);
  }
  const auto& agg = model.aggregator;
  w.u8(static_cast<std::uint8_t>(agg.config.kind));
  w.u32(static_cast<std::uint32_t>(agg.config.widths.size()));
  for (int width : agg.config.widths) w.u32(static_cast<std::uint32_t>(width));
  for (const auto& layer : agg.layers) {
    write_tensor(w, layer.W);
    write_tensor(w, layer.b);
  }
  w.seal();
  return w.bytes();
}

CompNOModel decode_assembly(std::vector<std::uint8_t> bytes, const FoundationLibrary& library) {
  BinaryReader r(std::move(bytes), "assembly checkpoint");
  r.expect_magic("CNOASSMB");
  const auto version = r.u32();
  if (version != kAssemblyVersion) {
    throw FormatVersionError("assembly checkpoint: unsupported version " + std::to_string(version));
  }
  CompNOModel m;
  m.target = equation_from_tag(r.u8());
  const auto n_blocks = r.u32();
  if (n_blocks == 0 || n_blocks > 16) throw DataError("assembly checkpoint: implausible block count");
  struct Ref {
    std::string name;
    EquationKind kind;
    ParamRoute route;
    std::uint32_t crc;
  };
  std::vector<Ref> refs;
  for (std::uint32_t i = 0; i < n_blocks; ++i) {
    Ref ref;
    ref.name = r.string();
    ref.kind = equation_from_tag(r.u8());
    ref.route = route_from_tag(r.u8());
    ref.crc = r.u32();
    refs.push_back(std::move(ref));
  }
  const auto kind_tag = r.u8();
  if (kind_tag > 1) throw DataError("assembly checkpoint: unknown aggregator kind");
  AggregatorConfig config;
  config.kind = static_cast<AggregatorKind>(kind_tag);
  const auto n_widths = r.u32();
  if (n_widths > 8) throw DataError("assembly checkpoint: implausible aggregator depth");
  for (std::uint32_t i = 0; i < n_widths; ++i) {
    const auto width = r.u32();
    if (width == 0 || width > (1u << 16)) throw DataError("assembly checkpoint: implausible aggregator width");
    config.widths.push_back(static_cast<int>(width));
  }
  try {
    m.aggregator = Aggregator::zeros(config);
  } catch (const ConfigError& e) {
    throw DataError(std::string("assembly checkpoint: ") + e.what());
  }
  for (auto& layer : m.aggregator.layers) {
    read_tensor(r, layer.W);
    read_tensor(r, layer.b);
  }
  r.expect_end();
  r.verify_crc();

  for (const auto& ref : refs) {
    const auto& entry = library.entry(ref.name);
    if (entry.crc != ref.crc) {
      throw ChecksumError("assembly: block '" + ref.name + "' in the library no longer matches the assembly");
    }
    m.blocks.push_back({ref.name, ref.kind, ref.route, library.load_block(ref.name, ref.kind), ref.crc});
  }
  try {
    m.validate();
  } catch (const ConfigError& e) {
    throw MetadataMismatchError(std::string("assembly checkpoint: ") + e.what());
  }
  return m;
}

}  // namespace cno
