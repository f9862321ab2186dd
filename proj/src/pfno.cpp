#include "cno/pfno.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cno/binary_io.hpp"
#include "cno/error.hpp"
#include "cno/rng.hpp"
#include "tensor_io.hpp"

namespace cno {

void PFNOConfig::validate() const {
  if (d_h < 1) throw ConfigError("pfno: d_h must be >= 1");
  if (n_layers < 1) throw ConfigError("pfno: n_layers must be >= 1");
  if (modes < 1) throw ConfigError("pfno: modes must be >= 1");
  if (n_params < 0) throw ConfigError("pfno: n_params must be >= 0");
}

PFNOModel PFNOModel::zeros(const PFNOConfig& config) {
  config.validate();
  PFNOModel m;
  m.config = config;
  m.lift = AffineWeights::zeros(config.d_h, 1 + config.n_params);
  for (int l = 0; l < config.n_layers; ++l) {
    m.layers.push_back({SpectralWeights::zeros(config.modes, config.d_h, config.d_h),
                        AffineWeights::zeros(config.d_h, config.d_h)});
  }
  m.project = AffineWeights::zeros(1, config.d_h);
  return m;
}

PFNOModel PFNOModel::random(const PFNOConfig& config, std::uint64_t seed) {
  PFNOModel m = zeros(config);
  Rng rng(seed);
  init_affine(m.lift, rng);
  for (auto& layer : m.layers) {
    init_spectral(layer.spectral, rng);
    init_affine(layer.pointwise, rng);
  }
  init_affine(m.project, rng);
  return m;
}

namespace {

void check_affine(const AffineWeights& w, int d_out, int d_in, const char* what) {
  if (w.W.rows() != d_out || w.W.cols() != d_in || w.b.size() != d_out) {
    throw ConfigError(std::string("pfno: ") + what + " has shape " + std::to_string(w.W.rows()) + "x" +
                      std::to_string(w.W.cols()) + ", expected " + std::to_string(d_out) + "x" +
                      std::to_string(d_in));
  }
}

std::span<double> span_of(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> span_of(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
std::span<const double> cspan_of(const Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<const double> cspan_of(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace

void PFNOModel::validate() const {
  config.validate();
  const int d = config.d_h;
  check_affine(lift, d, 1 + config.n_params, "lift");
  if (static_cast<int>(layers.size()) != config.n_layers) throw ConfigError("pfno: layer count mismatch");
  for (const auto& layer : layers) {
    const auto& s = layer.spectral;
    if (s.modes != config.modes || s.d_out != d || s.d_in != d || s.re.rows() != s.modes * d ||
        s.re.cols() != d || s.im.rows() != s.re.rows() || s.im.cols() != d) {
      throw ConfigError("pfno: spectral weights do not match config");
    }
    check_affine(layer.pointwise, d, d, "layer affine");
  }
  check_affine(project, 1, d, "project");
}

std::vector<ParamView> PFNOModel::param_views(const PFNOModel& grad) {
  std::vector<ParamView> views;
  auto add = [&views](auto& value, const auto& g) {
    if (value.size() != g.size()) throw ConfigError("pfno: gradient shape mismatch");
    views.push_back({span_of(value), cspan_of(g)});
  };
  if (grad.layers.size() != layers.size()) throw ConfigError("pfno: gradient layer count mismatch");
  add(lift.W, grad.lift.W);
  add(lift.b, grad.lift.b);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    add(layers[l].spectral.re, grad.layers[l].spectral.re);
    add(layers[l].spectral.im, grad.layers[l].spectral.im);
    add(layers[l].pointwise.W, grad.layers[l].pointwise.W);
    add(layers[l].pointwise.b, grad.layers[l].pointwise.b);
  }
  add(project.W, grad.project.W);
  add(project.b, grad.project.b);
  return views;
}

std::size_t PFNOModel::parameter_count() const {
  std::size_t n = lift.W.size() + lift.b.size() + project.W.size() + project.b.size();
  for (const auto& l : layers) {
    n += l.spectral.re.size() + l.spectral.im.size() + l.pointwise.W.size() + l.pointwise.b.size();
  }
  return n;
}

Matrix pfno_input(const Matrix& states, const Matrix& params) {
  if (params.rows() != states.rows()) throw ConfigError("pfno: batch size of states and params differ");
  const Eigen::Index batch = states.rows();
  const Eigen::Index nx = states.cols();
  const Eigen::Index p = params.cols();
  Matrix input(1 + p, batch * nx);
  // Row-major [batch, nx] is already the concatenation of the batch's samples.
  input.row(0) = Eigen::Map<const Eigen::RowVectorXd>(states.data(), batch * nx);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index b = 0; b < batch; ++b) input.row(1 + i).segment(b * nx, nx).setConstant(params(b, i));
  }
  return input;
}

Matrix pfno_embed_batch(const PFNOModel& model, const Matrix& input, int nx, PFNOTape* tape) {
  if (input.rows() != 1 + model.config.n_params) {
    throw ConfigError("pfno: expected " + std::to_string(1 + model.config.n_params) + " input channels, got " +
                      std::to_string(input.rows()));
  }
  if (model.config.modes > nx / 2 + 1) {
    throw ConfigError("pfno: grid with nx=" + std::to_string(nx) + " is too small for " +
                      std::to_string(model.config.modes) + " modes");
  }
  Matrix h = affine_forward(input, model.lift);
  if (tape) {
    tape->input = input;
    tape->layer_in.clear();
    tape->layer_pre.clear();
    tape->spectral.assign(model.layers.size(), {});
  }
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    Matrix z = spectral_conv_forward(h, nx, layer.spectral, tape ? &tape->spectral[l] : nullptr);
    z.noalias() += layer.pointwise.W * h;
    z.colwise() += layer.pointwise.b;
    Matrix next = gelu(z);
    if (tape) {
      tape->layer_in.push_back(std::move(h));
      tape->layer_pre.push_back(std::move(z));
    }
    h = std::move(next);
  }
  if (tape) tape->embed = h;
  return h;
}

Matrix pfno_forward_batch(const PFNOModel& model, const Matrix& input, int nx, PFNOTape* tape) {
  return affine_forward(pfno_embed_batch(model, input, nx, tape), model.project);
}

Matrix pfno_embed_backward(const PFNOModel& model, const PFNOTape& tape, int nx, const Matrix& grad_embed,
                           PFNOModel& grad) {
  Matrix g = grad_embed;
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const auto& layer = model.layers[l];
    const Matrix gz = gelu_backward(tape.layer_pre[l], g);
    g = spectral_conv_backward(gz, nx, layer.spectral, tape.spectral[l], grad.layers[l].spectral);
    g += affine_backward(tape.layer_in[l], layer.pointwise, gz, grad.layers[l].pointwise);
  }
  return affine_backward(tape.input, model.lift, g, grad.lift);
}

Matrix pfno_forward_backward(const PFNOModel& model, const PFNOTape& tape, int nx, const Matrix& grad_out,
                             PFNOModel& grad) {
  const Matrix g = affine_backward(tape.embed, model.project, grad_out, grad.project);
  return pfno_embed_backward(model, tape, nx, g, grad);
}

namespace {

Matrix single_input(const PFNOModel& model, const Field1D& u, const ParamVector& gamma) {
  if (gamma.dimension() != model.config.n_params) {
    throw ConfigError("pfno: block expects " + std::to_string(model.config.n_params) + " parameters, got " +
                      std::to_string(gamma.dimension()));
  }
  const auto vals = gamma.values();
  Matrix states = Eigen::Map<const Matrix>(u.values().data(), 1, u.size());
  Matrix params(1, static_cast<Eigen::Index>(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i) params(0, static_cast<Eigen::Index>(i)) = vals[i];
  return pfno_input(states, params);
}

}  // namespace

Field1D pfno_forward(const PFNOModel& model, const Field1D& u, const ParamVector& gamma) {
  const Matrix y = pfno_forward_batch(model, single_input(model, u, gamma), u.size());
  return Field1D(u.grid(), std::vector<double>(y.data(), y.data() + y.size()));
}

ChannelField pfno_embed(const PFNOModel& model, const Field1D& u, const ParamVector& gamma) {
  return ChannelField{pfno_embed_batch(model, single_input(model, u, gamma), u.size()), u.grid()};
}

Trajectory rollout(const PFNOModel& model, const Field1D& u0, const ParamVector& gamma, int n_steps, double dt) {
  if (n_steps < 0) throw ConfigError("rollout: n_steps must be >= 0");
  Trajectory traj;
  traj.dt = dt;
  traj.params = gamma;
  traj.snapshots.reserve(n_steps + 1);
  traj.snapshots.push_back(u0);
  for (int t = 0; t < n_steps; ++t) traj.snapshots.push_back(pfno_forward(model, traj.snapshots.back(), gamma));
  return traj;
}

StepPairs harvest_pairs(const Dataset& ds) {
  StepPairs pairs;
  pairs.nx = ds.grid.nx;
  const int steps = ds.n_steps();
  const Eigen::Index n = static_cast<Eigen::Index>(ds.trajectories.size()) * steps;
  const int p = ds.n_params();
  pairs.inputs.resize(n, ds.grid.nx);
  pairs.targets.resize(n, ds.grid.nx);
  pairs.params.resize(n, p);
  Eigen::Index row = 0;
  for (const auto& traj : ds.trajectories) {
    const auto vals = traj.params.values();
    if (static_cast<int>(vals.size()) != p) throw DataError("dataset trajectory has the wrong parameter count");
    for (int t = 0; t < steps; ++t, ++row) {
      const auto& a = traj.snapshots[t].vector();
      const auto& b = traj.snapshots[t + 1].vector();
      std::copy(a.begin(), a.end(), pairs.inputs.row(row).data());
      std::copy(b.begin(), b.end(), pairs.targets.row(row).data());
      for (int i = 0; i < p; ++i) pairs.params(row, i) = vals[i];
    }
  }
  return pairs;
}

namespace {

Matrix gather_rows(const Matrix& m, std::span<const int> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

Matrix flatten(const Matrix& rows) {
  return Eigen::Map<const Matrix>(rows.data(), 1, rows.size());
}

double pairs_mse(const PFNOModel& model, const StepPairs& pairs) {
  constexpr int kChunk = 64;
  double sum = 0.0;
  for (int start = 0; start < pairs.size(); start += kChunk) {
    const int len = std::min(kChunk, pairs.size() - start);
    const Matrix input = pfno_input(pairs.inputs.middleRows(start, len), pairs.params.middleRows(start, len));
    const Matrix pred = pfno_forward_batch(model, input, pairs.nx);
    sum += (pred - flatten(pairs.targets.middleRows(start, len))).squaredNorm();
  }
  return sum / (static_cast<double>(pairs.size()) * pairs.nx);
}

}  // namespace

double one_step_mse(const PFNOModel& model, const Dataset& ds) {
  const StepPairs pairs = harvest_pairs(ds);
  if (pairs.size() == 0) throw DataError("one_step_mse: dataset has no step pairs");
  return pairs_mse(model, pairs);
}

PretrainResult pretrain_block(const Dataset& train, const Dataset& test, const PFNOConfig& config,
                              const TrainHyper& hyper) {
  config.validate();
  if (hyper.epochs < 0) throw ConfigError("pretrain: epochs must be >= 0");
  if (hyper.batch < 1) throw ConfigError("pretrain: batch must be >= 1");
  if (train.empty() || train.n_steps() < 1) throw DataError("pretrain: training dataset is empty");
  if (train.n_params() != config.n_params) {
    throw ConfigError("pretrain: dataset carries " + std::to_string(train.n_params()) +
                      " parameters but the block expects " + std::to_string(config.n_params));
  }
  const StepPairs pairs = harvest_pairs(train);
  StepPairs test_pairs;
  if (!test.empty()) {
    if (test.grid != train.grid || test.kind != train.kind) throw DataError("pretrain: test set differs from train set");
    test_pairs = harvest_pairs(test);
  }

  PretrainResult result{PFNOModel::random(config, hyper.seed), {}};
  PFNOModel& model = result.model;
  PFNOModel grad = PFNOModel::zeros(config);
  AdamState adam{hyper.adam, {}, {}, 0};
  Rng shuffle_rng(hyper.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<int> order(pairs.size());
  PFNOTape tape;
  const int nx = pairs.nx;

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(std::span<int>(order));
    const double lr = lr_at(hyper.schedule, epoch);
    double loss_sum = 0.0;
    int n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch) {
      const std::size_t len = std::min<std::size_t>(hyper.batch, order.size() - start);
      const std::span<const int> idx(order.data() + start, len);
      const Matrix input = pfno_input(gather_rows(pairs.inputs, idx), gather_rows(pairs.params, idx));
      const Matrix target = flatten(gather_rows(pairs.targets, idx));
      const Matrix pred = pfno_forward_batch(model, input, nx, &tape);
      const LossResult loss = mse_loss(pred, target);
      if (!std::isfinite(loss.value)) {
        throw DivergenceError("pretrain: loss became non-finite at epoch " + std::to_string(epoch));
      }
      grad = PFNOModel::zeros(config);
      pfno_forward_backward(model, tape, nx, loss.grad, grad);
      const auto views = model.param_views(grad);
      adam_step(views, adam, lr);
      loss_sum += loss.value;
      ++n_batches;
    }
    result.history.train.push_back(loss_sum / n_batches);
    if (test_pairs.size() > 0) {
      const double t = pairs_mse(model, test_pairs);
      if (!std::isfinite(t)) throw DivergenceError("pretrain: test loss became non-finite at epoch " + std::to_string(epoch));
      result.history.test.push_back(t);
    }
  }
  return result;
}

using detail::read_tensor;
using detail::write_tensor;

std::vector<std::uint8_t> encode_block(const PFNOModel& model, EquationKind kind) {
  model.validate();
  BinaryWriter w;
  w.magic("CNOBLOCK");
  w.u32(kBlockVersion);
  w.u8(static_cast<std::uint8_t>(kind));
  w.u32(static_cast<std::uint32_t>(model.config.d_h));
  w.u32(static_cast<std::uint32_t>(model.config.n_layers));
  w.u32(static_cast<std::uint32_t>(model.config.modes));
  w.u32(static_cast<std::uint32_t>(model.config.n_params));
  write_tensor(w, model.lift.W);
  write_tensor(w, model.lift.b);
  for (const auto& layer : model.layers) {
    write_tensor(w, layer.spectral.re);
    write_tensor(w, layer.spectral.im);
    write_tensor(w, layer.pointwise.W);
    write_tensor(w, layer.pointwise.b);
  }
  write_tensor(w, model.project.W);
  write_tensor(w, model.project.b);
  w.seal();
  return w.bytes();
}

BlockCheckpoint decode_block(std::vector<std::uint8_t> bytes) {
  BinaryReader r(std::move(bytes), "block checkpoint");
  r.expect_magic("CNOBLOCK");
  const auto version = r.u32();
  if (version != kBlockVersion) {
    throw FormatVersionError("block checkpoint: unsupported version " + std::to_string(version));
  }
  BlockCheckpoint cp;
  cp.kind = equation_from_tag(r.u8());
  PFNOConfig config;
  config.d_h = static_cast<int>(r.u32());
  config.n_layers = static_cast<int>(r.u32());
  config.modes = static_cast<int>(r.u32());
  config.n_params = static_cast<int>(r.u32());
  // Guard against absurd sizes before allocating.
  if (config.d_h > 4096 || config.n_layers > 64 || config.modes > 65536 || config.n_params > 8) {
    throw DataError("block checkpoint: implausible configuration");
  }
  try {
    cp.model = PFNOModel::zeros(config);
  } catch (const ConfigError& e) {
    throw DataError(std::string("block checkpoint: ") + e.what());
  }
  read_tensor(r, cp.model.lift.W);
  read_tensor(r, cp.model.lift.b);
  for (auto& layer : cp.model.layers) {
    read_tensor(r, layer.spectral.re);
    read_tensor(r, layer.spectral.im);
    read_tensor(r, layer.pointwise.W);
    read_tensor(r, layer.pointwise.b);
  }
  read_tensor(r, cp.model.project.W);
  read_tensor(r, cp.model.project.b);
  r.expect_end();
  r.verify_crc();
  return cp;
}

}  // namespace cno
