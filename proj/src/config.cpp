#include "cno/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <string>

#include "cno/binary_io.hpp"
#include "cno/error.hpp"

namespace cno {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

ConfigMap parse_config_text(std::string_view text) {
  ConfigMap out;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (!out.emplace(key, value).second) {
      throw ConfigError("config line " + std::to_string(line_no) + ": key '" + key + "' repeated");
    }
  }
  return out;
}

ConfigMap read_config_file(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return parse_config_text(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

Profile profile_from_string(std::string_view name) {
  if (name == "paper") return Profile::Paper;
  if (name == "desk") return Profile::Desk;
  throw ConfigError("unknown profile '" + std::string(name) + "' (expected paper or desk)");
}

std::string_view to_string(Profile profile) { return profile == Profile::Paper ? "paper" : "desk"; }

ConfigMap profile_defaults(Profile profile, EquationKind eq) {
  const bool desk = profile == Profile::Desk;
  ConfigMap m;
  m["equation"] = std::string(to_string(eq));
  m["seed"] = "0";
  m["out"] = "out";
  m["bc"] = "false";

  m["grid.nx"] = desk ? "128" : "1024";
  m["grid.eval_nx"] = desk ? "256" : "2048";
  m["data.n_steps"] = "10";
  m["data.dt"] = "0.01";
  m["data.cfl_safety"] = "0.4";
  m["data.train_ratio"] = "0.8";
  m["data.ic.n_waves"] = "2";
  m["data.ic.n_max"] = "8";
  m["data.path"] = "";

  // Parameter grids and per-point counts. The full-scale ("paper") profile keeps 10000 trajectories per
  // elementary equation (8000 train / 2000 test).
  std::string betas;
  std::string nus;
  std::string n_per;
  switch (eq) {
    case EquationKind::Convection:
      betas = "0.1, 0.4, 0.7, 1, 2";
      n_per = desk ? "40" : "2000";
      break;
    case EquationKind::Diffusion:
      nus = "0.01, 0.1, 0.2, 0.5, 1, 2";
      n_per = desk ? "34" : "1667";
      break;
    case EquationKind::NonlinearConvection:
      n_per = desk ? "200" : "10000";
      break;
    case EquationKind::Burgers:
      nus = "0.01, 0.1, 0.2, 0.5, 1";
      n_per = desk ? "20" : "100";
      break;
    case EquationKind::ConvectionDiffusion:
      betas = desk ? "0.1, 0.4, 1, 2" : "0.1, 0.4, 0.7, 1, 2";
      nus = desk ? "0.01, 0.1, 0.5, 1, 2" : "0.01, 0.1, 0.2, 0.5, 1, 2";
      n_per = desk ? "5" : "20";
      break;
  }
  m["data.betas"] = betas;
  m["data.nus"] = nus;
  m["data.n_per_param"] = n_per;

  m["model.d_h"] = desk ? "32" : "128";
  m["model.n_layers"] = "4";
  m["model.modes"] = "16";

  m["train.epochs"] = desk ? "300" : "1000";
  m["train.batch"] = "50";
  m["train.lr"] = "0.001";
  m["train.lr_step"] = "100";
  m["train.lr_gamma"] = "0.5";
  m["train.weight_decay"] = "0.0001";
  std::string train_threshold = "inf";
  if (eq == EquationKind::Convection) train_threshold = desk ? "0.005" : "9.8e-5";
  if (eq == EquationKind::Diffusion) train_threshold = desk ? "0.005" : "5.8e-4";
  if (eq == EquationKind::NonlinearConvection) train_threshold = desk ? "0.008" : "8e-4";
  m["train.threshold"] = train_threshold;

  m["assemble.aggregator"] = eq == EquationKind::Burgers ? "mlp" : "linear";
  m["assemble.hidden"] = desk ? "128" : "512";
  m["assemble.epochs"] = "100";
  m["assemble.batch"] = "4";
  m["assemble.lr"] = "0.0001";
  m["assemble.lr_step"] = "100";
  m["assemble.lr_gamma"] = "0.5";
  m["assemble.weight_decay"] = "0.0001";
  std::string assemble_threshold = "inf";
  if (eq == EquationKind::ConvectionDiffusion) assemble_threshold = desk ? "0.05" : "0.008";
  if (eq == EquationKind::Burgers) assemble_threshold = desk ? "0.08" : "0.01";
  m["assemble.threshold"] = assemble_threshold;

  m["library"] = "library";
  m["blocks.convection"] = "convection";
  m["blocks.diffusion"] = "diffusion";
  m["blocks.nonlinear_convection"] = "nonlinear_convection";

  m["eval.n_per_param"] = desk ? "2" : "4";
  m["eval.seed_offset"] = "1000000";

  m["sweep.axis"] = eq == EquationKind::Burgers ? "reynolds" : "peclet";
  m["sweep.betas"] = eq == EquationKind::Burgers ? "" : "0.1, 0.4, 1, 2";
  m["sweep.nus"] = "0.01, 0.1, 0.5, 1, 2";
  m["sweep.n_ics"] = "5";
  m["sweep.edges"] = "0.5, 2, 10, 50, 100, 200";
  return m;
}

namespace {

class Reader {
 public:
  explicit Reader(ConfigMap values) : values_(std::move(values)) {}

  const std::string& raw(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: missing key '" + key + "'");
    used_.push_back(key);
    return it->second;
  }

  std::string str(const std::string& key) { return raw(key); }

  double real(const std::string& key) { return parse_real(key, raw(key)); }

  int integer(const std::string& key, int lo = std::numeric_limits<int>::min()) {
    const std::string& s = raw(key);
    int v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) bad(key, s, "an integer");
    if (v < lo) bad(key, s, "an integer >= " + std::to_string(lo));
    return v;
  }

  std::uint64_t u64(const std::string& key) {
    const std::string& s = raw(key);
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) bad(key, s, "a non-negative integer");
    return v;
  }

  bool boolean(const std::string& key) {
    const std::string& s = raw(key);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    bad(key, s, "true or false");
  }

  std::vector<double> reals(const std::string& key) {
    const std::string& s = raw(key);
    std::vector<double> out;
    std::string_view rest = s;
    while (!trim(rest).empty()) {
      const auto comma = rest.find(',');
      out.push_back(parse_real(key, std::string(trim(rest.substr(0, comma)))));
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
      if (trim(rest).empty()) bad(key, s, "a comma-separated list");
    }
    return out;
  }

  void reject_unused() const {
    for (const auto& [k, _] : values_) {
      if (std::find(used_.begin(), used_.end(), k) == used_.end()) throw ConfigError("config: unknown key '" + k + "'");
    }
  }

  const ConfigMap& values() const { return values_; }

 private:
  [[noreturn]] static void bad(const std::string& key, const std::string& value, const std::string& what) {
    throw ConfigError("config: '" + key + "' = '" + value + "' is not " + what);
  }

  static double parse_real(const std::string& key, const std::string& s) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) bad(key, s, "a finite number");
    return v;
  }

  ConfigMap values_;
  std::vector<std::string> used_;
};

AdamConfig adam_with(double weight_decay) {
  AdamConfig a;
  a.weight_decay = weight_decay;
  return a;
}

}  // namespace

std::vector<Bucket> buckets_from_edges(const std::vector<double>& edges) {
  if (edges.empty()) throw ConfigError("sweep: no bucket edges");
  std::vector<Bucket> out;
  double lo = 0.0;
  for (double e : edges) {
    if (!(e > lo)) throw ConfigError("sweep: bucket edges must be positive and ascending");
    out.push_back({lo, e});
    lo = e;
  }
  out.push_back({lo, std::numeric_limits<double>::infinity()});
  return out;
}

RunConfig resolve_config(Profile profile, const ConfigMap& overrides) {
  EquationKind eq = EquationKind::Convection;
  if (auto it = overrides.find("equation"); it != overrides.end()) eq = equation_from_string(it->second);
  ConfigMap merged = profile_defaults(profile, eq);
  for (const auto& [k, v] : overrides) {
    if (!merged.count(k)) throw ConfigError("config: unknown key '" + k + "'");
    merged[k] = v;
  }

  Reader r(merged);
  RunConfig c;
  c.profile = profile;
  c.equation = equation_from_string(r.str("equation"));
  c.seed = r.u64("seed");
  c.out = r.str("out");
  c.bc = r.boolean("bc");

  c.nx = r.integer("grid.nx", 8);
  c.eval_nx = r.integer("grid.eval_nx", 8);
  make_grid(c.nx);
  make_grid(c.eval_nx);
  c.n_steps = r.integer("data.n_steps", 1);
  c.dt = r.real("data.dt");
  if (!(c.dt > 0.0)) throw ConfigError("config: data.dt must be positive");
  c.cfl_safety = r.real("data.cfl_safety");
  if (!(c.cfl_safety > 0.0 && c.cfl_safety <= 1.0)) throw ConfigError("config: data.cfl_safety must be in (0, 1]");
  c.n_per_param = r.integer("data.n_per_param", 0);
  c.betas = r.reals("data.betas");
  c.nus = r.reals("data.nus");
  c.train_ratio = r.real("data.train_ratio");
  if (!(c.train_ratio > 0.0 && c.train_ratio <= 1.0)) throw ConfigError("config: data.train_ratio must be in (0, 1]");
  c.ic.n_waves = r.integer("data.ic.n_waves", 1);
  c.ic.n_max = r.integer("data.ic.n_max", 1);
  c.ic.seed = c.seed;
  c.data_path = r.str("data.path");

  c.model.d_h = r.integer("model.d_h", 1);
  c.model.n_layers = r.integer("model.n_layers", 1);
  c.model.modes = r.integer("model.modes", 1);
  c.model.n_params = (needs_beta(eq) ? 1 : 0) + (needs_nu(eq) ? 1 : 0);

  c.train.epochs = r.integer("train.epochs", 0);
  c.train.batch = r.integer("train.batch", 1);
  c.train.schedule = {r.real("train.lr"), r.integer("train.lr_step", 1), r.real("train.lr_gamma")};
  c.train.adam = adam_with(r.real("train.weight_decay"));
  c.train.seed = c.seed;
  c.train_threshold = r.real("train.threshold");

  const std::string agg = r.str("assemble.aggregator");
  if (agg == "linear") {
    c.aggregator = AggregatorKind::Linear;
  } else if (agg == "mlp") {
    c.aggregator = AggregatorKind::MLP;
  } else {
    throw ConfigError("config: assemble.aggregator must be linear or mlp");
  }
  c.aggregator_hidden = r.integer("assemble.hidden", 1);
  c.assemble.epochs = r.integer("assemble.epochs", 0);
  c.assemble.batch = r.integer("assemble.batch", 1);
  c.assemble.schedule = {r.real("assemble.lr"), r.integer("assemble.lr_step", 1), r.real("assemble.lr_gamma")};
  c.assemble.adam = adam_with(r.real("assemble.weight_decay"));
  c.assemble.seed = c.seed;
  c.assemble_threshold = r.real("assemble.threshold");

  c.library = r.str("library");
  c.block_convection = r.str("blocks.convection");
  c.block_diffusion = r.str("blocks.diffusion");
  c.block_nonlinear = r.str("blocks.nonlinear_convection");

  c.eval_n_per_param = r.integer("eval.n_per_param", 1);
  c.eval_seed_offset = r.u64("eval.seed_offset");

  const std::string axis = r.str("sweep.axis");
  if (axis == "peclet") {
    c.sweep_axis = SweepAxis::Peclet;
  } else if (axis == "reynolds") {
    c.sweep_axis = SweepAxis::Reynolds;
  } else {
    throw ConfigError("config: sweep.axis must be peclet or reynolds");
  }
  c.sweep_betas = r.reals("sweep.betas");
  c.sweep_nus = r.reals("sweep.nus");
  c.sweep_n_ics = r.integer("sweep.n_ics", 1);
  c.sweep_edges = r.reals("sweep.edges");
  r.reject_unused();

  for (double nu : c.nus) {
    if (!(nu > 0.0)) throw ConfigError("config: data.nus must be positive");
  }
  if (needs_beta(eq) && c.betas.empty()) throw ConfigError("config: data.betas is empty");
  if (needs_nu(eq) && c.nus.empty()) throw ConfigError("config: data.nus is empty");
  c.resolved = r.values();
  return c;
}

namespace {

std::vector<ParamVector> grid_of(EquationKind eq, const std::vector<double>& betas, const std::vector<double>& nus) {
  std::vector<std::optional<double>> bs{std::nullopt};
  std::vector<std::optional<double>> ns{std::nullopt};
  if (needs_beta(eq)) bs.assign(betas.begin(), betas.end());
  if (needs_nu(eq)) ns.assign(nus.begin(), nus.end());
  std::vector<ParamVector> out;
  for (const auto& b : bs) {
    for (const auto& n : ns) out.push_back(ParamVector{b, n});
  }
  return out;
}

}  // namespace

std::vector<ParamVector> RunConfig::param_grid() const { return grid_of(equation, betas, nus); }

SolverConfig RunConfig::solver() const { return SolverConfig{dt, cfl_safety, n_steps}; }

SweepSpec RunConfig::sweep_spec() const {
  SweepSpec s;
  s.axis = sweep_axis;
  s.kind = equation;
  s.points = grid_of(equation, sweep_betas, sweep_nus);
  s.buckets = buckets_from_edges(sweep_edges);
  s.n_ics = sweep_n_ics;
  s.nx = nx;
  s.n_steps = n_steps;
  s.ic = ic;
  s.solver = solver();
  s.seed = seed + eval_seed_offset;
  return s;
}

std::vector<std::string> RunConfig::block_names() const {
  switch (equation) {
    case EquationKind::ConvectionDiffusion: return {block_convection, block_diffusion};
    case EquationKind::Burgers: return {block_nonlinear, block_diffusion};
    default: throw ConfigError("config: " + std::string(to_string(equation)) + " is not an assembly target");
  }
}

}  // namespace cno
