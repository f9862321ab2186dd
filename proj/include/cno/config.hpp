#pragma once

// Run configuration: flat `key = value` text with `#` comments and dotted keys, layered
// over a built-in profile (paper or desk).

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cno/compno.hpp"
#include "cno/dataset.hpp"
#include "cno/eval.hpp"
#include "cno/pfno.hpp"

namespace cno {

using ConfigMap = std::map<std::string, std::string>;

/// Parses `key = value` lines. Blank lines and text after `#` are ignored. Throws ConfigError
/// (with the line number) on a line without `=`, an empty key, or a repeated key.
ConfigMap parse_config_text(std::string_view text);
ConfigMap read_config_file(const std::filesystem::path& path);

enum class Profile { Paper, Desk };
Profile profile_from_string(std::string_view name);
std::string_view to_string(Profile profile);

/// Every key with its default for the profile and equation.
ConfigMap profile_defaults(Profile profile, EquationKind equation);

struct RunConfig {
  Profile profile = Profile::Paper;
  EquationKind equation = EquationKind::Convection;
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  bool bc = false;

  int nx = 1024;
  int eval_nx = 2048;
  int n_steps = 10;
  double dt = 0.01;
  double cfl_safety = 0.4;
  int n_per_param = 0;
  std::vector<double> betas;
  std::vector<double> nus;
  double train_ratio = 0.8;
  ICSpec ic{};
  std::string data_path;  // load instead of generating when set

  PFNOConfig model{};
  TrainHyper train{};
  double train_threshold = 0.0;

  AggregatorKind aggregator = AggregatorKind::Linear;
  int aggregator_hidden = 512;
  FinetuneHyper assemble{};
  double assemble_threshold = 0.0;

  std::string library = "library";
  std::string block_convection = "convection";
  std::string block_diffusion = "diffusion";
  std::string block_nonlinear = "nonlinear_convection";

  int eval_n_per_param = 4;
  std::uint64_t eval_seed_offset = 1000000;

  SweepAxis sweep_axis = SweepAxis::Peclet;
  std::vector<double> sweep_betas;
  std::vector<double> sweep_nus;
  int sweep_n_ics = 5;
  std::vector<double> sweep_edges;

  /// Resolved key/value pairs, echoed into manifests.
  ConfigMap resolved;

  /// beta x nu grid (in that nesting order) restricted to the fields the equation uses.
  std::vector<ParamVector> param_grid() const;
  SolverConfig solver() const;
  SweepSpec sweep_spec() const;
  /// Assembly block names in routing order.
  std::vector<std::string> block_names() const;
};

/// Layers overrides (config file, then command-line values) over the profile defaults.
/// `equation` may come from overrides. Throws ConfigError on unknown keys or bad values.
RunConfig resolve_config(Profile profile, const ConfigMap& overrides);

/// Buckets from ascending edges: [0, e0], [e0, e1], ..., [e_last, inf].
std::vector<Bucket> buckets_from_edges(const std::vector<double>& edges);

}  // namespace cno
