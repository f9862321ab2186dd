// Command-line front end: generate -> pretrain -> assemble -> evaluate -> sweep.

#include <malloc.h>

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "cno/bc_operator.hpp"
#include "cno/binary_io.hpp"
#include "cno/compno.hpp"
#include "cno/config.hpp"
#include "cno/dataset.hpp"
#include "cno/error.hpp"
#include "cno/eval.hpp"
#include "cno/library.hpp"
#include "cno/pfno.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cno;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kDivergence = 4, kThreshold = 5 };

struct Options {
  std::string config;
  std::string profile = "paper";
  std::optional<std::uint64_t> seed;
  bool bc = false;
  std::string out;
  bool overwrite = false;
};

RunConfig load_config(const Options& opt) {
  ConfigMap overrides = opt.config.empty() ? ConfigMap{} : read_config_file(opt.config);
  if (opt.seed) overrides["seed"] = std::to_string(*opt.seed);
  if (!opt.out.empty()) overrides["out"] = opt.out;
  if (opt.bc) overrides["bc"] = "true";
  return resolve_config(profile_from_string(opt.profile), overrides);
}

std::string eq_name(const RunConfig& cfg) { return std::string(to_string(cfg.equation)); }

fs::path library_dir(const RunConfig& cfg) {
  const fs::path p(cfg.library);
  return p.is_absolute() ? p : cfg.out / p;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::uint32_t file_crc(const fs::path& path) {
  const auto bytes = read_file(path);
  const auto ext = path.extension();
  if (ext == ".cnods" || ext == ".cnoasm" || ext == ".cnoblock") return sealed_crc(bytes);
  return crc32(bytes);
}

void write_manifest(const RunConfig& cfg, const std::string& command, const std::vector<fs::path>& outputs,
                    const json& extra = json::object()) {
  json files = json::object();
  for (const auto& p : outputs) files[fs::relative(p, cfg.out).generic_string()] = file_crc(p);
  json j{{"command", command},
         {"version", CNO_VERSION},
         {"profile", std::string(to_string(cfg.profile))},
         {"seed", cfg.seed},
         {"config", cfg.resolved},
         {"outputs_crc32", files}};
  if (!extra.empty()) j["result"] = extra;
  write_text(cfg.out / (eq_name(cfg) + "." + command + ".json"), j.dump(2) + "\n");
}

Dataset obtain_dataset(const RunConfig& cfg) {
  if (!cfg.data_path.empty()) {
    Dataset ds = load_dataset(cfg.data_path);
    if (ds.kind != cfg.equation) {
      throw DataError("dataset " + cfg.data_path + " holds " + std::string(to_string(ds.kind)) + ", expected " +
                      eq_name(cfg));
    }
    return ds;
  }
  ICSpec ic = cfg.ic;
  ic.seed = cfg.seed;
  return generate_dataset(cfg.equation, cfg.param_grid(), cfg.n_per_param, make_grid(cfg.nx), cfg.n_steps, ic,
                          cfg.solver());
}

bool is_block_kind(EquationKind k) {
  return k == EquationKind::Convection || k == EquationKind::Diffusion || k == EquationKind::NonlinearConvection;
}

std::string block_name(const RunConfig& cfg) {
  switch (cfg.equation) {
    case EquationKind::Convection: return cfg.block_convection;
    case EquationKind::Diffusion: return cfg.block_diffusion;
    case EquationKind::NonlinearConvection: return cfg.block_nonlinear;
    default: throw ConfigError(eq_name(cfg) + " is not a foundation-block equation");
  }
}

std::string loss_csv(const LossHistory& h, const std::string& metric) {
  std::string out = "epoch,train_" + metric + ",test_" + metric + "\n";
  for (std::size_t e = 0; e < h.train.size(); ++e) {
    out += std::to_string(e) + "," + format_g17(h.train[e]) + "," +
           (e < h.test.size() ? format_g17(h.test[e]) : std::string("nan")) + "\n";
  }
  return out;
}

int threshold_verdict(const std::string& what, double value, double threshold) {
  std::cout << what << " = " << format_g17(value) << " (threshold " << format_g17(threshold) << ")\n";
  if (value <= threshold) return kOk;
  std::cerr << "threshold not met: " << what << " " << format_g17(value) << " > " << format_g17(threshold) << "\n";
  return kThreshold;
}

int cmd_generate(const RunConfig& cfg) {
  const Dataset ds = obtain_dataset(cfg);
  const fs::path path = cfg.out / (eq_name(cfg) + ".cnods");
  save_dataset(ds, path);
  write_manifest(cfg, "generate", {path}, json{{"trajectories", ds.trajectories.size()}});
  std::cout << "wrote " << ds.trajectories.size() << " trajectories to " << path.string() << "\n";
  return kOk;
}

int cmd_pretrain(const RunConfig& cfg, bool overwrite) {
  const std::string name = block_name(cfg);
  const Dataset ds = obtain_dataset(cfg);
  const auto [train, test] = split(ds, cfg.train_ratio, cfg.seed);
  const PretrainResult r = pretrain_block(train, test, cfg.model, cfg.train);

  BlockMetadata meta;
  if (needs_beta(cfg.equation)) meta.param_names.push_back("beta");
  if (needs_nu(cfg.equation)) meta.param_names.push_back("nu");
  meta.epochs = cfg.train.epochs;
  meta.seed = cfg.seed;
  meta.final_train_loss = r.history.train.empty() ? NAN : r.history.train.back();
  meta.final_test_loss = r.history.test.empty() ? meta.final_train_loss : r.history.test.back();

  FoundationLibrary library(library_dir(cfg));
  const LibraryEntry& entry = library.save_block(name, r.model, cfg.equation, meta, overwrite);
  const fs::path csv = cfg.out / (eq_name(cfg) + "_pretrain_loss.csv");
  write_text(csv, loss_csv(r.history, "mse"));
  write_manifest(cfg, "pretrain", {library.root() / entry.file, csv},
                 json{{"block", name}, {"final_test_mse", meta.final_test_loss}});
  return threshold_verdict("final test mse", meta.final_test_loss, cfg.train_threshold);
}

fs::path assembly_path(const RunConfig& cfg) { return cfg.out / (eq_name(cfg) + ".cnoasm"); }

int cmd_assemble(const RunConfig& cfg) {
  const FoundationLibrary library(library_dir(cfg));
  const CompNOModel model =
      assemble(cfg.equation, library, cfg.block_names(), cfg.aggregator, cfg.aggregator_hidden, cfg.seed);
  const Dataset ds = obtain_dataset(cfg);
  const auto [train, test] = split(ds, cfg.train_ratio, cfg.seed);
  const FinetuneResult r = finetune_aggregator(model, train, test, cfg.assemble);

  const fs::path path = assembly_path(cfg);
  write_file_atomic(path, encode_assembly(r.model));
  const fs::path csv = cfg.out / (eq_name(cfg) + "_assemble_loss.csv");
  write_text(csv, loss_csv(r.history, "mae"));
  const double final_mae = !r.history.test.empty()    ? r.history.test.back()
                           : !r.history.train.empty() ? r.history.train.back()
                                                      : one_step_mae(r.model, train);
  write_manifest(cfg, "assemble", {path, csv}, json{{"final_test_mae", final_mae}});
  return threshold_verdict("final test mae", final_mae, cfg.assemble_threshold);
}

// A one-step model loaded from disk: an assembly for coupled equations, a library block otherwise.
struct LoadedModel {
  std::unique_ptr<CompNOModel> assembly;
  std::unique_ptr<PFNOModel> block;

  ParamForward forward() const {
    if (assembly) return compno_map(*assembly);
    const PFNOModel* m = block.get();
    return [m](const Field1D& u, const ParamVector& g) { return pfno_forward(*m, u, g); };
  }
};

LoadedModel load_model(const RunConfig& cfg) {
  const FoundationLibrary library(library_dir(cfg));
  LoadedModel m;
  if (is_block_kind(cfg.equation)) {
    m.block = std::make_unique<PFNOModel>(library.load_block(block_name(cfg), cfg.equation));
  } else {
    m.assembly = std::make_unique<CompNOModel>(decode_assembly(read_file(assembly_path(cfg)), library));
  }
  return m;
}

Predictor make_predictor(const ParamForward& forward, bool bc, std::shared_ptr<ProbeCache> cache) {
  if (bc) {
    BcWrappedForward wrapped = wrap_with_bc(forward, std::move(cache));
    return [wrapped](const Trajectory& truth) {
      return wrapped.rollout(truth.snapshots.front(), truth.params, BoundaryValues::from_trajectory(truth),
                             truth.n_steps(), truth.dt);
    };
  }
  return [forward](const Trajectory& truth) {
    Trajectory t;
    t.dt = truth.dt;
    t.params = truth.params;
    t.snapshots.push_back(truth.snapshots.front());
    for (int s = 0; s < truth.n_steps(); ++s) t.snapshots.push_back(forward(t.snapshots.back(), truth.params));
    return t;
  };
}

std::string suffix(const RunConfig& cfg) { return cfg.bc ? "_bc" : ""; }

int cmd_evaluate(const RunConfig& cfg) {
  const LoadedModel model = load_model(cfg);
  const Predictor predict = make_predictor(model.forward(), cfg.bc, std::make_shared<ProbeCache>());
  ICSpec ic = cfg.ic;
  ic.seed = cfg.seed + cfg.eval_seed_offset;
  const Dataset truth = generate_dataset(cfg.equation, cfg.param_grid(), cfg.eval_n_per_param,
                                         make_grid(cfg.eval_nx), cfg.n_steps, ic, cfg.solver());
  const std::size_t n = truth.trajectories.size();
  if (n == 0) throw ConfigError("evaluate: eval.n_per_param produced no trajectories");

  MetricReport total;
  double interior = 0.0;
  for (const auto& t : truth.trajectories) {
    const Trajectory pred = predict(t);
    const MetricReport r = evaluate(pred, t);
    if (total.step_mse.empty()) {
      total.step_mse.assign(r.step_mse.size(), 0.0);
      total.step_mae = total.step_rel_l2 = total.step_boundary_mae = total.step_mse;
    }
    total.mse += r.mse / n;
    total.mae += r.mae / n;
    total.rel_l2 += r.rel_l2 / n;
    total.boundary_mae += r.boundary_mae / n;
    interior += interior_mae(pred, t) / n;
    for (std::size_t s = 0; s < r.step_mse.size(); ++s) {
      total.step_mse[s] += r.step_mse[s] / n;
      total.step_mae[s] += r.step_mae[s] / n;
      total.step_rel_l2[s] += r.step_rel_l2[s] / n;
      total.step_boundary_mae[s] += r.step_boundary_mae[s] / n;
    }
  }

  std::string summary = "bc,nx,n_trajectories,mse,mae,rel_l2,boundary_mae,interior_mae\n";
  summary += std::string(cfg.bc ? "true" : "false") + "," + std::to_string(cfg.eval_nx) + "," + std::to_string(n) +
             "," + format_g17(total.mse) + "," + format_g17(total.mae) + "," + format_g17(total.rel_l2) + "," +
             format_g17(total.boundary_mae) + "," + format_g17(interior) + "\n";
  std::string steps = "step,mse,mae,rel_l2,boundary_mae\n";
  for (std::size_t s = 0; s < total.step_mse.size(); ++s) {
    steps += std::to_string(s + 1) + "," + format_g17(total.step_mse[s]) + "," + format_g17(total.step_mae[s]) + "," +
             format_g17(total.step_rel_l2[s]) + "," + format_g17(total.step_boundary_mae[s]) + "\n";
  }
  const fs::path a = cfg.out / (eq_name(cfg) + "_eval" + suffix(cfg) + ".csv");
  const fs::path b = cfg.out / (eq_name(cfg) + "_eval_steps" + suffix(cfg) + ".csv");
  write_text(a, summary);
  write_text(b, steps);
  write_manifest(cfg, std::string("evaluate") + suffix(cfg), {a, b});
  std::cout << summary;
  return kOk;
}

int cmd_sweep(const RunConfig& cfg) {
  const LoadedModel model = load_model(cfg);
  const Predictor predict = make_predictor(model.forward(), cfg.bc, std::make_shared<ProbeCache>());
  const SweepResult r = run_sweep(predict, cfg.sweep_spec());
  const fs::path path = cfg.out / (eq_name(cfg) + "_sweep" + suffix(cfg) + ".csv");
  const std::string csv = sweep_csv(r);
  write_text(path, csv);
  write_manifest(cfg, std::string("sweep") + suffix(cfg), {path});
  std::cout << csv;
  for (const auto& row : r.rows) {
    if (row.n == 0) {
      std::cerr << "note: bucket [" << format_g17(row.bucket.lo) << ", " << format_g17(row.bucket.hi)
                << "] has no samples\n";
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  // Training allocates many short-lived multi-megabyte buffers; keep them on the heap instead
  // of paying for fresh mmap page faults on every batch.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"Compositional neural operators for 1D parametric PDEs (" CNO_VERSION ")"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("--config", opt.config, "key = value configuration file");
  app.add_option("--profile", opt.profile, "built-in defaults: paper or desk")->check(CLI::IsMember({"paper", "desk"}));
  app.add_option("--seed", opt.seed, "master seed");
  app.add_flag("--bc", opt.bc, "wrap the model with the Dirichlet boundary correction");
  app.add_option("--out", opt.out, "output directory");
  app.add_flag("--overwrite", opt.overwrite, "replace an existing library block of the same name");

  std::string command;
  for (const char* name : {"generate", "pretrain", "assemble", "evaluate", "sweep"}) {
    app.add_subcommand(name)->fallthrough()->callback([&command, name] { command = name; });
  }
  app.get_subcommand("generate")->description("write a dataset and its manifest");
  app.get_subcommand("pretrain")->description("train a foundation block and store it in the library");
  app.get_subcommand("assemble")->description("fine-tune the aggregator of a compositional model");
  app.get_subcommand("evaluate")->description("rollout metrics against fresh finite-difference truth");
  app.get_subcommand("sweep")->description("Peclet or Reynolds sweep of the rollout error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    const RunConfig cfg = load_config(opt);
    fs::create_directories(cfg.out);
    if (command == "generate") return cmd_generate(cfg);
    if (command == "pretrain") return cmd_pretrain(cfg, opt.overwrite);
    if (command == "assemble") return cmd_assemble(cfg);
    if (command == "evaluate") return cmd_evaluate(cfg);
    if (command == "sweep") return cmd_sweep(cfg);
    return kOther;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kDivergence;
  } catch (const StabilityError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
}
