#include "cml/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>

#include "cml/checkpoint.hpp"
#include "cml/config.hpp"
#include "cml/csv.hpp"
#include "cml/errors.hpp"
#include "cml/truss.hpp"

namespace cml {

namespace {

// Errors caused by what the user asked for, as opposed to failures while
// doing it.
bool is_validation_error(const std::exception& e) {
  return dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidArgument*>(&e) ||
         dynamic_cast<const InvalidShape*>(&e) || dynamic_cast<const UnknownKind*>(&e) ||
         dynamic_cast<const UnknownFamily*>(&e) || dynamic_cast<const EmptyRange*>(&e) ||
         dynamic_cast<const MissingLabels*>(&e) || dynamic_cast<const DimensionMismatch*>(&e);
}

std::string fmt_pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f%%", v);
  return buf;
}

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string summary(const ErrorStats& s) {
  return "mean " + fmt_pct(s.mean_pct) + ", max " + fmt_pct(s.max_pct) + " over " +
         std::to_string(s.errors_pct.size()) + " points (" + std::to_string(s.n_excluded) +
         " excluded)";
}

// Options shared by every subcommand.
struct Common {
  std::string config;
  std::vector<std::string> paths;
  int steps = 50;
  double clip = 0.0;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config, "run configuration (YAML)");
  sub->add_option("--path", c.paths,
                  "loading path formula in t, e.g. \"2.0*abs(t*sin(3*pi*t))\"; replaces the "
                  "config paths");
  sub->add_option("--steps", c.steps, "steps for --path")->check(CLI::PositiveNumber);
  sub->add_option("--clip", c.clip, "upper clip for --path (0 = none)");
}

RunConfig load_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? parse_run_config("") : load_run_config(c.config);
  return cfg;
}

std::vector<LoadingPath> resolve_paths(const RunConfig& cfg, const Common& c, ModelFamily family) {
  std::vector<LoadingPath> out;
  if (!c.paths.empty()) {
    for (const auto& f : c.paths) out.push_back(make_loading_path(f, c.steps, c.clip));
  } else {
    for (PathSpec s : cfg.paths) {
      s.dim = load_dim(family);
      out.push_back(make_loading_path(s));
    }
  }
  if (out.empty()) throw ConfigError("no loading path: add 'paths' to the config or pass --path");
  for (const auto& p : out) {
    if (p.dim() != load_dim(family)) {
      throw ConfigError("path '" + p.describe() + "' has " + std::to_string(p.dim()) +
                        " components but the " + to_string(family) + " model needs " +
                        std::to_string(load_dim(family)));
    }
  }
  return out;
}

struct ResolvedBackend {
  std::unique_ptr<MaterialBackend> backend;
  std::optional<Checkpoint> checkpoint;
};

// "implicit", "explicit", or a checkpoint file.
ResolvedBackend resolve_backend(const std::string& spec, ModelFamily family, const RunConfig& cfg) {
  if (spec == "implicit") return {make_implicit_backend(family, cfg.material, cfg.solver), {}};
  if (spec == "explicit") return {make_explicit_backend(family, cfg.material), {}};
  Checkpoint ck = load_checkpoint(spec);
  if (ck.family != family) {
    throw ConfigError("checkpoint '" + spec + "' holds a " + to_string(ck.family) +
                      " model, expected " + to_string(family));
  }
  auto be = make_network_backend(ck.family, ck.material, ck.nets, spec);
  return {std::move(be), std::move(ck)};
}

bool is_builtin(const std::string& spec) { return spec == "implicit" || spec == "explicit"; }

// When no config is given, a checkpoint defines the family and material.
void adopt_checkpoint(RunConfig& cfg, const Common& c, const std::vector<std::string>& specs) {
  if (!c.config.empty()) return;
  for (const auto& s : specs) {
    if (is_builtin(s) || s.empty()) continue;
    const Checkpoint ck = load_checkpoint(s);
    cfg.task = ck.task;
    cfg.material = ck.material;
    return;
  }
}

std::string slug(const std::string& s) {
  std::string out;
  for (char ch : s) out += std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_';
  return out.size() > 40 ? out.substr(out.size() - 40) : out;
}

// ------------------------------------------------------------- subcommands

int run_gen_collocation(const Common& c, std::ostream& out) {
  const RunConfig cfg = load_config(c);
  const CollocationSet set = build_collocation(cfg);
  const auto file = output_path(cfg, "collocation_" + to_string(cfg.task) + ".csv");
  collocation_table(set).save(file);
  out << to_string(cfg.task) << ": " << set.size() << " rows -> " << file.string() << "\n";
  return kExitOk;
}

struct TrainFlags {
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
};

int run_train(const Common& c, const TrainFlags& f, std::ostream& out) {
  RunConfig cfg = load_config(c);
  if (f.epochs) cfg.training.epochs = *f.epochs;
  if (f.seed) cfg.training.seed = *f.seed;
  cfg.validate();
  const CollocationSet data = build_collocation(cfg);
  const StateNets init = init_state_nets(cfg.family(), cfg.network.hidden_widths,
                                         cfg.network.activation, cfg.training.seed);
  out << "training " << to_string(cfg.task) << " on " << data.size() << " rows, "
      << cfg.training.epochs << " epochs\n";
  const int every = std::max(1, cfg.training.epochs / 10);
  const TrainResult res = train(data, init, cfg.train_setup(), [&](const LossReport& r) {
    if (r.epoch % every == 0 || r.epoch == cfg.training.epochs) {
      out << "  epoch " << r.epoch << "  loss " << fmt_g(r.total) << "\n" << std::flush;
    }
  });
  Checkpoint ck{cfg.family(), cfg.task, cfg.material, cfg.weights, cfg.switches, cfg.training,
                res.nets};
  const auto ck_path = f.checkpoint.empty() ? output_path(cfg, to_string(cfg.task) + ".cpnn")
                                            : std::filesystem::path(f.checkpoint);
  save_checkpoint(ck, ck_path);
  const auto hist = output_path(cfg, to_string(cfg.task) + "_loss.csv");
  loss_history_table(res.history).save(hist);
  out << "checkpoint -> " << ck_path.string() << "\nloss history -> " << hist.string() << "\n";
  if (!cfg.paths.empty()) {
    auto net = make_network_backend(cfg.family(), cfg.material, res.nets);
    auto ref = make_implicit_backend(cfg.family(), cfg.material, cfg.solver);
    for (const auto& p : resolve_paths(cfg, c, cfg.family())) {
      const Trajectory t = run_path(*net, p);
      out << "  " << p.describe() << ": " << summary(compare(t, run_path(*ref, p))) << "\n";
    }
  }
  return kExitOk;
}

int run_eval_path(const Common& c, const std::string& spec, std::ostream& out) {
  RunConfig cfg = load_config(c);
  adopt_checkpoint(cfg, c, {spec});
  const ModelFamily fam = cfg.family();
  auto be = resolve_backend(spec, fam, cfg);
  const auto paths = resolve_paths(cfg, c, fam);
  for (std::size_t k = 0; k < paths.size(); ++k) {
    const Trajectory t = run_path(*be.backend, paths[k]);
    const auto file = output_path(cfg, "trajectory_" + slug(spec) + "_" + std::to_string(k) + ".csv");
    export_trajectory_csv(t, file);
    out << paths[k].describe() << " -> " << file.string() << "\n";
  }
  return kExitOk;
}

int run_compare(const Common& c, const std::string& ref_spec, const std::string& test_spec,
                std::ostream& out) {
  RunConfig cfg = load_config(c);
  adopt_checkpoint(cfg, c, {test_spec, ref_spec});
  const ModelFamily fam = cfg.family();
  auto ref = resolve_backend(ref_spec, fam, cfg);
  auto test = resolve_backend(test_spec, fam, cfg);
  const auto paths = resolve_paths(cfg, c, fam);
  for (std::size_t k = 0; k < paths.size(); ++k) {
    const Trajectory tr = run_path(*ref.backend, paths[k]);
    const Trajectory tt = run_path(*test.backend, paths[k]);
    const ErrorStats st = compare(tt, tr);
    const auto file = output_path(cfg, "errors_" + std::to_string(k) + ".csv");
    error_table(st, tr).save(file);
    const InvariantReport inv = check_invariants(tt, cfg.material);
    out << paths[k].describe() << ": " << summary(st) << "; max phi " << fmt_g(inv.max_yield)
        << "; errors -> " << file.string() << "\n";
  }
  return kExitOk;
}

int run_bench(const Common& c, const std::vector<std::string>& checkpoints, std::ostream& out) {
  RunConfig cfg = load_config(c);
  const ModelFamily fam = cfg.family();
  std::vector<std::unique_ptr<MaterialBackend>> owned;
  owned.push_back(make_implicit_backend(fam, cfg.material, cfg.solver));
  if (fam != ModelFamily::Plasticity) owned.push_back(make_explicit_backend(fam, cfg.material));
  for (const auto& shape : cfg.bench.network_shapes) {
    // Evaluation cost does not depend on the weight values.
    const std::vector<int> widths(static_cast<std::size_t>(shape[0]), shape[1]);
    owned.push_back(make_network_backend(
        fam, cfg.material, init_state_nets(fam, widths, cfg.network.activation, cfg.training.seed),
        "network " + std::to_string(shape[0]) + "x" + std::to_string(shape[1])));
  }
  for (const auto& ck : checkpoints) owned.push_back(resolve_backend(ck, fam, cfg).backend);
  std::vector<MaterialBackend*> raw;
  for (auto& b : owned) raw.push_back(b.get());
  const auto paths = resolve_paths(cfg, c, fam);
  CsvTable table({"path", "backend", "median_seconds", "normalized"});
  for (std::size_t k = 0; k < paths.size(); ++k) {
    out << paths[k].describe() << " (" << paths[k].n_steps() << " steps, median of "
        << cfg.bench.reps << ")\n";
    for (const auto& e : benchmark(raw, paths[k], cfg.bench.reps)) {
      out << "  " << e.backend << ": " << fmt_g(e.median_seconds * 1e6) << " us  ("
          << fmt_g(e.normalized) << ")\n";
      table.row(std::vector<std::string>{std::to_string(k), e.backend,
                                         format_double(e.median_seconds),
                                         format_double(e.normalized)});
    }
  }
  table.save(output_path(cfg, "bench.csv"));
  return kExitOk;
}

int run_timestep(const Common& c, std::ostream& out) {
  RunConfig cfg = load_config(c);
  const ModelFamily fam = cfg.family();
  auto be = resolve_backend(cfg.timestep.backend, fam, cfg);
  auto ref = make_implicit_backend(fam, cfg.material, cfg.solver);
  const auto paths = resolve_paths(cfg, c, fam);
  CsvTable table({"path", "n_steps", "dt", "mean_pct", "max_pct"});
  for (std::size_t k = 0; k < paths.size(); ++k) {
    const auto rows = timestep_study(*be.backend, *ref, paths[k], cfg.timestep.dt_list,
                                     cfg.timestep.reference_steps);
    out << paths[k].describe() << " (" << cfg.timestep.backend << " vs implicit at "
        << cfg.timestep.reference_steps << " steps)\n";
    for (const auto& r : rows) {
      out << "  dt " << fmt_g(r.dt) << ": " << summary(r.stats) << "\n";
      table.row(std::vector<double>{static_cast<double>(k), static_cast<double>(r.n_steps), r.dt,
                                    r.stats.mean_pct, r.stats.max_pct});
    }
  }
  table.save(output_path(cfg, "timestep.csv"));
  return kExitOk;
}

CsvTable fe_table(const Truss& truss, const FeResult& res) {
  CsvTable t({"step", "phase", "factor", "reaction_x", "tip_ux", "iterations"});
  const auto rx = res.support_reaction_x(truss);
  const int tip = 2 * (static_cast<int>(truss.nodes.size()) - 1);
  for (std::size_t k = 0; k < res.steps.size(); ++k) {
    const auto& s = res.steps[k];
    t.row(std::vector<double>{static_cast<double>(k), static_cast<double>(s.phase), s.factor,
                              rx[k], s.displacement[tip], static_cast<double>(s.iterations)});
  }
  return t;
}

int run_fe_demo(const Common& c, const std::string& checkpoint, std::ostream& out) {
  RunConfig cfg = load_config(c);
  const Truss truss = cfg.truss.build();
  auto classical = make_implicit_backend(ModelFamily::Plasticity, cfg.material, cfg.solver);
  const FeResult ref = fe_solve(truss, *classical, cfg.truss.fe);
  fe_table(truss, ref).save(output_path(cfg, "fe_implicit.csv"));
  const int tip = 2 * (static_cast<int>(truss.nodes.size()) - 1);
  const auto report = [&](const std::string& name, const FeResult& r) {
    const auto rx = r.support_reaction_x(truss);
    double peak = 0.0;
    for (double v : rx) peak = std::max(peak, std::abs(v));
    out << name << ": " << truss.elements.size() << " bars, " << r.steps.size() - 1
        << " increments, peak |reaction_x| " << fmt_g(peak) << ", residual tip u_x "
        << fmt_g(r.steps.back().displacement[tip]) << "\n";
  };
  report("implicit", ref);
  if (!checkpoint.empty()) {
    auto net = resolve_backend(checkpoint, ModelFamily::Plasticity, cfg);
    const FeResult nn = fe_solve(truss, *net.backend, cfg.truss.fe);
    fe_table(truss, nn).save(output_path(cfg, "fe_network.csv"));
    report("network", nn);
    out << "reaction history: "
        << summary(compare_histories(nn.support_reaction_x(truss), ref.support_reaction_x(truss)))
        << "\n";
  }
  return kExitOk;
}

int run_appendix_b(const Common& c, std::ostream& out) {
  const RunConfig cfg = load_config(c);
  const AppendixBResult res = train_appendix_b(cfg.appendix_b);
  CsvTable hist({"phase", "epoch", "loss"});
  for (std::size_t k = 0; k < res.data_history.size(); ++k) {
    hist.row(std::vector<double>{1.0, static_cast<double>(k + 1), res.data_history[k]});
  }
  for (std::size_t k = 0; k < res.physics_history.size(); ++k) {
    hist.row(std::vector<double>{2.0, static_cast<double>(k + 1), res.physics_history[k]});
  }
  hist.save(output_path(cfg, "appendix_b_loss.csv"));
  CsvTable pred({"x", "target", "after_data", "final"});
  double err_data = 0.0, err_final = 0.0;
  const double end = cfg.appendix_b.domain_end;
  for (int i = 0; i <= 500; ++i) {
    const double x = end * i / 500.0;
    const Eigen::VectorXd in = Eigen::VectorXd::Constant(1, x);
    const double a = forward_point(res.after_data, in)[0];
    const double b = forward_point(res.net, in)[0];
    const double y = appendix_b_target(x);
    if (x >= cfg.appendix_b.data_end) err_data = std::max(err_data, std::abs(a - y));
    err_final = std::max(err_final, std::abs(b - y));
    pred.row(std::vector<double>{x, y, a, b});
  }
  pred.save(output_path(cfg, "appendix_b_prediction.csv"));
  out << "after data phase: max error on [" << fmt_g(cfg.appendix_b.data_end) << ", "
      << fmt_g(end) << "] = " << fmt_g(err_data) << "\n"
      << "after physics phase: max error on [0, " << fmt_g(end) << "] = " << fmt_g(err_final)
      << "\n";
  return kExitOk;
}

int run_data_baseline(const Common& c, const TrainFlags& f, const std::string& physics,
                      std::ostream& out) {
  RunConfig cfg = load_config(c);
  if (f.epochs) cfg.training.epochs = *f.epochs;
  if (f.seed) cfg.training.seed = *f.seed;
  if (cfg.task != Task::DataDriven) {
    throw ConfigError("data-baseline needs 'task: data_driven' in the config");
  }
  const CollocationSet data = build_collocation(cfg);
  out << "training data-driven baseline on " << data.size() << " labeled rows\n";
  const TrainResult res =
      train(data,
            init_state_nets(cfg.family(), cfg.network.hidden_widths, cfg.network.activation,
                            cfg.training.seed),
            cfg.train_setup());
  const auto ck_path = output_path(cfg, "data_driven.cpnn");
  save_checkpoint({cfg.family(), cfg.task, cfg.material, cfg.weights, cfg.switches, cfg.training,
                   res.nets},
                  ck_path);
  loss_history_table(res.history).save(output_path(cfg, "data_driven_loss.csv"));
  out << "checkpoint -> " << ck_path.string() << "\n";
  auto ref = make_implicit_backend(cfg.family(), cfg.material, cfg.solver);
  auto data_net = make_network_backend(cfg.family(), cfg.material, res.nets, "data-driven");
  std::optional<ResolvedBackend> phys;
  if (!physics.empty()) phys = resolve_backend(physics, cfg.family(), cfg);
  for (const auto& p : resolve_paths(cfg, c, cfg.family())) {
    const Trajectory tr = run_path(*ref, p);
    const Trajectory td = run_path(*data_net, p);
    out << p.describe() << "\n  data-driven: " << summary(compare(td, tr))
        << "; unloading drift " << fmt_g(frozen_state_drift(td, tr)) << "\n";
    if (phys) {
      const Trajectory tp = run_path(*phys->backend, p);
      out << "  physics:     " << summary(compare(tp, tr)) << "; unloading drift "
          << fmt_g(frozen_state_drift(tp, tr)) << "\n";
    }
  }
  return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Constitutive-model laboratory: classical integrators and physics-trained "
               "networks for plasticity and damage models",
               "cml"};
  app.require_subcommand(1);
  app.allow_extras(false);

  Common common;
  TrainFlags train_flags;
  std::string backend = "implicit", ref_spec = "implicit", test_spec, checkpoint, physics;
  std::vector<std::string> bench_ckpts;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;

  auto* gen = app.add_subcommand("gen-collocation", "write the collocation grid of a task");
  add_common(gen, common);
  auto* tr = app.add_subcommand("train", "train the state networks; writes a checkpoint");
  add_common(tr, common);
  tr->add_option("--epochs", epochs, "override training.epochs");
  tr->add_option("--seed", seed, "override training.seed");
  tr->add_option("--checkpoint", train_flags.checkpoint, "checkpoint file to write");
  auto* ev = app.add_subcommand("eval-path", "run one backend along loading paths");
  add_common(ev, common);
  ev->add_option("--backend", backend, "implicit, explicit, or a checkpoint file");
  auto* cmp = app.add_subcommand("compare", "point-wise force error of two backends");
  add_common(cmp, common);
  cmp->add_option("--ref", ref_spec, "reference backend (implicit, explicit, checkpoint)");
  cmp->add_option("--test", test_spec, "tested backend (implicit, explicit, checkpoint)")->required();
  auto* bench = app.add_subcommand("bench", "median wall time per backend");
  add_common(bench, common);
  bench->add_option("--checkpoint", bench_ckpts, "trained networks to include");
  auto* ts = app.add_subcommand("timestep-study", "error against a fine implicit reference vs dt");
  add_common(ts, common);
  auto* fe = app.add_subcommand("fe-demo", "cantilever truss with classical and network elements");
  add_common(fe, common);
  fe->add_option("--checkpoint", checkpoint, "plasticity checkpoint for the network run");
  auto* ab = app.add_subcommand("appendix-b", "data-then-physics fit of a scalar ODE");
  add_common(ab, common);
  auto* db = app.add_subcommand("data-baseline", "train on labeled return-mapping rows");
  add_common(db, common);
  db->add_option("--physics", physics, "physics-trained checkpoint to contrast");
  db->add_option("--epochs", epochs, "override training.epochs");
  db->add_option("--seed", seed, "override training.seed");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitInvalid;
  }
  train_flags.epochs = epochs;
  train_flags.seed = seed;

  try {
    if (*gen) return run_gen_collocation(common, out);
    if (*tr) return run_train(common, train_flags, out);
    if (*ev) return run_eval_path(common, backend, out);
    if (*cmp) return run_compare(common, ref_spec, test_spec, out);
    if (*bench) return run_bench(common, bench_ckpts, out);
    if (*ts) return run_timestep(common, out);
    if (*fe) return run_fe_demo(common, checkpoint, out);
    if (*ab) return run_appendix_b(common, out);
    if (*db) return run_data_baseline(common, train_flags, physics, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return is_validation_error(e) ? kExitInvalid : kExitFailure;
  }
  err << app.help();
  return kExitInvalid;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace cml
