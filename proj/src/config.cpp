#include "cml/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "cml/errors.hpp"

namespace cml {

namespace {

// Rejects keys outside `allowed` so typos fail loudly instead of silently
// keeping a default.
void check_keys(const YAML::Node& node, const std::string& where,
                const std::set<std::string>& allowed) {
  if (!node.IsMap()) throw ConfigError("'" + where + "' must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw ConfigError("unknown key '" + where + "." + key + "' (allowed: " + list + ")");
    }
  }
}

template <typename T>
void read(const YAML::Node& node, const std::string& where, const std::string& key, T& out) {
  if (const YAML::Node v = node[key]) {
    try {
      out = v.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError("'" + where + "." + key + "' has the wrong type");
    }
  }
}

void read_range(const YAML::Node& node, const std::string& where, const std::string& key,
                Range& out) {
  if (const YAML::Node v = node[key]) {
    std::vector<double> r;
    read(node, where, key, r);
    if (r.size() != 3) throw ConfigError("'" + where + "." + key + "' must be [begin, step, end]");
    out = {r[0], r[1], r[2]};
  }
}

void check_range(const Range& r, const std::string& key) {
  try {
    (void)r.values();
  } catch (const Error& e) {
    throw ConfigError("'" + key + "': " + e.what());
  }
}

template <typename F>
void rethrow_as_config(const std::string& key, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("'" + key + "': " + e.what());
  }
}

void parse_material(const YAML::Node& n, MaterialSet& m) {
  check_keys(n, "material", {"plasticity", "damage", "cohesive_zone"});
  if (const auto p = n["plasticity"]) {
    const std::string w = "material.plasticity";
    check_keys(p, w, {"E_MPa", "sigma_y0_MPa", "h1_MPa", "h2"});
    read(p, w, "E_MPa", m.plastic.E);
    read(p, w, "sigma_y0_MPa", m.plastic.sigma_y0);
    read(p, w, "h1_MPa", m.plastic.h1);
    read(p, w, "h2", m.plastic.h2);
  }
  if (const auto d = n["damage"]) {
    const std::string w = "material.damage";
    check_keys(d, w, {"K_MPa_per_mm", "Y0_MPa_mm", "h1_MPa_mm", "h2_per_mm"});
    read(d, w, "K_MPa_per_mm", m.damage.K);
    read(d, w, "Y0_MPa_mm", m.damage.Y0);
    read(d, w, "h1_MPa_mm", m.damage.h1);
    read(d, w, "h2_per_mm", m.damage.h2);
  }
  if (const auto c = n["cohesive_zone"]) {
    const std::string w = "material.cohesive_zone";
    check_keys(c, w, {"Kn_MPa_per_mm", "Ks1_MPa_per_mm", "Ks2_MPa_per_mm", "Y0_MPa_mm",
                      "h1_MPa_mm", "h2_per_mm"});
    read(c, w, "Kn_MPa_per_mm", m.cz3d.K_n);
    read(c, w, "Ks1_MPa_per_mm", m.cz3d.K_s1);
    read(c, w, "Ks2_MPa_per_mm", m.cz3d.K_s2);
    read(c, w, "Y0_MPa_mm", m.cz3d.Y0);
    read(c, w, "h1_MPa_mm", m.cz3d.h1);
    read(c, w, "h2_per_mm", m.cz3d.h2);
  }
}

PathSpec parse_path(const YAML::Node& n, const std::string& w) {
  PathSpec s;
  if (n.IsScalar()) {
    s.family = "expr";
    s.formula = n.as<std::string>();
    return s;
  }
  check_keys(n, w, {"family", "amplitude", "omega", "formula", "n_steps", "duration", "clip"});
  read(n, w, "family", s.family);
  read(n, w, "amplitude", s.amplitude);
  read(n, w, "omega", s.omega);
  read(n, w, "formula", s.formula);
  read(n, w, "n_steps", s.n_steps);
  read(n, w, "duration", s.duration);
  read(n, w, "clip", s.clip);
  if (n["formula"] && !n["family"]) s.family = "expr";
  return s;
}

}  // namespace

std::vector<double> linspace_grid(double a, double b, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(n == 1 ? a : a + (b - a) * i / (n - 1));
  return v;
}

Truss TrussConfig::build() const {
  return cantilever_truss(bays, bay_width_mm, height_mm, chord_area_mm2, web_area_mm2,
                          peak_displacement_mm);
}

ModelFamily RunConfig::family() const {
  switch (task) {
    case Task::Plasticity:
    case Task::DataDriven:
      return ModelFamily::Plasticity;
    case Task::Damage:
      return ModelFamily::Damage;
    case Task::Cz3d:
      return ModelFamily::Cz3d;
  }
  return ModelFamily::Damage;
}

TrainSetup RunConfig::train_setup() const {
  return {task, material, weights, switches, training};
}

void RunConfig::validate() const {
  rethrow_as_config("material.plasticity", [&] { material.plastic.validate(); });
  rethrow_as_config("material.damage", [&] { material.damage.validate(); });
  rethrow_as_config("material.cohesive_zone", [&] { material.cz3d.validate(); });
  rethrow_as_config("training", [&] { training.validate(); });
  rethrow_as_config("loss_weights", [&] { weights.validate(); });
  if (!(switches.R > 0.0)) throw ConfigError("'switch.R' must be > 0");
  if (network.hidden_widths.empty()) throw ConfigError("'network.hidden_widths' is empty");
  for (int w : network.hidden_widths) {
    if (w < 1) throw ConfigError("'network.hidden_widths' entries must be >= 1");
  }
  check_range(collocation.strain, "collocation.strain");
  check_range(collocation.plastic_strain, "collocation.plastic_strain");
  check_range(collocation.hardening, "collocation.hardening");
  check_range(collocation.gap, "collocation.gap_mm");
  check_range(collocation.gap_s1, "collocation.gap_s1_mm");
  check_range(collocation.gap_s2, "collocation.gap_s2_mm");
  check_range(collocation.gap_n, "collocation.gap_n_mm");
  check_range(collocation.damage, "collocation.damage");
  if (task == Task::DataDriven) {
    if (labels.amplitudes.empty() || labels.frequencies.empty()) {
      throw ConfigError("'labels' needs amplitudes and frequencies for the data_driven task");
    }
    if (!(labels.dt > 0.0) || !(labels.dt <= 1.0)) throw ConfigError("'labels.dt' must be in (0, 1]");
    if (!(labels.cap > 0.0)) throw ConfigError("'labels.cap' must be > 0");
  }
  for (std::size_t k = 0; k < paths.size(); ++k) {
    rethrow_as_config("paths[" + std::to_string(k) + "]", [&] {
      PathSpec s = paths[k];
      s.dim = load_dim(family());
      (void)make_loading_path(s);
    });
  }
  if (!(solver.tol > 0.0) || solver.max_iter < 1) {
    throw ConfigError("'solver' needs tol > 0 and max_iter >= 1");
  }
  if (bench.reps < 3) throw ConfigError("'bench.reps' must be >= 3");
  for (const auto& shape : bench.network_shapes) {
    if (shape.size() != 2 || shape[0] < 1 || shape[1] < 1) {
      throw ConfigError("'bench.network_shapes' entries must be [layers, width]");
    }
  }
  if (timestep.dt_list.empty() || timestep.reference_steps < 1) {
    throw ConfigError("'timestep' needs a non-empty dt list and reference_steps >= 1");
  }
  for (double dt : timestep.dt_list) {
    if (!(dt > 0.0) || !(dt <= 1.0)) throw ConfigError("'timestep.dt' entries must be in (0, 1]");
  }
  rethrow_as_config("truss", [&] {
    truss.build();
    truss.fe.validate();
  });
  const auto& b = appendix_b;
  if (b.layer_sizes.size() < 2 || b.layer_sizes.front() != 1 || b.layer_sizes.back() != 1 ||
      b.n_points < 2 || b.epochs_data < 0 || b.epochs_physics < 0 || b.batch_size < 1 ||
      !(b.learning_rate > 0.0) || !(b.data_end > 0.0) || !(b.domain_end > b.data_end)) {
    throw ConfigError("'appendix_b' is inconsistent (1 -> ... -> 1 layers, positive sizes, "
                      "0 < data_end < domain_end)");
  }
}

RunConfig parse_run_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  RunConfig cfg;
  if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  check_keys(root, "<root>",
             {"task", "material", "network", "training", "loss_weights", "switch", "collocation",
              "labels", "paths", "solver", "bench", "timestep", "truss", "appendix_b", "output"});
  if (const auto t = root["task"]) {
    rethrow_as_config("task", [&] { cfg.task = parse_task(t.as<std::string>()); });
  }
  if (const auto m = root["material"]) parse_material(m, cfg.material);
  if (const auto n = root["network"]) {
    const std::string w = "network";
    check_keys(n, w, {"hidden_widths", "activation", "activation_R"});
    read(n, w, "hidden_widths", cfg.network.hidden_widths);
    std::string act = to_string(cfg.network.activation.kind);
    double R = cfg.network.activation.R;
    read(n, w, "activation", act);
    read(n, w, "activation_R", R);
    rethrow_as_config("network.activation", [&] { cfg.network.activation = parse_activation(act, R); });
  }
  if (const auto t = root["training"]) {
    const std::string w = "training";
    check_keys(t, w, {"learning_rate", "epochs", "batch_size", "seed", "beta1", "beta2", "adam_eps"});
    read(t, w, "learning_rate", cfg.training.learning_rate);
    read(t, w, "epochs", cfg.training.epochs);
    read(t, w, "batch_size", cfg.training.batch_size);
    read(t, w, "seed", cfg.training.seed);
    read(t, w, "beta1", cfg.training.beta1);
    read(t, w, "beta2", cfg.training.beta2);
    read(t, w, "adam_eps", cfg.training.eps_adam);
  }
  if (const auto l = root["loss_weights"]) {
    const std::string w = "loss_weights";
    check_keys(l, w, {"ue", "ux", "ev", "yl", "ke", "ky"});
    read(l, w, "ue", cfg.weights.ue);
    read(l, w, "ux", cfg.weights.ux);
    read(l, w, "ev", cfg.weights.ev);
    read(l, w, "yl", cfg.weights.yl);
    read(l, w, "ke", cfg.weights.ke);
    read(l, w, "ky", cfg.weights.ky);
  }
  if (const auto s = root["switch"]) {
    const std::string w = "switch";
    check_keys(s, w, {"mode", "R", "symmetric_sign"});
    std::string mode = cfg.switches.smooth ? "smooth" : "hard";
    read(s, w, "mode", mode);
    if (mode != "hard" && mode != "smooth") throw ConfigError("'switch.mode' must be hard or smooth");
    cfg.switches.smooth = mode == "smooth";
    read(s, w, "R", cfg.switches.R);
    read(s, w, "symmetric_sign", cfg.switches.symmetric_sign);
  }
  cfg.training.smoothing_R = cfg.switches.R;
  if (const auto c = root["collocation"]) {
    const std::string w = "collocation";
    check_keys(c, w, {"strain", "plastic_strain", "hardening", "gap_mm", "gap_s1_mm", "gap_s2_mm",
                      "gap_n_mm", "damage"});
    auto& g = cfg.collocation;
    read_range(c, w, "strain", g.strain);
    read_range(c, w, "plastic_strain", g.plastic_strain);
    read_range(c, w, "hardening", g.hardening);
    read_range(c, w, "gap_mm", g.gap);
    read_range(c, w, "gap_s1_mm", g.gap_s1);
    read_range(c, w, "gap_s2_mm", g.gap_s2);
    read_range(c, w, "gap_n_mm", g.gap_n);
    read_range(c, w, "damage", g.damage);
  }
  if (const auto l = root["labels"]) {
    const std::string w = "labels";
    check_keys(l, w, {"amplitude_min", "amplitude_max", "amplitude_count", "frequency_min",
                      "frequency_max", "frequency_count", "dt", "cap"});
    double a0 = 0.2, a1 = 1.0, f0 = 1.0, f1 = 5.0;
    int na = 25, nf = 25;
    read(l, w, "amplitude_min", a0);
    read(l, w, "amplitude_max", a1);
    read(l, w, "amplitude_count", na);
    read(l, w, "frequency_min", f0);
    read(l, w, "frequency_max", f1);
    read(l, w, "frequency_count", nf);
    if (na < 1 || nf < 1 || a1 < a0 || f1 < f0) {
      throw ConfigError("'labels' needs counts >= 1 and min <= max");
    }
    cfg.labels.amplitudes = linspace_grid(a0, a1, na);
    cfg.labels.frequencies = linspace_grid(f0, f1, nf);
    read(l, w, "dt", cfg.labels.dt);
    read(l, w, "cap", cfg.labels.cap);
  }
  if (const auto p = root["paths"]) {
    if (!p.IsSequence()) throw ConfigError("'paths' must be a list");
    for (std::size_t k = 0; k < p.size(); ++k) {
      cfg.paths.push_back(parse_path(p[k], "paths[" + std::to_string(k) + "]"));
    }
  }
  if (const auto s = root["solver"]) {
    check_keys(s, "solver", {"tol", "max_iter"});
    read(s, "solver", "tol", cfg.solver.tol);
    read(s, "solver", "max_iter", cfg.solver.max_iter);
  }
  if (const auto b = root["bench"]) {
    check_keys(b, "bench", {"network_shapes", "reps"});
    read(b, "bench", "network_shapes", cfg.bench.network_shapes);
    read(b, "bench", "reps", cfg.bench.reps);
  }
  if (const auto t = root["timestep"]) {
    check_keys(t, "timestep", {"dt", "reference_steps", "backend"});
    read(t, "timestep", "dt", cfg.timestep.dt_list);
    read(t, "timestep", "reference_steps", cfg.timestep.reference_steps);
    read(t, "timestep", "backend", cfg.timestep.backend);
  }
  if (const auto t = root["truss"]) {
    const std::string w = "truss";
    check_keys(t, w, {"bays", "bay_width_mm", "height_mm", "chord_area_mm2", "web_area_mm2",
                      "peak_displacement_mm", "increments_per_phase", "unload", "tol",
                      "max_iter"});
    auto& tr = cfg.truss;
    read(t, w, "bays", tr.bays);
    read(t, w, "bay_width_mm", tr.bay_width_mm);
    read(t, w, "height_mm", tr.height_mm);
    read(t, w, "chord_area_mm2", tr.chord_area_mm2);
    read(t, w, "web_area_mm2", tr.web_area_mm2);
    read(t, w, "peak_displacement_mm", tr.peak_displacement_mm);
    read(t, w, "tol", tr.fe.tol);
    read(t, w, "max_iter", tr.fe.max_iter);
    int increments = 100;
    bool unload = true;
    read(t, w, "increments_per_phase", increments);
    read(t, w, "unload", unload);
    tr.fe.program = {{LoadPhase::Control::Displacement, 0.0, 1.0, increments}};
    if (unload) tr.fe.program.push_back({LoadPhase::Control::Force, 1.0, 0.0, increments});
  }
  if (const auto a = root["appendix_b"]) {
    const std::string w = "appendix_b";
    check_keys(a, w, {"layer_sizes", "n_points", "epochs_data", "epochs_physics", "batch_size",
                      "learning_rate", "seed", "data_end", "domain_end"});
    auto& b = cfg.appendix_b;
    read(a, w, "layer_sizes", b.layer_sizes);
    read(a, w, "n_points", b.n_points);
    read(a, w, "epochs_data", b.epochs_data);
    read(a, w, "epochs_physics", b.epochs_physics);
    read(a, w, "batch_size", b.batch_size);
    read(a, w, "learning_rate", b.learning_rate);
    read(a, w, "seed", b.seed);
    read(a, w, "data_end", b.data_end);
    read(a, w, "domain_end", b.domain_end);
  }
  if (const auto o = root["output"]) {
    check_keys(o, "output", {"dir"});
    std::string dir = cfg.output_dir.string();
    read(o, "output", "dir", dir);
    cfg.output_dir = dir;
  }
  if (const char* env = std::getenv("CML_OUTPUT_DIR"); env && *env) cfg.output_dir = env;
  for (auto& p : cfg.paths) p.dim = load_dim(cfg.family());
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_run_config(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::filesystem::path output_path(const RunConfig& cfg, const std::string& name) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  if (ec) throw IoFailure("cannot create output directory '" + cfg.output_dir.string() + "': " + ec.message());
  return cfg.output_dir / name;
}

CollocationSet build_collocation(const RunConfig& cfg) {
  const auto& g = cfg.collocation;
  switch (cfg.task) {
    case Task::Plasticity:
      return gen_collocation_plastic(g.strain, g.plastic_strain, g.hardening);
    case Task::Damage:
      return gen_collocation_damage(g.gap, g.damage);
    case Task::Cz3d:
      return gen_collocation_cz3d(g.gap_s1, g.gap_s2, g.gap_n, g.damage);
    case Task::DataDriven:
      return gen_plastic_labels(cfg.labels.amplitudes, cfg.labels.frequencies, cfg.labels.dt,
                                cfg.labels.cap, cfg.material.plastic);
  }
  throw InvalidArgument("unknown task");
}

}  // namespace cml
