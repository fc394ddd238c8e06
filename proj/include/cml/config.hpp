#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cml/pathlab.hpp"
#include "cml/pinn.hpp"
#include "cml/solvers.hpp"
#include "cml/truss.hpp"

namespace cml {

/// n equally spaced values from a to b inclusive.
std::vector<double> linspace_grid(double a, double b, int n);

/// Collocation grid per family; unused ranges are ignored.
struct CollocationConfig {
  Range strain{0.0, 0.05, 1.0};
  Range plastic_strain{0.0, 0.05, 1.0};
  Range hardening{0.0, 0.05, 2.0};
  Range gap{0.0, 0.02, 1.0};
  Range gap_s1{0.0, 0.1, 1.0};
  Range gap_s2{0.0, 0.1, 1.0};
  Range gap_n{0.0, 0.1, 1.0};
  Range damage{0.0, 0.1, 1.0};
};

/// Labeled return-mapping rows for the data-driven task: a grid of
/// A |t sin(w pi t)| paths. Defaults give 25 x 25 = 625 paths.
struct LabelConfig {
  std::vector<double> amplitudes = linspace_grid(0.2, 1.0, 25);
  std::vector<double> frequencies = linspace_grid(1.0, 5.0, 25);
  double dt = 0.01;
  double cap = 1.0;
};

struct NetworkConfig {
  std::vector<int> hidden_widths{100, 100, 100, 100, 100};
  Activation activation{ActivationKind::Relu, 1.0};
};

struct BenchConfig {
  std::vector<std::vector<int>> network_shapes{{2, 10}, {3, 40}};
  int reps = 5;
};

struct TimestepConfig {
  std::vector<double> dt_list{0.05, 0.01, 0.005, 0.001, 0.0005};
  int reference_steps = 20000;
  std::string backend = "explicit";
};

struct TrussConfig {
  int bays = 4;
  double bay_width_mm = 1.0;
  double height_mm = 1.0;
  double chord_area_mm2 = 1.0;
  double web_area_mm2 = 1.0;
  double peak_displacement_mm = 1.2;
  FeConfig fe;

  Truss build() const;
};

/// Everything a CLI run needs. Loaded from a YAML file whose keys carry their
/// units (e.g. `E_MPa`, `gap_mm`); see configs/ for complete examples.
struct RunConfig {
  Task task = Task::Damage;
  MaterialSet material;
  NetworkConfig network;
  TrainingConfig training;
  LossWeights weights;
  SwitchOptions switches;
  CollocationConfig collocation;
  LabelConfig labels;
  std::vector<PathSpec> paths;
  SolverConfig solver;
  BenchConfig bench;
  TimestepConfig timestep;
  TrussConfig truss;
  AppendixBConfig appendix_b;
  std::filesystem::path output_dir = "out";

  ModelFamily family() const;
  TrainSetup train_setup() const;
  /// Checks every section against the preconditions of the module that
  /// consumes it. Throws ConfigError naming the offending key.
  void validate() const;
};

/// Parses YAML text; missing keys keep their defaults, unknown keys are
/// rejected. CML_OUTPUT_DIR, when set, replaces `output.dir`. The result is
/// validated. Throws ConfigError.
RunConfig parse_run_config(const std::string& yaml_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Path of `name` inside the output directory, creating the directory.
std::filesystem::path output_path(const RunConfig& cfg, const std::string& name);

/// The collocation set described by the task and its grid (or labels).
CollocationSet build_collocation(const RunConfig& cfg);

}  // namespace cml
