#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "cml/material.hpp"
#include "cml/neural.hpp"
#include "cml/pinn.hpp"
#include "cml/solvers.hpp"

namespace cml {

/// Compiled scalar expression of pseudo-time `t`. Grammar: numbers, `t`,
/// `pi`, + - * / ^, parentheses, unary minus, and the functions abs, sin,
/// cos, tan, exp, log, sqrt (one argument) and min, max (two arguments).
class Expression {
 public:
  /// Throws UnknownFamily on a syntax error or an unknown name.
  static Expression parse(const std::string& text);

  double operator()(double t) const;
  const std::string& text() const { return text_; }

  struct Node;

 private:
  std::string text_;
  std::shared_ptr<const Node> root_;
};

/// A prescribed load history on [0, duration] sampled at n_steps + 1 equally
/// spaced times. One component for 1D models, three (g_s1, g_s2, g_n) for the
/// cohesive zone.
class LoadingPath {
 public:
  LoadingPath(std::vector<Expression> components, int n_steps, double duration = 1.0);
  /// Explicit samples, one row per time (n_steps + 1 rows).
  LoadingPath(std::vector<std::array<double, 3>> samples, int dim, double duration);

  int dim() const { return dim_; }
  int n_steps() const { return n_steps_; }
  double duration() const { return duration_; }
  double dt() const { return duration_ / n_steps_; }
  double time(int k) const { return duration_ * k / n_steps_; }
  /// Load at sample k, zero-padded to three components.
  Vec3 load(int k) const;
  std::string describe() const;

  /// Same formula, different resolution. Throws InvalidArgument for sampled
  /// paths.
  LoadingPath with_steps(int n_steps) const;

 private:
  std::vector<Expression> exprs_;
  std::vector<Vec3> samples_;
  int dim_ = 1;
  int n_steps_ = 50;
  double duration_ = 1.0;
};

/// Named analytic families. `amplitude` and `omega` are A and w in the
/// formulas below; `clip` caps the load from above when set (> 0).
///   linear: t          cubic: t^3          quadratic: A t^2
///   t_sin:  A|t sin(w pi t)|   sin: A|sin(w pi t)|   cos: A|cos(w pi t)|
///   expr:   `formula` is parsed as an Expression; for 3D paths it holds
///           "g_s1=...; g_s2=...; g_n=..." (or three ';'-separated formulas).
struct PathSpec {
  std::string family = "t_sin";
  double amplitude = 2.0;
  double omega = 3.0;
  std::string formula;
  int n_steps = 50;
  double duration = 1.0;
  double clip = 0.0;
  int dim = 1;
};

/// Throws UnknownFamily.
LoadingPath make_loading_path(const PathSpec& spec);
/// Shorthand for a formula path ("2.0*abs(t*sin(3*pi*t))" or a 3D
/// "g_s1=...; g_s2=...; g_n=...").
LoadingPath make_loading_path(const std::string& formula, int n_steps,
                              double clip = 0.0);

/// History variables of one material point: (eps_p, xi_p) or (d, xi_d).
struct PointState {
  double alpha = 0.0;
  double xi = 0.0;

  bool operator==(const PointState&) const = default;
};

struct PointResult {
  Vec3 force = Vec3::Zero();  // stress, traction, or traction vector
  PointState state;
  Mat3 tangent = Mat3::Zero();
  double psi = 0.0;
  double dissipation = 0.0;
};

/// A material-point integrator driven one pseudo-time step at a time.
/// Instances may own scratch space; use one per thread.
class MaterialBackend {
 public:
  virtual ~MaterialBackend() = default;
  virtual ModelFamily family() const = 0;
  virtual std::string name() const = 0;
  /// Advances from `state` to the load `load` (only the first load_dim
  /// components are read). Throws the integrator's errors.
  virtual PointResult step(const Vec3& load, const PointState& state,
                           bool want_tangent = true) = 0;
  /// Response at a frozen state (no evolution); tangent is the elastic one.
  virtual PointResult respond(const Vec3& load, const PointState& state) const = 0;
};

std::unique_ptr<MaterialBackend> make_implicit_backend(ModelFamily family,
                                                       const MaterialSet& m,
                                                       const SolverConfig& cfg = {});
/// Damage and cohesive zone only. Throws InvalidArgument for plasticity.
std::unique_ptr<MaterialBackend> make_explicit_backend(ModelFamily family,
                                                       const MaterialSet& m);
/// Closed-loop network backend; the nets are copied. The tangent is the
/// analytic force derivative composed with the network input Jacobian.
std::unique_ptr<MaterialBackend> make_network_backend(ModelFamily family,
                                                      const MaterialSet& m,
                                                      StateNets nets,
                                                      std::string label = "network");

struct TrajectoryRecord {
  double time = 0.0;
  Vec3 load = Vec3::Zero();
  Vec3 force = Vec3::Zero();
  PointState state;
  Mat3 tangent = Mat3::Zero();
  double psi = 0.0;
  double dissipation = 0.0;
  double wall_seconds = 0.0;  // excluded from equality

  bool same_values(const TrajectoryRecord& o) const;
};

struct Trajectory {
  ModelFamily family = ModelFamily::Damage;
  std::string backend;
  std::vector<TrajectoryRecord> records;  // n_steps + 1, records[0] is the start

  int dim() const { return load_dim(family); }
  std::size_t size() const { return records.size(); }
};

/// Closed-loop run: each step starts from the previous step's state. The first
/// record holds the initial state at load(0) without stepping, unless load(0)
/// is nonzero, in which case it is a step from `initial`. Throws
/// PathStepError (with the step index) wrapping backend failures, and
/// InvalidArgument when the path dimension does not fit the backend.
Trajectory run_path(MaterialBackend& backend, const LoadingPath& path,
                    const PointState& initial = {}, bool want_tangent = true);

struct ErrorStats {
  double mean_pct = 0.0;
  double max_pct = 0.0;
  std::vector<double> errors_pct;  // per compared point
  std::vector<std::size_t> indices;  // record index of each compared point
  std::size_t n_excluded = 0;
};

/// err = |F_test - F_ref| / |F_ref| * 100 per record (Euclidean norms for
/// vectors), skipping records with |F_ref| < 1e-6. Throws LengthMismatch.
ErrorStats compare(const Trajectory& test, const Trajectory& ref);
/// The same metric for one force component.
ErrorStats compare_component(const Trajectory& test, const Trajectory& ref, int component);

/// Records of `fine` at the times of `coarse`; the step counts must be
/// integer multiples. Throws LengthMismatch.
Trajectory subsample(const Trajectory& fine, const Trajectory& coarse);

/// Yield function of the family at a converged point (load and state at the
/// end of a step). Positive values violate admissibility.
double yield_value(ModelFamily family, const MaterialSet& m, const Vec3& load,
                   const PointState& state);

/// Thermodynamic admissibility of a closed-loop run.
struct InvariantReport {
  double max_state_decrease = 0.0;  // max(alpha_{k-1} - alpha_k); damage must not heal
  double max_hardening_decrease = 0.0;  // max(xi_{k-1} - xi_k)
  double max_yield = 0.0;  // max(0, phi) over all records
};
InvariantReport check_invariants(const Trajectory& traj, const MaterialSet& m);

/// Largest |alpha_k - alpha_{k-1}| of `test` over the steps where `ref` keeps
/// its state frozen after it first left the initial state (elastic unloading
/// and reloading). Throws LengthMismatch.
double frozen_state_drift(const Trajectory& test, const Trajectory& ref);

struct BenchmarkEntry {
  std::string backend;
  double median_seconds = 0.0;
  double normalized = 0.0;  // median / fastest median
};

/// Median wall time of `reps` closed-loop runs per backend, without tangents.
/// Throws InvalidArgument when reps < 3.
std::vector<BenchmarkEntry> benchmark(const std::vector<MaterialBackend*>& backends,
                                      const LoadingPath& path, int reps);

struct TimestepRow {
  int n_steps = 0;
  double dt = 0.0;
  ErrorStats stats;
};

/// Runs `backend` along the same formula at each dt and compares against
/// `reference` run at `ref_steps`, on the coarser of the two grids.
std::vector<TimestepRow> timestep_study(MaterialBackend& backend,
                                        MaterialBackend& reference,
                                        const LoadingPath& path,
                                        const std::vector<double>& dt_list,
                                        int ref_steps);

}  // namespace cml
