#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "cml/pathlab.hpp"

namespace cml {

/// Pin-jointed plane truss of 1D bars with linear shape functions, small
/// deformation. Degrees of freedom are (u_x, u_y) per node, numbered
/// 2 * node + dof.
struct Truss {
  struct Node {
    double x = 0.0, y = 0.0;  // mm
  };
  struct Element {
    int n1 = 0, n2 = 0;
    double area = 1.0;  // mm^2
  };
  /// A constrained degree of freedom. Fixed ones stay at zero; driven ones
  /// follow `scale` times the load factor in displacement-controlled phases
  /// and are released to a prescribed force in force-controlled phases.
  struct Constraint {
    int node = 0;
    int dof = 0;  // 0 = x, 1 = y
    double scale = 0.0;
  };

  std::vector<Node> nodes;
  std::vector<Element> elements;
  std::vector<Constraint> fixed;
  std::vector<Constraint> driven;

  int n_dofs() const { return 2 * static_cast<int>(nodes.size()); }
  double length(const Element& e) const;
  /// Throws InvalidArgument for dangling connectivity, zero-length bars,
  /// non-positive areas or repeated constraints.
  void validate() const;
};

/// Cantilever truss with `bays` square-ish panels: bottom and top chords,
/// verticals and one diagonal per panel. The left edge is clamped, and both
/// right-edge nodes are pulled horizontally by `peak_displacement`.
Truss cantilever_truss(int bays, double bay_width, double height, double chord_area,
                       double web_area, double peak_displacement);

/// One phase of the load program. Displacement control moves the driven DOFs
/// to factor * scale; force control releases them and applies factor times
/// the reaction each carried at the end of the previous phase.
struct LoadPhase {
  enum class Control { Displacement, Force };
  Control control = Control::Displacement;
  double from = 0.0;
  double to = 1.0;
  int increments = 100;
};

struct FeConfig {
  double tol = 1e-8;  // on |r| / max(1, |f_int|)
  int max_iter = 25;
  std::vector<LoadPhase> program{{LoadPhase::Control::Displacement, 0.0, 1.0, 100},
                                 {LoadPhase::Control::Force, 1.0, 0.0, 100}};

  void validate() const;
};

struct FeStep {
  int phase = 0;
  double factor = 0.0;
  Eigen::VectorXd displacement;
  /// Internal-minus-external nodal force on every DOF; nonzero only on
  /// constrained DOFs after convergence.
  Eigen::VectorXd reaction;
  std::vector<double> stress;
  std::vector<PointState> state;
  int iterations = 0;
  double residual = 0.0;
};

struct FeResult {
  std::vector<FeStep> steps;  // steps[0] is the unloaded initial configuration

  /// Sum of the horizontal reactions of the fixed DOFs, per step.
  std::vector<double> support_reaction_x(const Truss& truss) const;
};

/// Incremental-iterative solution with a global Newton method on the free
/// DOFs, element forces and tangents from `backend` (1D plasticity).
/// Throws GlobalNonConvergence, SingularSystem, InvalidArgument.
FeResult fe_solve(const Truss& truss, MaterialBackend& backend, const FeConfig& cfg = {});

/// Point-wise relative difference (percent) of two reaction histories, using
/// the trajectory error rule (|ref| < 1e-6 skipped). Throws LengthMismatch.
ErrorStats compare_histories(const std::vector<double>& test, const std::vector<double>& ref);

}  // namespace cml
