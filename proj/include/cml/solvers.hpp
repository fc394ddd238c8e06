#pragma once

#include "cml/material.hpp"

namespace cml {

struct SolverConfig {
  double tol = 1e-10;
  int max_iter = 50;

  void validate() const;
};

/// Result of integrating one pseudo-time step at a material point.
template <typename Force, typename Tangent, typename State>
struct StepResult {
  Force force{};
  State state_next{};
  Tangent tangent{};
  double delta_lambda = 0.0;
  int iterations = 0;
  double psi = 0.0;
  bool active = false;
  // Damage only: the consistency solution was clamped at 1 - 1e-9.
  bool saturated = false;
};

using PlasticStep = StepResult<double, double, PlasticState>;
using DamageStep = StepResult<double, double, DamageState>;
using Cz3dStep = StepResult<Vec3, Mat3, DamageState>;

/// Upper bound for the damage variable; keeps (1-d)^2 strictly positive.
inline constexpr double kMaxDamage = 1.0 - 1e-9;

/// Implicit return mapping for 1D elastoplasticity with Voce hardening.
///
/// Elastic predictor; when the trial yield function is positive the residuals
///
///   r1 = eps_p - eps_p^i - (xi_p - xi_p^i) sgn(sigma)
///   r2 = |sigma| - (sigma_y0 + q_p(xi_p))
///
/// are driven to zero by Newton's method on (eps_p, xi_p), starting from the
/// previous state. Converged when both updates fall below `cfg.tol`.
///
/// Throws NonConvergence when `cfg.max_iter` is exceeded.
PlasticStep solve_plastic_step(double eps_next, const PlasticState& state,
                               const PlasticityParams& p,
                               const SolverConfig& cfg = {});

/// Implicit integration of the 1D damage model, same structure as the
/// plasticity solver with unknowns (d, xi_d).
DamageStep solve_damage_step(double g_next, const DamageState& state,
                             const DamageParams& p,
                             const SolverConfig& cfg = {});

/// Implicit integration of the 3D cohesive zone; the damage drive is
/// (1-d) g^T K g and the tangent is the full 3x3 dt/dg.
Cz3dStep solve_cz3d_step(const GapVector& g_next, const DamageState& state,
                         const Cz3dParams& p, const SolverConfig& cfg = {});

// Explicit damage update. Hardening is lagged to the start of the step, so
// the damage follows in closed form from (1-d) K g^2 = Y0 + q_d(xi^i):
//
//   d = clamp(1 - (Y0 + q_d(xi^i)) / (K g^2), d^i, 1 - 1e-9)
//
// No iteration; accurate only for small steps.
DamageStep explicit_damage_step(double g_next, const DamageState& state,
                                const DamageParams& p);
Cz3dStep explicit_damage_step(const GapVector& g_next,
                              const DamageState& state, const Cz3dParams& p);

}  // namespace cml
