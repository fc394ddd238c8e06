#include "cml/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cml/errors.hpp"

namespace cml {

void SolverConfig::validate() const {
  if (!(tol > 0.0)) throw InvalidArgument("solver: tol must be > 0");
  if (max_iter < 1) throw InvalidArgument("solver: max_iter must be >= 1");
}

PlasticStep solve_plastic_step(double eps_next, const PlasticState& state,
                               const PlasticityParams& p,
                               const SolverConfig& cfg) {
  PlasticStep out;
  if (plastic_trial_yield(eps_next, state, p) <= 0.0) {
    out.state_next = state;
    out.force = p.E * (eps_next - state.eps_p);
    out.tangent = p.E;
    out.psi = plastic_response(eps_next, state, p).psi;
    return out;
  }

  double eps_p = state.eps_p;
  double xi = state.xi_p;
  double residual = 0.0;
  bool converged = false;
  int k = 0;
  while (k < cfg.max_iter) {
    ++k;
    const double sigma = p.E * (eps_next - eps_p);
    const double s = sign_of(sigma);
    const double r1 = eps_p - state.eps_p - (xi - state.xi_p) * s;
    const double r2 = std::abs(sigma) - (p.sigma_y0 + voce_force(xi, p.h1, p.h2));
    residual = std::hypot(r1, r2);

    // K_p = d(r1, r2)/d(eps_p, xi_p); sgn(sigma) is piecewise constant.
    const double a = 1.0, b = -s;
    const double c = -p.E * s, d = -voce_slope(xi, p.h1, p.h2);
    const double det = a * d - b * c;
    const double d_eps = -(d * r1 - b * r2) / det;
    const double d_xi = -(-c * r1 + a * r2) / det;
    eps_p += d_eps;
    xi += d_xi;
    if (std::abs(d_eps) <= cfg.tol && std::abs(d_xi) <= cfg.tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw NonConvergence("plastic return mapping did not converge (residual " +
                             std::to_string(residual) + ")",
                         residual, k);
  }

  out.active = true;
  out.iterations = k;
  out.state_next = {eps_p, xi};
  out.delta_lambda = xi - state.xi_p;
  out.force = p.E * (eps_next - eps_p);
  out.tangent = plastic_tangent(out.state_next, p, true);
  out.psi = plastic_response(eps_next, out.state_next, p).psi;
  return out;
}

namespace {

struct DamageSolve {
  DamageState state;
  int iterations = 0;
  bool saturated = false;
};

// Newton on r1 = d - d^i - (xi - xi^i), r2 = (1-d) q - (Y0 + q_d(xi)), where
// q = K g^2 (1D) or g^T K g (3D). Only called when the trial yield is positive.
DamageSolve solve_damage_consistency(double quad, const DamageState& state,
                                     double Y0, double h1, double h2,
                                     const SolverConfig& cfg) {
  double d = state.d;
  double xi = state.xi_d;
  double residual = 0.0;
  int k = 0;
  while (k < cfg.max_iter) {
    ++k;
    const double r1 = d - state.d - (xi - state.xi_d);
    const double r2 = (1.0 - d) * quad - (Y0 + voce_force(xi, h1, h2));
    residual = std::hypot(r1, r2);

    const double a = 1.0, b = -1.0;
    const double c = -quad, e = -voce_slope(xi, h1, h2);
    const double det = a * e - b * c;
    const double d_d = -(e * r1 - b * r2) / det;
    const double d_xi = -(-c * r1 + a * r2) / det;
    d += d_d;
    xi += d_xi;
    if (d >= kMaxDamage) {
      return {{kMaxDamage, state.xi_d + (kMaxDamage - state.d)}, k, true};
    }
    if (std::abs(d_d) <= cfg.tol && std::abs(d_xi) <= cfg.tol) {
      return {{d, xi}, k, false};
    }
  }
  throw NonConvergence("damage return mapping did not converge (residual " +
                           std::to_string(residual) + ")",
                       residual, k);
}

}  // namespace

DamageStep solve_damage_step(double g_next, const DamageState& state,
                             const DamageParams& p, const SolverConfig& cfg) {
  DamageStep out;
  if (damage_trial_yield(g_next, state, p) <= 0.0) {
    out.state_next = state;
  } else {
    const DamageSolve s =
        solve_damage_consistency(p.K * g_next * g_next, state, p.Y0, p.h1, p.h2, cfg);
    out.state_next = s.state;
    out.iterations = s.iterations;
    out.saturated = s.saturated;
    out.active = true;
    out.delta_lambda = s.state.xi_d - state.xi_d;
  }
  const Response r = damage_response(g_next, out.state_next, p);
  out.force = r.force;
  out.psi = r.psi;
  out.tangent = damage_tangent(out.state_next, g_next, p, out.active && !out.saturated);
  return out;
}

Cz3dStep solve_cz3d_step(const GapVector& g_next, const DamageState& state,
                         const Cz3dParams& p, const SolverConfig& cfg) {
  Cz3dStep out;
  if (cz3d_trial_yield(g_next, state, p) <= 0.0) {
    out.state_next = state;
  } else {
    const DamageSolve s = solve_damage_consistency(cz3d_quadratic(g_next, p),
                                                   state, p.Y0, p.h1, p.h2, cfg);
    out.state_next = s.state;
    out.iterations = s.iterations;
    out.saturated = s.saturated;
    out.active = true;
    out.delta_lambda = s.state.xi_d - state.xi_d;
  }
  const Response3d r = cz3d_response(g_next, out.state_next, p);
  out.force = r.traction;
  out.psi = r.psi;
  out.tangent = cz3d_tangent(out.state_next, g_next, p, out.active && !out.saturated);
  return out;
}

namespace {

// Closed-form update shared by the 1D and 3D explicit schemes. Returns the
// new damage and whether the unclamped closed form was used.
std::pair<double, bool> explicit_damage(double quad, const DamageState& state,
                                        double Y0, double h1, double h2) {
  const double threshold = Y0 + voce_force(state.xi_d, h1, h2);
  const double d = 1.0 - threshold / quad;
  if (d <= state.d) return {state.d, false};
  if (d >= kMaxDamage) return {kMaxDamage, false};
  return {d, true};
}

}  // namespace

DamageStep explicit_damage_step(double g_next, const DamageState& state,
                                const DamageParams& p) {
  DamageStep out;
  out.state_next = state;
  bool smooth = false;
  if (damage_trial_yield(g_next, state, p) > 0.0) {
    const auto [d, interior] =
        explicit_damage(p.K * g_next * g_next, state, p.Y0, p.h1, p.h2);
    out.state_next = {d, state.xi_d + (d - state.d)};
    out.active = true;
    out.saturated = d >= kMaxDamage;
    out.delta_lambda = d - state.d;
    smooth = interior;
  }
  const Response r = damage_response(g_next, out.state_next, p);
  out.force = r.force;
  out.psi = r.psi;
  const double intact = 1.0 - out.state_next.d;
  // With (1-d) = c / (K g^2) the traction is c^2 / (K g^3), so dT/dg = -3 (1-d)^2 K.
  out.tangent = intact * intact * p.K * (smooth ? -3.0 : 1.0);
  return out;
}

Cz3dStep explicit_damage_step(const GapVector& g_next, const DamageState& state,
                              const Cz3dParams& p) {
  Cz3dStep out;
  out.state_next = state;
  bool smooth = false;
  const double quad = cz3d_quadratic(g_next, p);
  if (cz3d_trial_yield(g_next, state, p) > 0.0) {
    const auto [d, interior] = explicit_damage(quad, state, p.Y0, p.h1, p.h2);
    out.state_next = {d, state.xi_d + (d - state.d)};
    out.active = true;
    out.saturated = d >= kMaxDamage;
    out.delta_lambda = d - state.d;
    smooth = interior;
  }
  const Response3d r = cz3d_response(g_next, out.state_next, p);
  out.force = r.traction;
  out.psi = r.psi;
  const double intact = 1.0 - out.state_next.d;
  const Vec3 k = p.stiffness();
  out.tangent = (intact * intact * k).asDiagonal();
  if (smooth) {
    const Vec3 kg = k.cwiseProduct(g_next);
    out.tangent -= 4.0 * intact * intact / quad * kg * kg.transpose();
  }
  return out;
}

}  // namespace cml
