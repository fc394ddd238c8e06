#include "cml/material.hpp"

#include <cmath>
#include <string>

#include "cml/errors.hpp"

namespace cml {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw InvalidArgument(what);
}

}  // namespace

void PlasticityParams::validate() const {
  require(E > 0.0, "plasticity: E must be > 0");
  require(sigma_y0 > 0.0, "plasticity: sigma_y0 must be > 0");
  require(h1 >= 0.0, "plasticity: h1 must be >= 0");
  require(h2 >= 0.0, "plasticity: h2 must be >= 0");
}

void DamageParams::validate() const {
  require(K > 0.0, "damage: K must be > 0");
  require(Y0 > 0.0, "damage: Y0 must be > 0");
  require(h1 >= 0.0, "damage: h1 must be >= 0");
  require(h2 >= 0.0, "damage: h2 must be >= 0");
}

void Cz3dParams::validate() const {
  require(K_n > 0.0 && K_s1 > 0.0 && K_s2 > 0.0,
          "cz3d: stiffnesses must be > 0");
  require(Y0 > 0.0, "cz3d: Y0 must be > 0");
  require(h1 >= 0.0, "cz3d: h1 must be >= 0");
  require(h2 >= 0.0, "cz3d: h2 must be >= 0");
}

double voce_force(double xi, double h1, double h2) {
  return -h1 * std::expm1(-h2 * xi);
}

double voce_energy(double xi, double h1, double h2) {
  if (h2 == 0.0) return 0.0;
  return h1 * (xi + std::expm1(-h2 * xi) / h2);
}

double voce_slope(double xi, double h1, double h2) {
  return h1 * h2 * std::exp(-h2 * xi);
}

Response plastic_response(double eps, const PlasticState& state,
                          const PlasticityParams& p) {
  const double eps_e = eps - state.eps_p;
  Response r;
  r.force = p.E * eps_e;
  r.conjugate = voce_force(state.xi_p, p.h1, p.h2);
  r.psi_e = 0.5 * p.E * eps_e * eps_e;
  r.psi_h = voce_energy(state.xi_p, p.h1, p.h2);
  r.psi = r.psi_e + r.psi_h;
  return r;
}

double plastic_yield(double sigma, double q_p, const PlasticityParams& p) {
  return std::abs(sigma) - (p.sigma_y0 + q_p);
}

double plastic_trial_yield(double eps_next, const PlasticState& state,
                           const PlasticityParams& p) {
  return plastic_yield(p.E * (eps_next - state.eps_p),
                       voce_force(state.xi_p, p.h1, p.h2), p);
}

double plastic_tangent(const PlasticState& state_next,
                       const PlasticityParams& p, bool plastic_active) {
  if (!plastic_active) return p.E;
  const double H = voce_slope(state_next.xi_p, p.h1, p.h2);
  return p.E * (1.0 - p.E / (p.E + H));
}

Response damage_response(double g, const DamageState& state,
                         const DamageParams& p) {
  const double intact = 1.0 - state.d;
  Response r;
  r.force = intact * intact * p.K * g;
  // K g^2 is formed first so the result matches the 3D model bit for bit.
  const double kgg = p.K * g * g;
  r.damage_drive = intact * kgg;
  r.conjugate = voce_force(state.xi_d, p.h1, p.h2);
  r.psi_e = 0.5 * intact * intact * kgg;
  r.psi_h = voce_energy(state.xi_d, p.h1, p.h2);
  r.psi = r.psi_e + r.psi_h;
  return r;
}

double damage_yield(double Y, double q_d, const DamageParams& p) {
  return Y - (p.Y0 + q_d);
}

double damage_trial_yield(double g_next, const DamageState& state,
                          const DamageParams& p, DamageTrialForm form) {
  double drive = 0.0;
  switch (form) {
    case DamageTrialForm::Consistent:
      drive = (1.0 - state.d) * (p.K * g_next * g_next);
      break;
    case DamageTrialForm::NoDegradation:
      drive = p.K * g_next * g_next;
      break;
    case DamageTrialForm::Unsquared:
      drive = (1.0 - state.d) * p.K * g_next;
      break;
  }
  return damage_yield(drive, voce_force(state.xi_d, p.h1, p.h2), p);
}

double damage_tangent(const DamageState& state_next, double g_next,
                      const DamageParams& p, bool active) {
  const double intact = 1.0 - state_next.d;
  const double elastic = intact * intact * p.K;
  if (!active) return elastic;
  // (1-d) K g^2 = Y0 + q(d)  =>  dd/dg = 2 (1-d) K g / (K g^2 + q'(d))
  const double kg = p.K * g_next;
  const double denom = kg * g_next + voce_slope(state_next.xi_d, p.h1, p.h2);
  const double dd_dg = 2.0 * intact * kg / denom;
  return elastic - 2.0 * intact * kg * dd_dg;
}

double cz3d_quadratic(const GapVector& g, const Cz3dParams& p) {
  return p.K_s1 * g[0] * g[0] + p.K_s2 * g[1] * g[1] + p.K_n * g[2] * g[2];
}

Response3d cz3d_response(const GapVector& g, const DamageState& state,
                         const Cz3dParams& p) {
  const double intact = 1.0 - state.d;
  const double gkg = cz3d_quadratic(g, p);
  Response3d r;
  r.traction = (intact * intact * p.stiffness()).cwiseProduct(g);
  r.damage_drive = intact * gkg;
  r.conjugate = voce_force(state.xi_d, p.h1, p.h2);
  r.psi_e = 0.5 * intact * intact * gkg;
  r.psi_h = voce_energy(state.xi_d, p.h1, p.h2);
  r.psi = r.psi_e + r.psi_h;
  return r;
}

double cz3d_trial_yield(const GapVector& g_next, const DamageState& state,
                        const Cz3dParams& p) {
  return (1.0 - state.d) * cz3d_quadratic(g_next, p) -
         (p.Y0 + voce_force(state.xi_d, p.h1, p.h2));
}

Mat3 cz3d_tangent(const DamageState& state_next, const GapVector& g_next,
                  const Cz3dParams& p, bool active) {
  const double intact = 1.0 - state_next.d;
  const Vec3 k = p.stiffness();
  Mat3 C = (intact * intact * k).asDiagonal();
  if (!active) return C;
  const Vec3 kg = k.cwiseProduct(g_next);
  const double denom =
      cz3d_quadratic(g_next, p) + voce_slope(state_next.xi_d, p.h1, p.h2);
  const Vec3 dd_dg = 2.0 * intact * kg / denom;
  C -= 2.0 * intact * kg * dd_dg.transpose();
  return C;
}

double plastic_dissipation(const Response& at_end, const PlasticState& prev,
                           const PlasticState& next) {
  return at_end.force * (next.eps_p - prev.eps_p) -
         at_end.conjugate * (next.xi_p - prev.xi_p);
}

double damage_dissipation(const Response& at_end, const DamageState& prev,
                          const DamageState& next) {
  return at_end.damage_drive * (next.d - prev.d) -
         at_end.conjugate * (next.xi_d - prev.xi_d);
}

double cz3d_dissipation(const Response3d& at_end, const DamageState& prev,
                        const DamageState& next) {
  return at_end.damage_drive * (next.d - prev.d) -
         at_end.conjugate * (next.xi_d - prev.xi_d);
}

}  // namespace cml
