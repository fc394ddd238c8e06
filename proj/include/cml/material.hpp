#pragma once

#include <Eigen/Core>

namespace cml {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Gap vector ordered as (g_s1, g_s2, g_n).
using GapVector = Vec3;

/// 1D elastoplasticity with Voce hardening. Defaults are the reference
/// material used throughout the test suite.
struct PlasticityParams {
  double E = 3.0;         // MPa
  double sigma_y0 = 0.6;  // MPa
  double h1 = 0.4;        // MPa
  double h2 = 10.0;       // -

  void validate() const;
};

/// 1D interface damage with exponential damage hardening.
struct DamageParams {
  double K = 5.0;    // MPa/mm
  double Y0 = 0.1;   // MPa mm
  double h1 = 2.0;   // MPa mm
  double h2 = 100.0;  // 1/mm

  void validate() const;
};

/// 3D cohesive zone with a diagonal (anisotropic) stiffness tensor.
struct Cz3dParams {
  double K_n = 5.0;
  double K_s1 = 0.5;
  double K_s2 = 2.0;
  double Y0 = 0.1;
  double h1 = 2.0;
  double h2 = 100.0;

  void validate() const;
  /// diag(K_s1, K_s2, K_n), matching the GapVector ordering.
  Vec3 stiffness() const { return {K_s1, K_s2, K_n}; }
  /// The 1D model seen along the normal direction.
  DamageParams normal() const { return {K_n, Y0, h1, h2}; }
};

struct PlasticState {
  double eps_p = 0.0;
  double xi_p = 0.0;

  bool operator==(const PlasticState&) const = default;
};

struct DamageState {
  double d = 0.0;
  double xi_d = 0.0;

  bool operator==(const DamageState&) const = default;
};

/// Energies and conjugate forces of a 1D model at one material point.
///
/// For plasticity `force` is the stress and `damage_drive` is zero; for the
/// damage model `force` is the traction T and `damage_drive` is Y = -dpsi/dd.
struct Response {
  double psi = 0.0;
  double psi_e = 0.0;
  double psi_h = 0.0;  // hardening part (psi_p or psi_d)
  double force = 0.0;
  double conjugate = 0.0;  // q_p or q_d
  double damage_drive = 0.0;
};

struct Response3d {
  double psi = 0.0;
  double psi_e = 0.0;
  double psi_h = 0.0;
  Vec3 traction = Vec3::Zero();
  double conjugate = 0.0;
  double damage_drive = 0.0;
};

/// Selects which trial damage criterion is evaluated. `Consistent` uses the
/// thermodynamic damage drive (1-d) K g^2 and is what every solver and loss
/// uses by default. The other two forms exist only to reproduce the
/// alternative statements of the criterion.
enum class DamageTrialForm {
  Consistent,     // (1-d) K g^2
  NoDegradation,  // K g^2
  Unsquared,      // (1-d) K g
};

// Voce-type saturating hardening shared by all three models.
double voce_force(double xi, double h1, double h2);   // h1 (1 - e^{-h2 xi})
double voce_energy(double xi, double h1, double h2);  // h1 (xi + (e^{-h2 xi}-1)/h2)
double voce_slope(double xi, double h1, double h2);   // h1 h2 e^{-h2 xi}

/// sgn with sgn(0) = +1.
inline double sign_of(double x) { return x < 0.0 ? -1.0 : 1.0; }

Response plastic_response(double eps, const PlasticState& state,
                          const PlasticityParams& p);

/// |sigma| - (sigma_y0 + q_p).
double plastic_yield(double sigma, double q_p, const PlasticityParams& p);

/// Yield function evaluated with the history variables frozen at the start of
/// the step.
double plastic_trial_yield(double eps_next, const PlasticState& state,
                           const PlasticityParams& p);

/// Elastic modulus when inactive, consistent elastoplastic modulus otherwise.
double plastic_tangent(const PlasticState& state_next,
                       const PlasticityParams& p, bool plastic_active);

Response damage_response(double g, const DamageState& state,
                         const DamageParams& p);

/// Y - (Y0 + q_d).
double damage_yield(double Y, double q_d, const DamageParams& p);

double damage_trial_yield(double g_next, const DamageState& state,
                          const DamageParams& p,
                          DamageTrialForm form = DamageTrialForm::Consistent);

/// dT/dg. The active branch includes dd/dg obtained by differentiating the
/// consistency condition (1-d) K g^2 = Y0 + q_d(d).
double damage_tangent(const DamageState& state_next, double g_next,
                      const DamageParams& p, bool active);

Response3d cz3d_response(const GapVector& g, const DamageState& state,
                         const Cz3dParams& p);

/// g^T K g.
double cz3d_quadratic(const GapVector& g, const Cz3dParams& p);

double cz3d_trial_yield(const GapVector& g_next, const DamageState& state,
                        const Cz3dParams& p);

/// dt/dg, 3x3. Same construction as damage_tangent.
Mat3 cz3d_tangent(const DamageState& state_next, const GapVector& g_next,
                  const Cz3dParams& p, bool active);

// Dissipated energy over one step, D = F . d(alpha) - q . d(xi), evaluated
// with the conjugate forces at the end of the step (backward rule, the same
// rule the implicit integrators enforce). `at_end` is the response at the
// end-of-step load and state.
double plastic_dissipation(const Response& at_end, const PlasticState& prev,
                           const PlasticState& next);
double damage_dissipation(const Response& at_end, const DamageState& prev,
                          const DamageState& next);
double cz3d_dissipation(const Response3d& at_end, const DamageState& prev,
                        const DamageState& next);

}  // namespace cml
