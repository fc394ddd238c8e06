#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "cml/errors.hpp"
#include "cml/truss.hpp"
#include "oracles.hpp"

using namespace cml;
using doctest::Approx;

namespace {

const MaterialSet kMat{};

// Horizontal bar of length 1 and area 1, clamped at node 0, pulled at node 1.
// Node 1 is held vertically so the system has no mechanism.
Truss single_bar() {
  Truss t;
  t.nodes = {{0.0, 0.0}, {1.0, 0.0}};
  t.elements = {{0, 1, 1.0}};
  t.fixed = {{0, 0}, {0, 1}, {1, 1}};
  t.driven = {{1, 0, 1.0}};
  return t;
}

FeConfig displacement_to(double peak, int increments = 10) {
  FeConfig c;
  c.program = {{LoadPhase::Control::Displacement, 0.0, peak, increments}};
  return c;
}

MaterialSet elastic_only() {
  MaterialSet m;
  m.plastic.sigma_y0 = 1e6;
  return m;
}

// Direct linear stiffness solve with E A / L bars, independent of fe_solve.
Eigen::VectorXd linear_solution(const Truss& t, double E, double factor) {
  const int n = t.n_dofs();
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
  for (const auto& e : t.elements) {
    const double dx = t.nodes[e.n2].x - t.nodes[e.n1].x;
    const double dy = t.nodes[e.n2].y - t.nodes[e.n1].y;
    const double L = std::hypot(dx, dy);
    const double c = dx / L, s = dy / L;
    Eigen::Vector4d b(-c, -s, c, s);
    const Eigen::Matrix4d k = E * e.area / L * b * b.transpose();
    const int idx[4] = {2 * e.n1, 2 * e.n1 + 1, 2 * e.n2, 2 * e.n2 + 1};
    for (int a = 0; a < 4; ++a)
      for (int bb = 0; bb < 4; ++bb) K(idx[a], idx[bb]) += k(a, bb);
  }
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  std::vector<bool> known(static_cast<std::size_t>(n), false);
  for (const auto& c : t.fixed) known[static_cast<std::size_t>(2 * c.node + c.dof)] = true;
  for (const auto& c : t.driven) {
    known[static_cast<std::size_t>(2 * c.node + c.dof)] = true;
    u[2 * c.node + c.dof] = factor * c.scale;
  }
  std::vector<int> fr;
  for (int k = 0; k < n; ++k)
    if (!known[static_cast<std::size_t>(k)]) fr.push_back(k);
  const auto m = static_cast<Eigen::Index>(fr.size());
  Eigen::MatrixXd Kff(m, m);
  Eigen::VectorXd rhs(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    rhs[a] = -(K.row(fr[a]) * u)(0);
    for (Eigen::Index b = 0; b < m; ++b) Kff(a, b) = K(fr[a], fr[b]);
  }
  const Eigen::VectorXd uf = Kff.fullPivLu().solve(rhs);
  for (Eigen::Index a = 0; a < m; ++a) u[fr[a]] = uf[a];
  return u;
}

}  // namespace

TEST_CASE("single bar statics") {
  auto be = make_implicit_backend(ModelFamily::Plasticity, kMat);
  const Truss bar = single_bar();

  const FeResult el = fe_solve(bar, *be, displacement_to(0.1));
  REQUIRE(el.steps.size() == 11);
  CHECK(el.steps.back().stress[0] == Approx(0.3).epsilon(1e-12));
  CHECK(el.steps.back().reaction[2] == Approx(0.3).epsilon(1e-12));
  CHECK(el.support_reaction_x(bar).back() == Approx(-0.3).epsilon(1e-12));

  const FeResult pl = fe_solve(bar, *be, displacement_to(0.5, 50));
  double ep = 0.0, xi = 0.0;
  for (int k = 1; k <= 50; ++k) {
    const auto o = oracle::plastic_step(0.5 * k / 50.0, ep, xi);
    ep = o.eps_p;
    xi = o.xi_p;
  }
  CHECK(pl.steps.back().stress[0] == Approx(0.9385).epsilon(1e-4));
  CHECK(pl.steps.back().reaction[2] == Approx(0.9385).epsilon(1e-4));
  CHECK(pl.steps.back().state[0].alpha == Approx(ep).epsilon(1e-9));
  CHECK(pl.steps.back().state[0].xi == Approx(xi).epsilon(1e-9));
}

TEST_CASE("zero load program") {
  auto be = make_implicit_backend(ModelFamily::Plasticity, kMat);
  const Truss t = cantilever_truss(3, 1.0, 1.0, 1.0, 1.0, 1.0);
  const FeResult r = fe_solve(t, *be, displacement_to(0.0, 5));
  for (const auto& s : r.steps) {
    CHECK(s.displacement.isZero(0.0));
    CHECK(s.reaction.isZero(0.0));
  }
}

TEST_CASE("linear-elastic limit matches the closed-form solution") {
  auto be = make_implicit_backend(ModelFamily::Plasticity, elastic_only());

  // Two bars in series with different areas: the middle node sits where the
  // two axial forces balance.
  Truss series;
  series.nodes = {{0, 0}, {1, 0}, {3, 0}};
  series.elements = {{0, 1, 2.0}, {1, 2, 1.0}};
  series.fixed = {{0, 0}, {0, 1}, {1, 1}, {2, 1}};
  series.driven = {{2, 0, 0.3}};
  const FeResult s = fe_solve(series, *be, displacement_to(1.0, 4));
  const double k1 = 3.0 * 2.0 / 1.0, k2 = 3.0 * 1.0 / 2.0;
  CHECK(s.steps.back().displacement[2] == Approx(0.3 * k2 / (k1 + k2)).epsilon(1e-12));
  CHECK(s.steps.back().reaction[4] == Approx(0.3 * k1 * k2 / (k1 + k2)).epsilon(1e-12));

  for (int bays : {1, 3, 5}) {
    const Truss t = cantilever_truss(bays, 1.0, 0.8, 1.5, 0.7, 0.05);
    const FeResult r = fe_solve(t, *be, displacement_to(1.0, 3));
    const Eigen::VectorXd u = linear_solution(t, 3.0, 1.0);
    CHECK((r.steps.back().displacement - u).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("global equilibrium at every converged step (property)") {
  auto be = make_implicit_backend(ModelFamily::Plasticity, kMat);
  const Truss t = cantilever_truss(4, 1.0, 1.0, 1.0, 1.0, 1.2);
  FeConfig cfg;
  cfg.program = {{LoadPhase::Control::Displacement, 0.0, 1.0, 20},
                 {LoadPhase::Control::Force, 1.0, 0.0, 20}};
  const FeResult r = fe_solve(t, *be, cfg);
  REQUIRE(r.steps.size() == 41);
  const Eigen::VectorXd end_reaction = r.steps[20].reaction;
  for (const auto& s : r.steps) {
    CHECK(s.residual <= cfg.tol);
    double fx = 0.0, fy = 0.0;
    for (int n = 0; n < static_cast<int>(t.nodes.size()); ++n) {
      fx += s.reaction[2 * n];
      fy += s.reaction[2 * n + 1];
    }
    if (s.phase == 1) {
      // Released DOFs carry factor times the end-of-loading reaction as load.
      for (const auto& c : t.driven) fx += s.factor * end_reaction[2 * c.node + c.dof];
    }
    // Free DOFs carry at most the Newton tolerance on the scaled residual.
    CHECK(std::abs(fx) <= 1e-7);
    CHECK(std::abs(fy) <= 1e-7);
    for (std::size_t e = 0; e < t.elements.size(); ++e) {
      CHECK(s.state[e].xi >= std::abs(s.state[e].alpha) - 1e-12);
    }
  }
}

TEST_CASE("loading and unloading leaves a residual displacement") {
  auto be = make_implicit_backend(ModelFamily::Plasticity, kMat);
  const Truss bar = single_bar();
  FeConfig cfg;
  cfg.program = {{LoadPhase::Control::Displacement, 0.0, 0.5, 50},
                 {LoadPhase::Control::Force, 1.0, 0.0, 50}};
  const FeResult r = fe_solve(bar, *be, cfg);
  const FeStep& end = r.steps.back();
  CHECK(end.reaction.cwiseAbs().maxCoeff() <= 1e-8);
  CHECK(end.stress[0] == Approx(0.0).scale(1.0));
  CHECK(end.displacement[2] == Approx(r.steps[50].state[0].alpha).epsilon(1e-9));
  CHECK(end.displacement[2] > 0.1);

  const Truss t = cantilever_truss(4, 1.0, 1.0, 1.0, 1.0, 1.2);
  const FeResult c = fe_solve(t, *be, FeConfig{});
  const auto rx = c.support_reaction_x(t);
  CHECK(std::abs(rx.back()) <= 1e-8);
  CHECK(std::abs(rx[100]) > 1.0);
  CHECK(c.steps.back().displacement.cwiseAbs().maxCoeff() > 0.1);
}

TEST_CASE("failure modes") {
  auto be = make_implicit_backend(ModelFamily::Plasticity, kMat);
  Truss series;
  series.nodes = {{0, 0}, {1, 0}, {2, 0}};
  series.elements = {{0, 1, 1.0}, {1, 2, 2.0}};
  series.fixed = {{0, 0}, {0, 1}, {2, 1}};
  series.driven = {{2, 0, 1.0}};
  // The middle node has no vertical stiffness: a mechanism.
  CHECK_THROWS_AS(fe_solve(series, *be, displacement_to(0.1)), SingularSystem);

  series.fixed.push_back({1, 1});
  FeConfig tight = displacement_to(0.5, 1);
  tight.max_iter = 1;
  CHECK_THROWS_AS(fe_solve(series, *be, tight), GlobalNonConvergence);
  tight.max_iter = 25;
  CHECK_NOTHROW(fe_solve(series, *be, tight));

  auto dmg = make_implicit_backend(ModelFamily::Damage, kMat);
  CHECK_THROWS_AS(fe_solve(single_bar(), *dmg, displacement_to(0.1)), InvalidArgument);

  Truss dangling = single_bar();
  dangling.elements.push_back({0, 7, 1.0});
  CHECK_THROWS_AS(fe_solve(dangling, *be), InvalidArgument);
  Truss twice = single_bar();
  twice.driven.push_back({0, 0, 1.0});
  CHECK_THROWS_AS(twice.validate(), InvalidArgument);
  Truss zero_area = single_bar();
  zero_area.elements[0].area = 0.0;
  CHECK_THROWS_AS(zero_area.validate(), InvalidArgument);

  FeConfig force_first;
  force_first.program = {{LoadPhase::Control::Force, 0.0, 1.0, 10}};
  CHECK_THROWS_AS(force_first.validate(), InvalidArgument);

  CHECK(compare_histories({1.01, 0.0}, {1.0, 0.0}).mean_pct == Approx(1.0));
  CHECK_THROWS_AS(compare_histories({1.0}, {1.0, 2.0}), LengthMismatch);
}
