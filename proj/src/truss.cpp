#include "cml/truss.hpp"

#include <Eigen/LU>
#include <cmath>
#include <set>

#include "cml/errors.hpp"

namespace cml {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double Truss::length(const Element& e) const {
  const Node& a = nodes.at(static_cast<std::size_t>(e.n1));
  const Node& b = nodes.at(static_cast<std::size_t>(e.n2));
  return std::hypot(b.x - a.x, b.y - a.y);
}

void Truss::validate() const {
  const int n = static_cast<int>(nodes.size());
  if (n < 2 || elements.empty()) throw InvalidArgument("truss needs nodes and elements");
  for (const Element& e : elements) {
    if (e.n1 < 0 || e.n1 >= n || e.n2 < 0 || e.n2 >= n || e.n1 == e.n2) {
      throw InvalidArgument("truss element references an invalid node");
    }
    if (!(e.area > 0.0)) throw InvalidArgument("truss element area must be > 0");
    if (!(length(e) > 0.0)) throw InvalidArgument("truss element has zero length");
  }
  std::set<int> seen;
  for (const auto* group : {&fixed, &driven}) {
    for (const Constraint& c : *group) {
      if (c.node < 0 || c.node >= n || (c.dof != 0 && c.dof != 1)) {
        throw InvalidArgument("truss constraint references an invalid DOF");
      }
      if (!seen.insert(2 * c.node + c.dof).second) {
        throw InvalidArgument("truss DOF constrained twice");
      }
    }
  }
  if (fixed.empty()) throw InvalidArgument("truss needs at least one fixed DOF");
}

Truss cantilever_truss(int bays, double bay_width, double height, double chord_area,
                       double web_area, double peak_displacement) {
  if (bays < 1 || !(bay_width > 0.0) || !(height > 0.0)) {
    throw InvalidArgument("cantilever truss needs bays >= 1 and positive dimensions");
  }
  Truss t;
  // Node 2i is on the bottom chord, 2i+1 on the top chord.
  for (int i = 0; i <= bays; ++i) {
    t.nodes.push_back({i * bay_width, 0.0});
    t.nodes.push_back({i * bay_width, height});
  }
  for (int i = 0; i < bays; ++i) {
    const int b0 = 2 * i, t0 = 2 * i + 1, b1 = 2 * i + 2, t1 = 2 * i + 3;
    t.elements.push_back({b0, b1, chord_area});
    t.elements.push_back({t0, t1, chord_area});
    t.elements.push_back({b0, t1, web_area});
  }
  for (int i = 0; i <= bays; ++i) t.elements.push_back({2 * i, 2 * i + 1, web_area});

  t.fixed = {{0, 0, 0.0}, {0, 1, 0.0}, {1, 0, 0.0}, {1, 1, 0.0}};
  t.driven = {{2 * bays, 0, peak_displacement}, {2 * bays + 1, 0, peak_displacement}};
  t.validate();
  return t;
}

void FeConfig::validate() const {
  if (!(tol > 0.0)) throw InvalidArgument("fe: tol must be > 0");
  if (max_iter < 1) throw InvalidArgument("fe: max_iter must be >= 1");
  if (program.empty()) throw InvalidArgument("fe: load program is empty");
  for (const LoadPhase& p : program) {
    if (p.increments < 1) throw InvalidArgument("fe: increments must be >= 1");
  }
  if (program.front().control == LoadPhase::Control::Force) {
    throw InvalidArgument("fe: the first phase must be displacement controlled");
  }
}

std::vector<double> FeResult::support_reaction_x(const Truss& truss) const {
  std::vector<double> out;
  for (const FeStep& s : steps) {
    double sum = 0.0;
    for (const auto& c : truss.fixed) {
      if (c.dof == 0) sum += s.reaction[2 * c.node];
    }
    out.push_back(sum);
  }
  return out;
}

namespace {

struct Geometry {
  std::vector<Eigen::Vector2d> dir;
  std::vector<double> length;
};

Geometry geometry(const Truss& t) {
  Geometry g;
  for (const auto& e : t.elements) {
    const auto& a = t.nodes[static_cast<std::size_t>(e.n1)];
    const auto& b = t.nodes[static_cast<std::size_t>(e.n2)];
    const double L = t.length(e);
    g.length.push_back(L);
    g.dir.emplace_back((b.x - a.x) / L, (b.y - a.y) / L);
  }
  return g;
}

}  // namespace

FeResult fe_solve(const Truss& truss, MaterialBackend& backend, const FeConfig& cfg) {
  truss.validate();
  cfg.validate();
  if (backend.family() != ModelFamily::Plasticity) {
    throw InvalidArgument("truss elements need a 1D plasticity backend");
  }
  const int ndof = truss.n_dofs();
  const std::size_t ne = truss.elements.size();
  const Geometry geo = geometry(truss);

  VectorXd u = VectorXd::Zero(ndof);
  std::vector<PointState> committed(ne);
  std::vector<PointState> trial(ne);
  std::vector<double> stress(ne, 0.0);
  VectorXd reaction = VectorXd::Zero(ndof);

  FeResult result;
  result.steps.push_back({0, cfg.program.front().from, u, reaction, stress, committed, 0, 0.0});

  // Assembles internal forces and, optionally, the tangent at displacement u.
  MatrixXd K(ndof, ndof);
  VectorXd f_int(ndof);
  const auto assemble = [&](bool tangent) {
    f_int.setZero();
    if (tangent) K.setZero();
    for (std::size_t e = 0; e < ne; ++e) {
      const auto& el = truss.elements[e];
      const Eigen::Vector2d& d = geo.dir[e];
      const int i = 2 * el.n1, j = 2 * el.n2;
      const double strain = d.dot(u.segment<2>(j) - u.segment<2>(i)) / geo.length[e];
      const PointResult r = backend.step(Vec3(strain, 0.0, 0.0), committed[e], tangent);
      trial[e] = r.state;
      stress[e] = r.force[0];
      const Eigen::Vector2d f = r.force[0] * el.area * d;
      f_int.segment<2>(i) -= f;
      f_int.segment<2>(j) += f;
      if (tangent) {
        const Eigen::Matrix2d k = r.tangent(0, 0) * el.area / geo.length[e] * d * d.transpose();
        K.block<2, 2>(i, i) += k;
        K.block<2, 2>(j, j) += k;
        K.block<2, 2>(i, j) -= k;
        K.block<2, 2>(j, i) -= k;
      }
    }
  };

  VectorXd reference_force = VectorXd::Zero(ndof);
  for (std::size_t ph = 0; ph < cfg.program.size(); ++ph) {
    const LoadPhase& phase = cfg.program[ph];
    const bool force_ctrl = phase.control == LoadPhase::Control::Force;
    if (force_ctrl) {
      reference_force.setZero();
      for (const auto& c : truss.driven) {
        reference_force[2 * c.node + c.dof] = reaction[2 * c.node + c.dof];
      }
    }
    std::vector<char> constrained(static_cast<std::size_t>(ndof), 0);
    for (const auto& c : truss.fixed) constrained[static_cast<std::size_t>(2 * c.node + c.dof)] = 1;
    if (!force_ctrl) {
      for (const auto& c : truss.driven) constrained[static_cast<std::size_t>(2 * c.node + c.dof)] = 1;
    }
    std::vector<int> free;
    for (int k = 0; k < ndof; ++k) {
      if (!constrained[static_cast<std::size_t>(k)]) free.push_back(k);
    }
    const auto nf = static_cast<Eigen::Index>(free.size());

    for (int inc = 1; inc <= phase.increments; ++inc) {
      const double factor = phase.from + (phase.to - phase.from) * inc / phase.increments;
      VectorXd f_ext = VectorXd::Zero(ndof);
      if (force_ctrl) {
        f_ext = factor * reference_force;
      } else {
        for (const auto& c : truss.driven) u[2 * c.node + c.dof] = factor * c.scale;
      }
      for (const auto& c : truss.fixed) u[2 * c.node + c.dof] = 0.0;

      int iter = 0;
      double res = 0.0;
      for (;;) {
        assemble(true);
        VectorXd r(nf);
        for (Eigen::Index a = 0; a < nf; ++a) r[a] = f_int[free[a]] - f_ext[free[a]];
        res = (nf > 0 ? r.norm() : 0.0) / std::max(1.0, f_int.norm());
        if (res <= cfg.tol) break;
        if (iter == cfg.max_iter) {
          throw GlobalNonConvergence("global Newton did not converge in phase " +
                                         std::to_string(ph) + ", increment " +
                                         std::to_string(inc) + " (scaled residual " +
                                         std::to_string(res) + ")",
                                     result.steps.size(), res);
        }
        MatrixXd Kff(nf, nf);
        for (Eigen::Index a = 0; a < nf; ++a) {
          for (Eigen::Index b = 0; b < nf; ++b) Kff(a, b) = K(free[a], free[b]);
        }
        const Eigen::FullPivLU<MatrixXd> lu(Kff);
        if (!lu.isInvertible()) {
          throw SingularSystem("singular structural tangent in phase " + std::to_string(ph) +
                               ", increment " + std::to_string(inc));
        }
        const VectorXd du = lu.solve(-r);
        for (Eigen::Index a = 0; a < nf; ++a) u[free[a]] += du[a];
        ++iter;
      }
      committed = trial;
      reaction = f_int - f_ext;
      for (int k : free) reaction[k] = 0.0;
      result.steps.push_back({static_cast<int>(ph), factor, u, reaction, stress, committed, iter, res});
    }
  }
  return result;
}

ErrorStats compare_histories(const std::vector<double>& test, const std::vector<double>& ref) {
  if (test.size() != ref.size()) {
    throw LengthMismatch("reaction histories have " + std::to_string(test.size()) + " and " +
                         std::to_string(ref.size()) + " entries");
  }
  ErrorStats st;
  double sum = 0.0;
  for (std::size_t k = 0; k < ref.size(); ++k) {
    if (std::abs(ref[k]) < 1e-6) {
      ++st.n_excluded;
      continue;
    }
    const double e = std::abs(test[k] - ref[k]) / std::abs(ref[k]) * 100.0;
    st.errors_pct.push_back(e);
    st.indices.push_back(k);
    sum += e;
    st.max_pct = std::max(st.max_pct, e);
  }
  if (!st.errors_pct.empty()) st.mean_pct = sum / static_cast<double>(st.errors_pct.size());
  return st;
}

}  // namespace cml
