#include "cml/pinn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cml/errors.hpp"
#include "cml/solvers.hpp"

namespace cml {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;

ModelFamily parse_family(const std::string& name) {
  if (name == "plasticity") return ModelFamily::Plasticity;
  if (name == "damage") return ModelFamily::Damage;
  if (name == "cz3d") return ModelFamily::Cz3d;
  throw UnknownKind("unknown model family '" + name +
                    "' (expected plasticity, damage or cz3d)");
}

std::string to_string(ModelFamily family) {
  switch (family) {
    case ModelFamily::Plasticity: return "plasticity";
    case ModelFamily::Damage: return "damage";
    case ModelFamily::Cz3d: return "cz3d";
  }
  throw UnknownKind("unknown model family");
}

int load_dim(ModelFamily family) { return family == ModelFamily::Cz3d ? 3 : 1; }

Task parse_task(const std::string& name) {
  if (name == "plasticity") return Task::Plasticity;
  if (name == "damage") return Task::Damage;
  if (name == "cz3d") return Task::Cz3d;
  if (name == "data_driven" || name == "data-driven") return Task::DataDriven;
  throw UnknownKind("unknown task '" + name +
                    "' (expected plasticity, damage, cz3d or data_driven)");
}

std::string to_string(Task task) {
  switch (task) {
    case Task::Plasticity: return "plasticity";
    case Task::Damage: return "damage";
    case Task::Cz3d: return "cz3d";
    case Task::DataDriven: return "data_driven";
  }
  throw UnknownKind("unknown task");
}

std::vector<double> Range::values() const {
  if (!(step > 0.0) || !(end >= begin) || !std::isfinite(begin) || !std::isfinite(end)) {
    throw EmptyRange("range needs step > 0 and end >= begin");
  }
  // Integer indexing avoids accumulating the step.
  const auto n = static_cast<long>(std::floor((end - begin) / step + 1e-6));
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(n + 1));
  for (long k = 0; k <= n; ++k) v.push_back(begin + static_cast<double>(k) * step);
  return v;
}

CollocationSet gen_collocation_plastic(const Range& eps, const Range& eps_p,
                                       const Range& xi_p) {
  const auto e = eps.values();
  const auto ep = eps_p.values();
  const auto xi = xi_p.values();
  std::vector<double> flat;
  for (double el : e) {
    for (double pj : ep) {
      for (double xk : xi) {
        if (xk >= pj - 1e-12) {
          flat.insert(flat.end(), {el, pj, xk});
        }
      }
    }
  }
  if (flat.empty()) throw EmptyRange("plastic collocation set is empty");
  CollocationSet out;
  out.family = ModelFamily::Plasticity;
  out.inputs = Eigen::Map<MatrixXd>(flat.data(), 3, static_cast<Eigen::Index>(flat.size() / 3));
  return out;
}

CollocationSet gen_collocation_damage(const Range& g, const Range& d) {
  const auto gv = g.values();
  const auto dv = d.values();
  CollocationSet out;
  out.family = ModelFamily::Damage;
  out.inputs.resize(3, static_cast<Eigen::Index>(gv.size() * dv.size()));
  Eigen::Index n = 0;
  for (double gl : gv) {
    for (double dj : dv) {
      out.inputs.col(n++) << gl, dj, dj;
    }
  }
  return out;
}

CollocationSet gen_collocation_cz3d(const Range& g_s1, const Range& g_s2,
                                    const Range& g_n, const Range& d) {
  const auto a = g_s1.values();
  const auto b = g_s2.values();
  const auto c = g_n.values();
  const auto dv = d.values();
  CollocationSet out;
  out.family = ModelFamily::Cz3d;
  out.inputs.resize(5, static_cast<Eigen::Index>(a.size() * b.size() * c.size() * dv.size()));
  Eigen::Index n = 0;
  for (double x : a) {
    for (double y : b) {
      for (double z : c) {
        for (double dj : dv) out.inputs.col(n++) << x, y, z, dj, dj;
      }
    }
  }
  return out;
}

void LossWeights::validate() const {
  for (double w : {ue, ux, ev, yl, ke, ky}) {
    if (!(w >= 0.0)) throw InvalidArgument("loss weights must be >= 0");
  }
}

namespace {

struct Switch {
  const SwitchOptions& o;

  double relu(double x) const { return o.smooth ? x * sigmoid(o.R * x) : (x > 0.0 ? x : 0.0); }
  double relu_prime(double x) const {
    if (!o.smooth) return x > 0.0 ? 1.0 : 0.0;
    const double s = sigmoid(o.R * x);
    return s + o.R * x * s * (1.0 - s);
  }
  double sgn(double x) const {
    if (!o.smooth) return sign_of(x);
    const double s = sigmoid(o.R * x);
    return o.symmetric_sign ? 2.0 * s - 1.0 : s;
  }
  double sgn_prime(double x) const {
    if (!o.smooth) return 0.0;
    const double s = sigmoid(o.R * x);
    return (o.symmetric_sign ? 2.0 : 1.0) * o.R * s * (1.0 - s);
  }
};

// Running sums of the six residual families plus per-row output gradients.
class LossAccumulator {
 public:
  LossAccumulator(Eigen::Index n, const LossWeights& w, OutputGradients* grads)
      : n_(static_cast<double>(n)), w_(w), grads_(grads) {
    if (grads_) {
      grads_->state.setZero(n);
      grads_->hardening.setZero(n);
    }
  }

  // Adds r^2 to `term` and w * 2/n * r * dr/d(out) to the gradients.
  void add(double LossTerms::*term, double weight, Eigen::Index j, double r,
           double dr_dstate, double dr_dxi) {
    sums_.*term += r * r;
    if (grads_) {
      const double c = weight * 2.0 / n_ * r;
      grads_->state[j] += c * dr_dstate;
      grads_->hardening[j] += c * dr_dxi;
    }
  }

  LossReport report() const {
    LossReport rep;
    rep.terms = sums_;
    for (double LossTerms::*t : {&LossTerms::ue, &LossTerms::ux, &LossTerms::ev,
                                 &LossTerms::yl, &LossTerms::ke, &LossTerms::ky}) {
      rep.terms.*t /= n_;
    }
    const LossTerms& m = rep.terms;
    rep.total = w_.ue * m.ue + w_.ux * m.ux + w_.ev * m.ev + w_.yl * m.yl +
                w_.ke * m.ke + w_.ky * m.ky;
    return rep;
  }

 private:
  double n_;
  const LossWeights& w_;
  OutputGradients* grads_;
  LossTerms sums_;
};

void check_batch(const MatrixXd& inputs, Eigen::Index rows, const RowVectorXd& a,
                 const RowVectorXd& b) {
  if (inputs.rows() != rows) {
    throw DimensionMismatch("loss batch expects " + std::to_string(rows) +
                            " input rows, got " + std::to_string(inputs.rows()));
  }
  if (inputs.cols() == 0) throw DimensionMismatch("loss batch is empty");
  if (a.size() != inputs.cols() || b.size() != inputs.cols()) {
    throw DimensionMismatch("network outputs do not match the batch size");
  }
}

// Shared by the 1D and 3D damage models; `quad` is K g^2 or g^T K g.
template <typename QuadOf>
LossReport damage_family_losses(const MatrixXd& inputs, const RowVectorXd& d_next,
                                const RowVectorXd& xi_next, Eigen::Index n_load,
                                QuadOf quad_of, double Y0, double h1, double h2,
                                const LossWeights& w, const SwitchOptions& so,
                                OutputGradients* grads) {
  check_batch(inputs, n_load + 2, d_next, xi_next);
  const Switch sw{so};
  LossAccumulator acc(inputs.cols(), w, grads);
  for (Eigen::Index j = 0; j < inputs.cols(); ++j) {
    const double quad = quad_of(inputs.col(j));
    const double d_i = inputs(n_load, j);
    const double xi_i = inputs(n_load + 1, j);
    const double d = d_next[j];
    const double xi = xi_next[j];
    const double phi_tr = (1.0 - d_i) * quad - (Y0 + voce_force(xi_i, h1, h2));
    const double off = sw.relu(-phi_tr);
    const double on = sw.relu(phi_tr);
    const double slope = voce_slope(xi, h1, h2);

    acc.add(&LossTerms::ue, w.ue, j, (d - d_i) * off, off, 0.0);
    acc.add(&LossTerms::ux, w.ux, j, (xi - xi_i) * off, 0.0, off);
    acc.add(&LossTerms::ev, w.ev, j, (d - d_i - (xi - xi_i)) * on, on, -on);
    const double phi = (1.0 - d) * quad - (Y0 + voce_force(xi, h1, h2));
    acc.add(&LossTerms::yl, w.yl, j, phi * on, -quad * on, -slope * on);
    const double kp = sw.relu_prime(phi);
    acc.add(&LossTerms::ke, w.ke, j, sw.relu(phi), -quad * kp, -slope * kp);
    const double ky = sw.relu_prime(xi_i - xi);
    acc.add(&LossTerms::ky, w.ky, j, sw.relu(xi_i - xi), 0.0, -ky);
  }
  return acc.report();
}

}  // namespace

LossReport plastic_losses(const MatrixXd& inputs, const RowVectorXd& state_next,
                          const RowVectorXd& xi_next, const PlasticityParams& p,
                          const LossWeights& w, const SwitchOptions& so,
                          OutputGradients* grads) {
  check_batch(inputs, 3, state_next, xi_next);
  const Switch sw{so};
  LossAccumulator acc(inputs.cols(), w, grads);
  for (Eigen::Index j = 0; j < inputs.cols(); ++j) {
    const double eps = inputs(0, j);
    const double ep_i = inputs(1, j);
    const double xi_i = inputs(2, j);
    const double ep = state_next[j];
    const double xi = xi_next[j];
    const double phi_tr = plastic_trial_yield(eps, {ep_i, xi_i}, p);
    const double off = sw.relu(-phi_tr);
    const double on = sw.relu(phi_tr);

    const double sigma = p.E * (eps - ep);
    const double dabs = -p.E * sign_of(sigma);  // d|sigma|/d(eps_p)
    const double slope = voce_slope(xi, p.h1, p.h2);

    acc.add(&LossTerms::ue, w.ue, j, (ep - ep_i) * off, off, 0.0);
    acc.add(&LossTerms::ux, w.ux, j, (xi - xi_i) * off, 0.0, off);

    const double s = sw.sgn(sigma);
    const double ds = -p.E * sw.sgn_prime(sigma);  // d sgn(sigma)/d(eps_p)
    const double ev = ep - ep_i - (xi - xi_i) * s;
    acc.add(&LossTerms::ev, w.ev, j, ev * on, (1.0 - (xi - xi_i) * ds) * on, -s * on);

    const double phi = std::abs(sigma) - (p.sigma_y0 + voce_force(xi, p.h1, p.h2));
    acc.add(&LossTerms::yl, w.yl, j, phi * on, dabs * on, -slope * on);
    const double kp = sw.relu_prime(phi);
    acc.add(&LossTerms::ke, w.ke, j, sw.relu(phi), dabs * kp, -slope * kp);
    const double ky = sw.relu_prime(xi_i - xi);
    acc.add(&LossTerms::ky, w.ky, j, sw.relu(xi_i - xi), 0.0, -ky);
  }
  return acc.report();
}

LossReport damage_losses(const MatrixXd& inputs, const RowVectorXd& state_next,
                         const RowVectorXd& xi_next, const DamageParams& p,
                         const LossWeights& w, const SwitchOptions& sw,
                         OutputGradients* grads) {
  return damage_family_losses(
      inputs, state_next, xi_next, 1,
      [&](const auto& col) { return p.K * col[0] * col[0]; }, p.Y0, p.h1, p.h2, w,
      sw, grads);
}

LossReport cz3d_losses(const MatrixXd& inputs, const RowVectorXd& state_next,
                       const RowVectorXd& xi_next, const Cz3dParams& p,
                       const LossWeights& w, const SwitchOptions& sw,
                       OutputGradients* grads) {
  return damage_family_losses(
      inputs, state_next, xi_next, 3,
      [&](const auto& col) { return cz3d_quadratic(GapVector(col[0], col[1], col[2]), p); },
      p.Y0, p.h1, p.h2, w, sw, grads);
}

double data_loss(const CollocationSet& batch, const RowVectorXd& state_next,
                 const RowVectorXd& xi_next, OutputGradients* grads) {
  if (!batch.labels || batch.labels->rows() != 2 ||
      batch.labels->cols() != batch.inputs.cols()) {
    throw MissingLabels("data loss needs a 2 x n label matrix");
  }
  if (state_next.size() != batch.size() || xi_next.size() != batch.size()) {
    throw DimensionMismatch("network outputs do not match the batch size");
  }
  const double n = static_cast<double>(batch.size());
  const RowVectorXd r0 = state_next - batch.labels->row(0);
  const RowVectorXd r1 = xi_next - batch.labels->row(1);
  if (grads) {
    grads->state = 2.0 / n * r0;
    grads->hardening = 2.0 / n * r1;
  }
  return r0.squaredNorm() / n + r1.squaredNorm() / n;
}

std::array<std::string, 2> output_names(ModelFamily family) {
  if (family == ModelFamily::Plasticity) return {"eps_p", "xi_p"};
  return {"d", "xi_d"};
}

StateNets init_state_nets(ModelFamily family, const std::vector<int>& hidden_widths,
                          Activation hidden, std::uint64_t seed) {
  std::vector<int> sizes{load_dim(family) + 2};
  sizes.insert(sizes.end(), hidden_widths.begin(), hidden_widths.end());
  sizes.push_back(1);
  // 2*seed + k keeps the two streams distinct across neighbouring seeds.
  return {init_network(sizes, hidden, 2 * seed), init_network(sizes, hidden, 2 * seed + 1)};
}

std::pair<RowVectorXd, RowVectorXd> predict(const StateNets& nets, const MatrixXd& inputs) {
  return {forward(nets[0], inputs).row(0), forward(nets[1], inputs).row(0)};
}

namespace {

LossReport batch_losses(const CollocationSet& batch, const RowVectorXd& a,
                        const RowVectorXd& b, const TrainSetup& s,
                        OutputGradients* grads) {
  switch (s.task) {
    case Task::Plasticity:
      return plastic_losses(batch.inputs, a, b, s.material.plastic, s.weights, s.switches,
                            grads);
    case Task::Damage:
      return damage_losses(batch.inputs, a, b, s.material.damage, s.weights, s.switches,
                           grads);
    case Task::Cz3d:
      return cz3d_losses(batch.inputs, a, b, s.material.cz3d, s.weights, s.switches, grads);
    case Task::DataDriven: {
      LossReport r;
      r.total = data_loss(batch, a, b, grads);
      return r;
    }
  }
  throw UnknownKind("unknown task");
}

void check_task(const CollocationSet& data, const TrainSetup& setup) {
  const ModelFamily expected = setup.task == Task::Damage ? ModelFamily::Damage
                               : setup.task == Task::Cz3d ? ModelFamily::Cz3d
                                                          : ModelFamily::Plasticity;
  if (data.family != expected) {
    throw InvalidArgument("collocation set family " + to_string(data.family) +
                          " does not match task " + to_string(setup.task));
  }
  if (setup.task == Task::DataDriven && !data.labels) {
    throw MissingLabels("data-driven training needs labeled rows");
  }
}

void accumulate(LossReport& into, const LossReport& r, double weight) {
  into.terms.ue += weight * r.terms.ue;
  into.terms.ux += weight * r.terms.ux;
  into.terms.ev += weight * r.terms.ev;
  into.terms.yl += weight * r.terms.yl;
  into.terms.ke += weight * r.terms.ke;
  into.terms.ky += weight * r.terms.ky;
  into.total += weight * r.total;
}

}  // namespace

LossReport evaluate_losses(const StateNets& nets, const CollocationSet& data,
                           const TrainSetup& setup) {
  check_task(data, setup);
  const auto [a, b] = predict(nets, data.inputs);
  return batch_losses(data, a, b, setup, nullptr);
}

TrainResult train(const CollocationSet& data, StateNets nets, const TrainSetup& setup,
                  const EpochCallback& on_epoch) {
  setup.cfg.validate();
  setup.weights.validate();
  check_task(data, setup);
  const Eigen::Index n = data.size();
  if (n == 0) throw EmptyRange("training set is empty");

  TrainResult result;
  if (setup.cfg.epochs == 0) {
    result.nets = std::move(nets);
    return result;
  }
  result.initial = evaluate_losses(nets, data, setup);

  std::array<AdamState, 2> adam{AdamState::for_network(nets[0]),
                                AdamState::for_network(nets[1])};
  std::mt19937_64 rng(setup.cfg.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  const Eigen::Index bs = std::min<Eigen::Index>(setup.cfg.batch_size, n);
  CollocationSet batch;
  batch.family = data.family;
  std::array<ForwardTape, 2> tapes;
  OutputGradients grads;

  for (int epoch = 1; epoch <= setup.cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossReport epoch_report;
    epoch_report.epoch = epoch;
    for (Eigen::Index start = 0; start < n; start += bs) {
      const Eigen::Index m = std::min(bs, n - start);
      batch.inputs.resize(data.inputs.rows(), m);
      if (data.labels) batch.labels = MatrixXd(2, m);
      for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::Index src = order[static_cast<std::size_t>(start + k)];
        batch.inputs.col(k) = data.inputs.col(src);
        if (data.labels) batch.labels->col(k) = data.labels->col(src);
      }
      const RowVectorXd a = forward(nets[0], batch.inputs, tapes[0]).row(0);
      const RowVectorXd b = forward(nets[1], batch.inputs, tapes[1]).row(0);
      const LossReport rep = batch_losses(batch, a, b, setup, &grads);
      if (!std::isfinite(rep.total)) {
        throw NumericFailure("non-finite loss at epoch " + std::to_string(epoch) +
                             ", batch starting at row " + std::to_string(start));
      }
      accumulate(epoch_report, rep, static_cast<double>(m) / static_cast<double>(n));
      const ParameterSet g0 = backward(nets[0], tapes[0], grads.state);
      const ParameterSet g1 = backward(nets[1], tapes[1], grads.hardening);
      adam_update(nets[0], g0, adam[0], setup.cfg);
      adam_update(nets[1], g1, adam[1], setup.cfg);
    }
    result.history.push_back(epoch_report);
    if (on_epoch) on_epoch(epoch_report);
  }
  result.nets = std::move(nets);
  return result;
}

CollocationSet gen_plastic_labels(const std::vector<double>& amplitudes,
                                  const std::vector<double>& frequencies, double dt,
                                  double cap, const PlasticityParams& p) {
  if (!(dt > 0.0) || amplitudes.empty() || frequencies.empty()) {
    throw EmptyRange("label generation needs dt > 0 and non-empty grids");
  }
  const auto steps = static_cast<Eigen::Index>(std::llround(1.0 / dt));
  const auto paths = static_cast<Eigen::Index>(amplitudes.size() * frequencies.size());
  CollocationSet out;
  out.family = ModelFamily::Plasticity;
  out.inputs.resize(3, paths * steps);
  out.labels = MatrixXd(2, paths * steps);
  Eigen::Index col = 0;
  for (double A : amplitudes) {
    for (double w : frequencies) {
      PlasticState state;
      for (Eigen::Index k = 1; k <= steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        const double eps = std::min(A * std::abs(t * std::sin(w * M_PI * t)), cap);
        const PlasticStep s = solve_plastic_step(eps, state, p);
        out.inputs.col(col) << eps, state.eps_p, state.xi_p;
        out.labels->col(col) << s.state_next.eps_p, s.state_next.xi_p;
        ++col;
        state = s.state_next;
      }
    }
  }
  return out;
}

double appendix_b_target(double x) { return std::sin(x) + 0.1 * x + 0.1; }

namespace {

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    v[static_cast<std::size_t>(i)] = n == 1 ? a : a + (b - a) * i / (n - 1);
  }
  return v;
}

void add_into(ParameterSet& acc, const ParameterSet& g) {
  for (std::size_t l = 0; l < acc.weights.size(); ++l) {
    acc.weights[l] += g.weights[l];
    acc.biases[l] += g.biases[l];
  }
}

}  // namespace

AppendixBResult train_appendix_b(const AppendixBConfig& cfg) {
  if (cfg.n_points < 2 || cfg.batch_size < 1 || cfg.epochs_data < 0 ||
      cfg.epochs_physics < 0 || !(cfg.learning_rate > 0.0)) {
    throw InvalidArgument("appendix-b: invalid configuration");
  }
  AppendixBResult res;
  Network net = init_network(cfg.layer_sizes, {ActivationKind::Tanh, 1.0}, cfg.seed);
  if (net.input_dim() != 1 || net.output_dim() != 1) {
    throw InvalidShape("appendix-b network must map 1 input to 1 output");
  }
  TrainingConfig tc;
  tc.learning_rate = cfg.learning_rate;
  std::mt19937_64 rng(cfg.seed);
  const int n = cfg.n_points;
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const int bs = std::min(cfg.batch_size, n);
  ForwardTape tape;

  // Phase 1: samples of y on [0, data_end].
  const auto xd = linspace(0.0, cfg.data_end, n);
  AdamState adam = AdamState::for_network(net);
  for (int epoch = 0; epoch < cfg.epochs_data; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (int start = 0; start < n; start += bs) {
      const int m = std::min(bs, n - start);
      MatrixXd X(1, m);
      for (int k = 0; k < m; ++k) X(0, k) = xd[static_cast<std::size_t>(order[start + k])];
      const MatrixXd Y = forward(net, X, tape);
      MatrixXd r(1, m);
      for (int k = 0; k < m; ++k) r(0, k) = Y(0, k) - appendix_b_target(X(0, k));
      sum += r.squaredNorm();
      const ParameterSet g = backward(net, tape, 2.0 / m * r);
      adam_update(net, g, adam, tc);
    }
    res.data_history.push_back(sum / n);
  }
  res.after_data = net;

  // Phase 2: ODE residual on [0, domain_end] plus both end conditions.
  const auto xc = linspace(0.0, cfg.domain_end, n);
  const double y_right = -0.358;
  adam = AdamState::for_network(net);
  ForwardTape bc_tape;
  MatrixXd Xbc(1, 2);
  Xbc << 0.0, cfg.domain_end;
  const Eigen::VectorXd dir = Eigen::VectorXd::Ones(1);
  for (int epoch = 0; epoch < cfg.epochs_physics; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += bs) {
      const int m = std::min(bs, n - start);
      MatrixXd X(1, m);
      for (int k = 0; k < m; ++k) X(0, k) = xc[static_cast<std::size_t>(order[start + k])];
      MatrixXd dY;
      forward_with_tangent(net, X, dir, tape, dY);
      MatrixXd r(1, m);
      for (int k = 0; k < m; ++k) r(0, k) = dY(0, k) - std::cos(X(0, k)) - 0.1;
      const MatrixXd zero = MatrixXd::Zero(1, m);
      const MatrixXd rbar = 2.0 / m * r;
      ParameterSet g = backward(net, tape, zero, &rbar);

      const MatrixXd Ybc = forward(net, Xbc, bc_tape);
      const double r0 = Ybc(0, 0) - 0.1;
      const double r5 = Ybc(0, 1) - y_right;
      MatrixXd bbar(1, 2);
      bbar << 2.0 * r0, 2.0 * r5;
      add_into(g, backward(net, bc_tape, bbar));
      adam_update(net, g, adam, tc);
      sum += r.squaredNorm() / m + r0 * r0 + r5 * r5;
      ++batches;
    }
    res.physics_history.push_back(sum / batches);
  }
  res.net = std::move(net);
  return res;
}

}  // namespace cml
