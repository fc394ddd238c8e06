#include "cml/neural.hpp"

#include <algorithm>
#include <cctype>
#include <random>
#include <string>

#include "cml/errors.hpp"

namespace cml {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Activation parse_activation(std::string_view name, double R) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (s == "relu") return {ActivationKind::Relu, R};
  if (s == "tanh") return {ActivationKind::Tanh, R};
  if (s == "sigmoid") return {ActivationKind::Sigmoid, R};
  if (s == "swish") return {ActivationKind::Swish, R};
  if (s == "softplus") return {ActivationKind::Softplus, R};
  throw UnknownKind("unknown activation '" + std::string(name) + "'");
}

std::string to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::Relu: return "relu";
    case ActivationKind::Tanh: return "tanh";
    case ActivationKind::Sigmoid: return "sigmoid";
    case ActivationKind::Swish: return "swish";
    case ActivationKind::Softplus: return "softplus";
  }
  throw UnknownKind("unknown activation kind");
}

double activation(const Activation& a, double x) {
  switch (a.kind) {
    case ActivationKind::Relu: return x > 0.0 ? x : 0.0;
    case ActivationKind::Tanh: return std::tanh(x);
    case ActivationKind::Sigmoid: return sigmoid(x);
    case ActivationKind::Swish: return x * sigmoid(a.R * x);
    case ActivationKind::Softplus:
      return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  }
  throw UnknownKind("unknown activation kind");
}

double activation_prime(const Activation& a, double x) {
  switch (a.kind) {
    case ActivationKind::Relu: return x > 0.0 ? 1.0 : 0.0;
    case ActivationKind::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case ActivationKind::Sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case ActivationKind::Swish: {
      const double s = sigmoid(a.R * x);
      return s + a.R * x * s * (1.0 - s);
    }
    case ActivationKind::Softplus: return sigmoid(x);
  }
  throw UnknownKind("unknown activation kind");
}

double activation_second(const Activation& a, double x) {
  switch (a.kind) {
    case ActivationKind::Relu: return 0.0;
    case ActivationKind::Tanh: {
      const double t = std::tanh(x);
      return -2.0 * t * (1.0 - t * t);
    }
    case ActivationKind::Sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s) * (1.0 - 2.0 * s);
    }
    case ActivationKind::Swish: {
      const double s = sigmoid(a.R * x);
      const double ds = s * (1.0 - s);
      return 2.0 * a.R * ds + a.R * a.R * x * ds * (1.0 - 2.0 * s);
    }
    case ActivationKind::Softplus: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
  }
  throw UnknownKind("unknown activation kind");
}

namespace {

// Elementwise kernels on whole matrices; the switch sits outside the loop so
// Eigen can vectorize each branch.
void apply(const Activation& a, const MatrixXd& x, MatrixXd& out) {
  const auto X = x.array();
  switch (a.kind) {
    case ActivationKind::Relu: out = X.max(0.0).matrix(); return;
    case ActivationKind::Tanh: out = X.tanh().matrix(); return;
    case ActivationKind::Sigmoid: out = (1.0 / (1.0 + (-X).exp())).matrix(); return;
    case ActivationKind::Swish:
      out = (X / (1.0 + (-a.R * X).exp())).matrix();
      return;
    case ActivationKind::Softplus:
      out = (X.max(0.0) + (-X.abs()).exp().log1p()).matrix();
      return;
  }
}

void apply_prime(const Activation& a, const MatrixXd& x, MatrixXd& out) {
  const auto X = x.array();
  switch (a.kind) {
    case ActivationKind::Relu: out = (X > 0.0).cast<double>().matrix(); return;
    case ActivationKind::Tanh: out = (1.0 - X.tanh().square()).matrix(); return;
    case ActivationKind::Sigmoid: {
      const Eigen::ArrayXXd s = 1.0 / (1.0 + (-X).exp());
      out = (s * (1.0 - s)).matrix();
      return;
    }
    case ActivationKind::Swish: {
      const Eigen::ArrayXXd s = 1.0 / (1.0 + (-a.R * X).exp());
      out = (s + a.R * X * s * (1.0 - s)).matrix();
      return;
    }
    case ActivationKind::Softplus: out = (1.0 / (1.0 + (-X).exp())).matrix(); return;
  }
}

void apply_second(const Activation& a, const MatrixXd& x, MatrixXd& out) {
  const auto X = x.array();
  switch (a.kind) {
    case ActivationKind::Relu: out.setZero(x.rows(), x.cols()); return;
    case ActivationKind::Tanh: {
      const Eigen::ArrayXXd t = X.tanh();
      out = (-2.0 * t * (1.0 - t.square())).matrix();
      return;
    }
    case ActivationKind::Sigmoid:
    case ActivationKind::Softplus: {
      const Eigen::ArrayXXd s = 1.0 / (1.0 + (-X).exp());
      const Eigen::ArrayXXd ds = s * (1.0 - s);
      out = (a.kind == ActivationKind::Sigmoid ? (ds * (1.0 - 2.0 * s)).eval() : ds)
                .matrix();
      return;
    }
    case ActivationKind::Swish: {
      const Eigen::ArrayXXd s = 1.0 / (1.0 + (-a.R * X).exp());
      const Eigen::ArrayXXd ds = s * (1.0 - s);
      out = (2.0 * a.R * ds + a.R * a.R * X * ds * (1.0 - 2.0 * s)).matrix();
      return;
    }
  }
}

void check_input(const Network& net, Eigen::Index rows) {
  if (net.layer_sizes.empty() || rows != net.input_dim()) {
    throw DimensionMismatch("network expects " +
                            std::to_string(net.layer_sizes.empty() ? 0 : net.input_dim()) +
                            " inputs, got " + std::to_string(rows));
  }
}

}  // namespace

ParameterSet ParameterSet::zeros_like(const ParameterSet& other) {
  ParameterSet out;
  for (const auto& w : other.weights) out.weights.push_back(MatrixXd::Zero(w.rows(), w.cols()));
  for (const auto& b : other.biases) out.biases.push_back(VectorXd::Zero(b.size()));
  return out;
}

std::size_t ParameterSet::size() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  }
  return n;
}

double& ParameterSet::coeff(std::size_t flat) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const auto nw = static_cast<std::size_t>(weights[l].size());
    if (flat < nw) {
      const auto cols = static_cast<std::size_t>(weights[l].cols());
      return weights[l](static_cast<Eigen::Index>(flat / cols),
                        static_cast<Eigen::Index>(flat % cols));
    }
    flat -= nw;
    const auto nb = static_cast<std::size_t>(biases[l].size());
    if (flat < nb) return biases[l](static_cast<Eigen::Index>(flat));
    flat -= nb;
  }
  throw InvalidArgument("parameter index out of range");
}

double ParameterSet::coeff(std::size_t flat) const {
  return const_cast<ParameterSet*>(this)->coeff(flat);
}

Network init_network(const std::vector<int>& layer_sizes, Activation hidden,
                     std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw InvalidShape("network needs at least two layers");
  for (int w : layer_sizes) {
    if (w < 1) throw InvalidShape("layer widths must be >= 1");
  }
  Network net;
  net.layer_sizes = layer_sizes;
  net.hidden = hidden;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    MatrixXd W(fan_out, fan_in);
    // Row-major draw order so the stream does not depend on Eigen's storage.
    for (int m = 0; m < fan_out; ++m) {
      for (int n = 0; n < fan_in; ++n) W(m, n) = dist(rng);
    }
    net.params.weights.push_back(std::move(W));
    net.params.biases.push_back(VectorXd::Zero(fan_out));
  }
  return net;
}

MatrixXd forward(const Network& net, const MatrixXd& X) {
  check_input(net, X.rows());
  const std::size_t L = net.num_layers();
  MatrixXd z = X;
  MatrixXd a;
  for (std::size_t l = 0; l < L; ++l) {
    a.noalias() = net.params.weights[l] * z;
    a.colwise() += net.params.biases[l];
    if (l + 1 < L) {
      apply(net.hidden, a, z);
    } else {
      z.swap(a);
    }
  }
  return z;
}

MatrixXd forward(const Network& net, const MatrixXd& X, ForwardTape& tape) {
  check_input(net, X.rows());
  const std::size_t L = net.num_layers();
  tape.inputs.resize(L);
  tape.pre.resize(L);
  tape.inputs_dot.clear();
  tape.pre_dot.clear();
  tape.inputs[0] = X;
  for (std::size_t l = 0; l < L; ++l) {
    MatrixXd& a = tape.pre[l];
    a.noalias() = net.params.weights[l] * tape.inputs[l];
    a.colwise() += net.params.biases[l];
    if (l + 1 < L) apply(net.hidden, a, tape.inputs[l + 1]);
  }
  return tape.pre[L - 1];
}

VectorXd forward_point(const Network& net, const VectorXd& x) {
  return forward(net, MatrixXd(x));
}

MatrixXd forward_with_tangent(const Network& net, const MatrixXd& X,
                              const VectorXd& dir, ForwardTape& tape,
                              MatrixXd& Y_dot) {
  check_input(net, X.rows());
  if (dir.size() != X.rows()) throw DimensionMismatch("tangent direction size");
  const std::size_t L = net.num_layers();
  tape.inputs.resize(L);
  tape.pre.resize(L);
  tape.inputs_dot.resize(L);
  tape.pre_dot.resize(L);
  tape.inputs[0] = X;
  tape.inputs_dot[0] = dir.replicate(1, X.cols());
  MatrixXd slope;
  for (std::size_t l = 0; l < L; ++l) {
    MatrixXd& a = tape.pre[l];
    MatrixXd& a_dot = tape.pre_dot[l];
    a.noalias() = net.params.weights[l] * tape.inputs[l];
    a.colwise() += net.params.biases[l];
    a_dot.noalias() = net.params.weights[l] * tape.inputs_dot[l];
    if (l + 1 < L) {
      apply(net.hidden, a, tape.inputs[l + 1]);
      apply_prime(net.hidden, a, slope);
      tape.inputs_dot[l + 1] = slope.cwiseProduct(a_dot);
    }
  }
  Y_dot = tape.pre_dot[L - 1];
  return tape.pre[L - 1];
}

ParameterSet backward(const Network& net, const ForwardTape& tape,
                      const MatrixXd& dL_dY, const MatrixXd* dL_dYdot) {
  const std::size_t L = net.num_layers();
  if (tape.pre.size() != L) throw DimensionMismatch("tape does not match network");
  if (dL_dY.rows() != net.output_dim() || dL_dY.cols() != tape.pre[L - 1].cols()) {
    throw DimensionMismatch("dL/dY shape does not match network output");
  }
  const bool tangent = dL_dYdot != nullptr;
  if (tangent && !tape.has_tangent()) {
    throw DimensionMismatch("tangent adjoint given for a tape without tangents");
  }

  ParameterSet g = ParameterSet::zeros_like(net.params);
  MatrixXd abar = dL_dY;
  MatrixXd adotbar;
  if (tangent) adotbar = *dL_dYdot;
  MatrixXd zbar, zdotbar, slope, curv;
  for (std::size_t l = L; l-- > 0;) {
    g.weights[l].noalias() = abar * tape.inputs[l].transpose();
    if (tangent) g.weights[l].noalias() += adotbar * tape.inputs_dot[l].transpose();
    g.biases[l] = abar.rowwise().sum();
    if (l == 0) break;
    zbar.noalias() = net.params.weights[l].transpose() * abar;
    apply_prime(net.hidden, tape.pre[l - 1], slope);
    if (tangent) {
      zdotbar.noalias() = net.params.weights[l].transpose() * adotbar;
      apply_second(net.hidden, tape.pre[l - 1], curv);
      abar = zbar.cwiseProduct(slope) +
             zdotbar.cwiseProduct(curv).cwiseProduct(tape.pre_dot[l - 1]);
      adotbar = zdotbar.cwiseProduct(slope);
    } else {
      abar = zbar.cwiseProduct(slope);
    }
  }
  return g;
}

MatrixXd input_jacobian(const Network& net, const VectorXd& x) {
  check_input(net, x.size());
  // Forward mode with one tangent column per input direction.
  const std::size_t L = net.num_layers();
  MatrixXd z = x;
  MatrixXd zdot = MatrixXd::Identity(x.size(), x.size());
  MatrixXd a, slope;
  for (std::size_t l = 0; l < L; ++l) {
    a.noalias() = net.params.weights[l] * z;
    a.colwise() += net.params.biases[l];
    MatrixXd adot = net.params.weights[l] * zdot;
    if (l + 1 < L) {
      apply(net.hidden, a, z);
      apply_prime(net.hidden, a, slope);
      zdot = slope.asDiagonal() * adot;
    } else {
      zdot.swap(adot);
    }
  }
  return zdot;
}

PointEvaluator::PointEvaluator(const Network& net) : net_(&net) {
  if (net.output_dim() != 1) {
    throw InvalidShape("PointEvaluator requires a single-output network");
  }
  z_.resize(net.layer_sizes.size());
  zdot_.resize(net.layer_sizes.size());
  for (std::size_t l = 0; l < net.layer_sizes.size(); ++l) {
    z_[l].resize(net.layer_sizes[l]);
    zdot_[l].resize(net.layer_sizes[l], net.input_dim());
  }
}

namespace {

// out = W z + b with plain loops. Eigen's dynamic gemv carries a per-call
// overhead that dominates at the layer widths used for closed-loop stepping.
void affine(const MatrixXd& W, const VectorXd& b, const double* __restrict z,
            double* __restrict out) {
  const Eigen::Index rows = W.rows(), cols = W.cols();
  const double* __restrict w = W.data();  // column-major
  for (Eigen::Index i = 0; i < rows; ++i) out[i] = b[i];
  for (Eigen::Index j = 0; j < cols; ++j) {
    const double zj = z[j];
    const double* col = w + j * rows;
    for (Eigen::Index i = 0; i < rows; ++i) out[i] += col[i] * zj;
  }
}

}  // namespace

double PointEvaluator::value(std::span<const double> x) {
  const Network& net = *net_;
  if (static_cast<int>(x.size()) != net.input_dim()) {
    throw DimensionMismatch("PointEvaluator: wrong input size");
  }
  for (int i = 0; i < net.input_dim(); ++i) z_[0][i] = x[i];
  const std::size_t L = net.num_layers();
  for (std::size_t l = 0; l < L; ++l) {
    VectorXd& out = z_[l + 1];
    affine(net.params.weights[l], net.params.biases[l], z_[l].data(), out.data());
    if (l + 1 < L) {
      if (net.hidden.kind == ActivationKind::Relu) {
        out = out.cwiseMax(0.0);
      } else {
        for (Eigen::Index m = 0; m < out.size(); ++m) out[m] = activation(net.hidden, out[m]);
      }
    }
  }
  return z_[L][0];
}

double PointEvaluator::value_and_gradient(std::span<const double> x, int n_dirs,
                                          std::span<double> grad) {
  const Network& net = *net_;
  if (static_cast<int>(x.size()) != net.input_dim() || n_dirs < 0 ||
      n_dirs > net.input_dim() || static_cast<int>(grad.size()) < n_dirs) {
    throw DimensionMismatch("PointEvaluator: wrong input or gradient size");
  }
  for (int i = 0; i < net.input_dim(); ++i) z_[0][i] = x[i];
  const std::size_t L = net.num_layers();
  // First layer: d(a)/d(x_j) is column j of W.
  for (std::size_t l = 0; l < L; ++l) {
    VectorXd& out = z_[l + 1];
    auto dot = zdot_[l + 1].leftCols(n_dirs);
    affine(net.params.weights[l], net.params.biases[l], z_[l].data(), out.data());
    if (l == 0) {
      dot = net.params.weights[0].leftCols(n_dirs);
    } else {
      dot.noalias() = net.params.weights[l] * zdot_[l].leftCols(n_dirs);
    }
    if (l + 1 < L) {
      for (Eigen::Index m = 0; m < out.size(); ++m) {
        const double slope = activation_prime(net.hidden, out[m]);
        out[m] = activation(net.hidden, out[m]);
        dot.row(m) *= slope;
      }
    }
  }
  for (int j = 0; j < n_dirs; ++j) grad[j] = zdot_[L](0, j);
  return z_[L][0];
}

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("training: learning_rate must be > 0");
  if (epochs < 0) throw InvalidArgument("training: epochs must be >= 0");
  if (batch_size < 1) throw InvalidArgument("training: batch_size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("training: Adam betas must lie in [0, 1)");
  }
  if (!(eps_adam > 0.0)) throw InvalidArgument("training: eps_adam must be > 0");
  if (!(smoothing_R > 0.0)) throw InvalidArgument("training: smoothing_R must be > 0");
}

AdamState AdamState::for_network(const Network& net) {
  return {ParameterSet::zeros_like(net.params), ParameterSet::zeros_like(net.params), 0};
}

void adam_update(Network& net, const ParameterSet& grads, AdamState& st,
                 const TrainingConfig& cfg) {
  const std::size_t L = net.num_layers();
  if (grads.weights.size() != L || st.m.weights.size() != L) {
    throw DimensionMismatch("adam_update: parameter sets do not match network");
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  const double lr = cfg.learning_rate;
  const double b1 = cfg.beta1, b2 = cfg.beta2, eps = cfg.eps_adam;
  auto step = [&](auto& theta, const auto& g, auto& m, auto& v) {
    if (g.rows() != theta.rows() || g.cols() != theta.cols()) {
      throw DimensionMismatch("adam_update: gradient shape mismatch");
    }
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < L; ++l) {
    step(net.params.weights[l], grads.weights[l], st.m.weights[l], st.v.weights[l]);
    step(net.params.biases[l], grads.biases[l], st.m.biases[l], st.v.biases[l]);
  }
}

}  // namespace cml
