#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cml {

enum class ActivationKind { Relu, Tanh, Sigmoid, Swish, Softplus };

/// Hidden-layer activation. `R` is the sharpness of Swish(x) = x sigmoid(R x)
/// and is ignored by the other kinds.
struct Activation {
  ActivationKind kind = ActivationKind::Relu;
  double R = 1.0;

  bool operator==(const Activation&) const = default;
};

/// Throws UnknownKind.
Activation parse_activation(std::string_view name, double R = 1.0);
std::string to_string(ActivationKind kind);

double activation(const Activation& a, double x);
/// Relu'(0) is taken as 0.
double activation_prime(const Activation& a, double x);
double activation_second(const Activation& a, double x);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Weights and biases of a network, or anything shaped like them (gradients,
/// Adam moments). weights[l] is (n_out x n_in), row m holding w_mn.
struct ParameterSet {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static ParameterSet zeros_like(const ParameterSet& other);
  std::size_t size() const;
  /// Flat (weights row-major per layer, then bias) coordinate access; used by
  /// gradient checks.
  double& coeff(std::size_t flat);
  double coeff(std::size_t flat) const;
};

/// Fully connected feed-forward network with a linear output layer.
struct Network {
  std::vector<int> layer_sizes;
  Activation hidden;
  ParameterSet params;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return params.weights.size(); }
};

/// Uniform Glorot initialization, zero biases, deterministic for a seed.
/// Throws InvalidShape for fewer than two layers or a zero width.
Network init_network(const std::vector<int>& layer_sizes, Activation hidden,
                     std::uint64_t seed);

/// Intermediate values of a batched forward pass kept for backpropagation.
/// Columns are samples.
struct ForwardTape {
  std::vector<Eigen::MatrixXd> inputs;  // layer inputs, inputs[0] = X
  std::vector<Eigen::MatrixXd> pre;     // pre-activations
  // Forward-mode tangents along one input direction (optional).
  std::vector<Eigen::MatrixXd> inputs_dot;
  std::vector<Eigen::MatrixXd> pre_dot;

  bool has_tangent() const { return !pre_dot.empty(); }
};

/// Batched evaluation; X is (input_dim x n). Throws DimensionMismatch.
Eigen::MatrixXd forward(const Network& net, const Eigen::MatrixXd& X);
Eigen::MatrixXd forward(const Network& net, const Eigen::MatrixXd& X,
                        ForwardTape& tape);
Eigen::VectorXd forward_point(const Network& net, const Eigen::VectorXd& x);

/// Forward pass that also propagates d/ds of every layer along x + s*dir.
/// Returns the outputs; `Y_dot` receives the directional derivatives.
Eigen::MatrixXd forward_with_tangent(const Network& net,
                                     const Eigen::MatrixXd& X,
                                     const Eigen::VectorXd& dir,
                                     ForwardTape& tape, Eigen::MatrixXd& Y_dot);

/// Reverse-mode gradient of a scalar loss with respect to every parameter,
/// given dL/dY (output_dim x n) and, for tapes carrying tangents, dL/dY_dot.
ParameterSet backward(const Network& net, const ForwardTape& tape,
                      const Eigen::MatrixXd& dL_dY,
                      const Eigen::MatrixXd* dL_dYdot = nullptr);

/// d(output)/d(input) at a single point, (output_dim x input_dim).
Eigen::MatrixXd input_jacobian(const Network& net, const Eigen::VectorXd& x);

/// Allocation-free single-point evaluation of a single-output network, for
/// tight closed-loop stepping. Holds a reference to the network; not
/// shareable between threads (owns scratch buffers).
class PointEvaluator {
 public:
  explicit PointEvaluator(const Network& net);

  double value(std::span<const double> x);
  /// Value plus d(output)/d(x_j) for the first `n_dirs` inputs.
  double value_and_gradient(std::span<const double> x, int n_dirs,
                            std::span<double> grad);

 private:
  const Network* net_;
  std::vector<Eigen::VectorXd> z_;
  std::vector<Eigen::MatrixXd> zdot_;
};

struct TrainingConfig {
  double learning_rate = 1e-4;
  int epochs = 1000;
  int batch_size = 500;
  std::uint64_t seed = 42;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  double smoothing_R = 300.0;

  void validate() const;
};

struct AdamState {
  ParameterSet m;
  ParameterSet v;
  std::int64_t step = 0;

  static AdamState for_network(const Network& net);
};

/// One bias-corrected Adam step applied to `net` in place.
void adam_update(Network& net, const ParameterSet& grads, AdamState& st,
                 const TrainingConfig& cfg);

}  // namespace cml
