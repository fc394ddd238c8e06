#pragma once

#include <Eigen/Core>
#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cml/material.hpp"
#include "cml/neural.hpp"

namespace cml {

enum class ModelFamily { Plasticity, Damage, Cz3d };

/// Throws UnknownKind.
ModelFamily parse_family(const std::string& name);
std::string to_string(ModelFamily family);
/// Number of load components fed to the networks (1 or 3).
int load_dim(ModelFamily family);

/// Material constants for every family; only the one matching the task is read.
struct MaterialSet {
  PlasticityParams plastic;
  DamageParams damage;
  Cz3dParams cz3d;
};

/// begin:step:end, inclusive of `end` up to a rounding slack of step/1e6.
struct Range {
  double begin = 0.0;
  double step = 0.01;
  double end = 1.0;

  /// Throws EmptyRange when step <= 0 or end < begin.
  std::vector<double> values() const;
};

/// Training inputs, one column per row of the tuple table (columns are
/// samples). Plasticity: (eps^{i+1}, eps_p^i, xi_p^i); damage:
/// (g^{i+1}, d^i, xi_d^i); cz3d: (g_s1, g_s2, g_n, d^i, xi_d^i).
/// `labels` (2 x n) holds return-mapping outputs for the data-driven loss.
struct CollocationSet {
  ModelFamily family = ModelFamily::Damage;
  Eigen::MatrixXd inputs;
  std::optional<Eigen::MatrixXd> labels;

  Eigen::Index size() const { return inputs.cols(); }
};

/// Rows ordered eps -> eps_p -> xi_p (outermost first); keeps xi_p >= eps_p.
CollocationSet gen_collocation_plastic(const Range& eps, const Range& eps_p,
                                       const Range& xi_p);
/// Grid over (g, d) with xi_d = d.
CollocationSet gen_collocation_damage(const Range& g, const Range& d);
/// Grid over (g_s1, g_s2, g_n, d) with xi_d = d.
CollocationSet gen_collocation_cz3d(const Range& g_s1, const Range& g_s2,
                                    const Range& g_n, const Range& d);

/// Loss-term weights in the order elastic (ue, ux), evolution (ev, yl),
/// KKT (ke, ky).
struct LossWeights {
  double ue = 1.0, ux = 1.0, ev = 1.0, yl = 1.0, ke = 1.0, ky = 1.0;

  void validate() const;
};

struct LossTerms {
  double ue = 0.0, ux = 0.0, ev = 0.0, yl = 0.0, ke = 0.0, ky = 0.0;
};

struct LossReport {
  LossTerms terms;
  double total = 0.0;
  int epoch = 0;
};

/// How the Relu switches and the sign of the stress are evaluated inside the
/// losses. Hard: Relu and sgn. Smooth: Swish(x) = x sigmoid(R x) for every
/// Relu, and sigmoid(R x) for sgn, or 2 sigmoid(R x) - 1 with
/// `symmetric_sign`. |x| always differentiates with the hard sign.
struct SwitchOptions {
  bool smooth = false;
  double R = 300.0;
  bool symmetric_sign = false;
};

/// dL/d(output) per row for the two state networks, each 1 x n.
struct OutputGradients {
  Eigen::RowVectorXd state;      // d/d(eps_p^{i+1}) or d/d(d^{i+1})
  Eigen::RowVectorXd hardening;  // d/d(xi^{i+1})
};

/// Physics losses evaluated on predicted outputs. `state_next` and
/// `xi_next` are the network predictions for the columns of `inputs`.
/// Throws DimensionMismatch.
LossReport plastic_losses(const Eigen::MatrixXd& inputs,
                          const Eigen::RowVectorXd& state_next,
                          const Eigen::RowVectorXd& xi_next,
                          const PlasticityParams& p, const LossWeights& w,
                          const SwitchOptions& sw,
                          OutputGradients* grads = nullptr);
LossReport damage_losses(const Eigen::MatrixXd& inputs,
                         const Eigen::RowVectorXd& state_next,
                         const Eigen::RowVectorXd& xi_next,
                         const DamageParams& p, const LossWeights& w,
                         const SwitchOptions& sw,
                         OutputGradients* grads = nullptr);
LossReport cz3d_losses(const Eigen::MatrixXd& inputs,
                       const Eigen::RowVectorXd& state_next,
                       const Eigen::RowVectorXd& xi_next, const Cz3dParams& p,
                       const LossWeights& w, const SwitchOptions& sw,
                       OutputGradients* grads = nullptr);

/// MSE(state - label_0) + MSE(xi - label_1). Throws MissingLabels.
double data_loss(const CollocationSet& batch, const Eigen::RowVectorXd& state_next,
                 const Eigen::RowVectorXd& xi_next,
                 OutputGradients* grads = nullptr);

/// One network per output variable: [0] predicts eps_p^{i+1} or d^{i+1},
/// [1] predicts xi^{i+1}.
using StateNets = std::array<Network, 2>;

/// Names of the two outputs, used in checkpoints and CSV headers.
std::array<std::string, 2> output_names(ModelFamily family);

/// Independent initialization of both networks from one seed.
StateNets init_state_nets(ModelFamily family,
                          const std::vector<int>& hidden_widths,
                          Activation hidden, std::uint64_t seed);

/// Evaluate both networks on the columns of `inputs`.
std::pair<Eigen::RowVectorXd, Eigen::RowVectorXd> predict(
    const StateNets& nets, const Eigen::MatrixXd& inputs);

enum class Task { Plasticity, Damage, Cz3d, DataDriven };
Task parse_task(const std::string& name);
std::string to_string(Task task);

struct TrainSetup {
  Task task = Task::Damage;
  MaterialSet material;
  LossWeights weights;
  SwitchOptions switches;
  TrainingConfig cfg;
};

/// Loss of the full set for a task, no gradients.
LossReport evaluate_losses(const StateNets& nets, const CollocationSet& data,
                           const TrainSetup& setup);

struct TrainResult {
  StateNets nets;
  /// Loss of the full set before the first update (unset when epochs == 0).
  std::optional<LossReport> initial;
  /// One entry per epoch: the mean of the minibatch losses of that epoch.
  std::vector<LossReport> history;
};

using EpochCallback = std::function<void(const LossReport&)>;

/// Minibatch Adam with a seeded shuffle (without replacement) every epoch.
/// Both networks are updated from the same batch. Throws NumericFailure on a
/// non-finite loss, EmptyRange on an empty set, MissingLabels for the
/// data-driven task without labels.
TrainResult train(const CollocationSet& data, StateNets nets,
                  const TrainSetup& setup, const EpochCallback& on_epoch = {});

/// Labeled rows from return-mapping runs along A |t sin(w pi t)|, capped at
/// `cap`, for every A in `amplitudes` and w in `frequencies`; one row per
/// step of every path.
CollocationSet gen_plastic_labels(const std::vector<double>& amplitudes,
                                  const std::vector<double>& frequencies,
                                  double dt, double cap,
                                  const PlasticityParams& p);

/// Two-phase fit of y(x) = sin x + 0.1 x + 0.1: first on samples of y over
/// [0, 2], then on the ODE y' = cos x + 0.1 over [0, 5] with y(0) and y(5)
/// pinned.
struct AppendixBConfig {
  std::vector<int> layer_sizes{1, 20, 20, 20, 20, 1};
  int n_points = 50;
  int epochs_data = 500;
  int epochs_physics = 500;
  int batch_size = 10;
  double learning_rate = 5e-3;
  std::uint64_t seed = 42;
  double data_end = 2.0;
  double domain_end = 5.0;
};

struct AppendixBResult {
  Network net;
  Network after_data;  // snapshot at the end of the data phase
  std::vector<double> data_history;
  std::vector<double> physics_history;
};

double appendix_b_target(double x);
AppendixBResult train_appendix_b(const AppendixBConfig& cfg);

}  // namespace cml
