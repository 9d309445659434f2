#pragma once

// Fitted Q-iteration: roll the current policy out, bootstrap one-step targets
// off the previous estimate, regress, repeat J times.

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "nac2l/mdp.hpp"
#include "nac2l/random.hpp"
#include "nac2l/relu_solver.hpp"

namespace nac2l {

enum class TargetRule {
  expectation,  // r + gamma sum_a' pi(a'|s') Q(s',a')
  max,          // r + gamma max_a' Q(s',a')
};

enum class CriticBackend {
  relu,           // convex two-layer ReLU fit
  tabular,        // per-pair least squares on the batch
  tabular_exact,  // Q_j = clip(T^pi Q_{j-1}) computed exactly
  oracle,         // Q^pi from the linear solve, whatever J is
};

struct CriticConfig {
  int J = 10;
  int n_per_iter = 2000;
  /// Discount used in the targets; unset means the MDP's. 0 is allowed.
  std::optional<double> gamma;
  /// L1 budget of the ReLU fit; 0 means R_max / (1 - gamma).
  double radius = 0.0;
  relu::FitConfig solver;  // its radius and seed are overwritten per round
  TargetRule target = TargetRule::expectation;
  CriticBackend backend = CriticBackend::relu;
};

/// Q estimate on a finite state-action space, clipped into [0, upper].
class QEstimate {
 public:
  static QEstimate zero(int n_states, int n_actions, double upper);
  static QEstimate from_table(const MatrixXd& table, double upper);
  static QEstimate from_network(relu::ReluNet net, const Encoder& encoder, int n_states, int n_actions,
                                double upper);

  double value(int s, int a) const { return table_(s, a); }
  const MatrixXd& table() const { return table_; }
  double upper() const { return upper_; }
  const std::optional<relu::ReluNet>& network() const { return net_; }

 private:
  MatrixXd table_;
  double upper_ = 0.0;
  std::optional<relu::ReluNet> net_;
};

/// One chain of n transitions from a nu-drawn start following `policy`.
std::vector<Transition> collect_transitions(const TabularMdp& mdp, const PolicyTable& policy, int n, Rng& rng);

/// y_i = clip(r_i + gamma * next(s'_i), 0, upper), with next the policy
/// average or the max of q_prev at s'_i.
VectorXd build_targets(const std::vector<Transition>& batch, const MatrixXd& q_prev, const PolicyTable& policy,
                       double gamma, double upper, TargetRule rule = TargetRule::expectation);

struct FqiRound {
  MatrixXd q_prev;
  MatrixXd fitted;
  std::vector<Transition> batch;
  double bellman_resid = 0.0;  // ||fitted - T^pi q_prev||_inf
  double fit_objective = 0.0;  // mean squared training error of the regressor
  std::optional<relu::FitReport> report;
};

struct FqiResult {
  QEstimate q;
  std::vector<Transition> samples;  // all rounds' batches, in collection order
  std::vector<FqiRound> rounds;
};

/// J rounds starting from Q_0 = 0. Round j uses the sub-streams
/// ("env", k, j) and ("patterns", k, j) of `seed`.
FqiResult fqi(const TabularMdp& mdp, const PolicyTable& policy, const Encoder& encoder,
              const CriticConfig& config, std::uint64_t seed, std::uint64_t k = 0);

}  // namespace nac2l
