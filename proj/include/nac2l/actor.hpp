#pragma once

// Softmax actor pi_lambda(a|s) ∝ exp(lambda . phi(s,a)): scores, advantages,
// the compatible-approximation SGD for w and the natural-gradient step.

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nac2l/critic.hpp"
#include "nac2l/mdp.hpp"

namespace nac2l {

enum class FeatureKind {
  one_hot,          // phi(s,a) = e_{s*|A|+a}
  one_hot_reduced,  // as one_hot with the last action of each state dropped
  table,            // arbitrary rows
};

class FeatureMap {
 public:
  static FeatureMap one_hot(int n_states, int n_actions);
  /// Same policy class as one_hot with a nonsingular Fisher matrix.
  static FeatureMap one_hot_reduced(int n_states, int n_actions);
  static FeatureMap table(int n_states, int n_actions, MatrixXd rows);

  FeatureKind kind() const { return kind_; }
  int dim() const { return static_cast<int>(rows_.cols()); }
  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  auto phi(int s, int a) const { return rows_.row(s * n_actions_ + a); }
  const MatrixXd& rows() const { return rows_; }
  /// max over (s,a) of ||phi(s,a)||_2.
  double bound() const { return rows_.rowwise().norm().maxCoeff(); }

 private:
  FeatureMap(FeatureKind kind, int n_states, int n_actions, MatrixXd rows)
      : kind_(kind), n_states_(n_states), n_actions_(n_actions), rows_(std::move(rows)) {}
  FeatureKind kind_;
  int n_states_;
  int n_actions_;
  MatrixXd rows_;
};

struct PolicyParams {
  VectorXd lambda;
  FeatureMap features;

  static PolicyParams zeros(FeatureMap features);
};

/// Softmax over actions at s, computed after subtracting the largest logit.
VectorXd action_probs(const PolicyParams& params, int s);
PolicyTable policy_table(const PolicyParams& params);

/// phi(s,a) - sum_a' pi(a'|s) phi(s,a').
VectorXd grad_log_pi(const PolicyParams& params, int s, int a);
/// All scores at once, one row per pair (s*|A|+a).
MatrixXd score_table(const PolicyParams& params);

/// Q(s,a) - sum_a' pi(a'|s) Q(s,a').
double advantage(const QEstimate& q, const PolicyParams& params, int s, int a);
MatrixXd advantage_table(const MatrixXd& q_table, const PolicyTable& policy);

struct SgdConfig {
  double beta0 = 0.1;
  std::optional<double> w_clip;  // project onto ||w||_2 <= W after each step
};

/// w <- w - 2 beta_i (w . g_i - A(s_i,a_i)) g_i with beta_i = beta0 / (i + 1),
/// one step per sample in order. `first_step` offsets i so that repeated
/// calls continue one schedule.
VectorXd sgd_w(std::span<const std::pair<int, int>> samples, const MatrixXd& adv_table, const PolicyParams& params,
               const SgdConfig& config, const VectorXd& w0, std::size_t first_step = 0);

/// (s, a) pairs of a transition list, in order.
std::vector<std::pair<int, int>> state_actions(const std::vector<Transition>& batch);

/// Empirical distribution of the pairs over s*|A|+a.
VectorXd empirical_weights(std::span<const std::pair<int, int>> samples, int n_states, int n_actions);

/// sum_{s,a} weight(s,a) (A(s,a) - w . g(s,a))^2.
double compat_loss(const VectorXd& w, const VectorXd& weights, const MatrixXd& adv_table,
                   const PolicyParams& params);

/// Minimum-norm minimizer of compat_loss (complete orthogonal decomposition,
/// i.e. the pseudo-inverse on a singular Fisher matrix).
VectorXd exact_w_star(const VectorXd& weights, const MatrixXd& adv_table, const PolicyParams& params);

/// lambda + eta / (1 - gamma) * w.
PolicyParams npg_update(const PolicyParams& params, const VectorXd& w, double eta, double gamma);

}  // namespace nac2l
