#pragma once

// Bellman operators on Q tables, the value gap, and the split of one critic
// round's error into approximation, estimation, sampling and optimization
// parts.

#include <vector>

#include <Eigen/Dense>

#include "nac2l/mdp.hpp"

namespace nac2l {

/// (T^pi q)(s,a) = r'(s,a) + gamma sum_s' P(s'|s,a) sum_a' pi(a'|s') q(s',a').
/// `gamma` < 0 means the MDP's own discount.
MatrixXd bellman_pi(const MatrixXd& q, const PolicyTable& policy, const TabularMdp& mdp,
                    double gamma = -1.0);

/// (T q)(s,a) = r'(s,a) + gamma sum_s' P(s'|s,a) max_a' q(s',a').
MatrixXd bellman_opt(const MatrixXd& q, const TabularMdp& mdp);

/// sum_s nu_S(s) (V*(s) - V^pi(s)) with nu_S the state marginal of nu.
double value_gap(const TabularMdp& mdp, const PolicyTable& policy, const VectorXd& v_star);
double value_gap(const TabularMdp& mdp, const PolicyTable& policy);

/// sum_s nu_S(s) V^pi(s).
double policy_value(const TabularMdp& mdp, const PolicyTable& policy);

/// One critic round: q_prev was bootstrapped through `batch` into targets and
/// the regressor returned `fitted`.
struct RoundData {
  MatrixXd q_prev;
  MatrixXd fitted;
  std::vector<Transition> batch;
  double gamma = -1.0;  // < 0: the MDP's discount
};

struct ErrorReport {
  // E_zeta |.| of the signed tables below.
  double eps_total = 0.0;  // fitted vs T^pi q_prev
  double eps1_sur = 0.0;   // surrogate for the approximation error (same distance)
  double eps2 = 0.0;       // |Q1 - Q2|
  double eps3 = 0.0;       // |Q2 - Q3|
  double eps4 = 0.0;       // |Q3 - fitted|
  /// Set when the features are not tabular: eps2 and eps3 are NaN then.
  bool partial = false;

  MatrixXd target;  // T^pi q_prev
  MatrixXd q1;      // least-squares fit of T^pi q_prev under zeta
  MatrixXd q2;      // least-squares fit of sampled-form targets under zeta x P
  MatrixXd q3;      // least-squares fit of the batch targets
  // fitted - target = e1 + e2 - e3 + e4
  MatrixXd e1, e2, e3, e4;
};

/// `zeta` is a distribution over state-action pairs (index s*|A|+a).
/// Tabular features give closed forms for every anchor; otherwise only
/// eps_total, eps1_sur and eps4 are reported.
ErrorReport decompose_errors(const TabularMdp& mdp, const PolicyTable& policy, const RoundData& round,
                             const VectorXd& zeta, bool tabular_features);

}  // namespace nac2l
