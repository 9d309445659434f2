#include "nac2l/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace nac2l {

namespace {

void check_table(const MatrixXd& q, const TabularMdp& mdp, const char* what) {
  if (q.rows() != mdp.n_states() || q.cols() != mdp.n_actions()) {
    throw std::invalid_argument(std::string(what) + " must be an S x A table");
  }
}

double weighted_abs(const MatrixXd& table, const VectorXd& zeta) {
  return zeta.dot(table_to_pairs(table).cwiseAbs());
}

}  // namespace

MatrixXd bellman_pi(const MatrixXd& q, const PolicyTable& policy, const TabularMdp& mdp, double gamma) {
  check_table(q, mdp, "q");
  validate_policy(mdp, policy);
  const double g = gamma < 0.0 ? mdp.gamma() : gamma;
  const VectorXd next_v = policy.cwiseProduct(q).rowwise().sum();
  const VectorXd flat = table_to_pairs(mdp.mean_reward()) + g * mdp.transitions() * next_v;
  return pairs_to_table(flat, mdp.n_states(), mdp.n_actions());
}

MatrixXd bellman_opt(const MatrixXd& q, const TabularMdp& mdp) {
  check_table(q, mdp, "q");
  const VectorXd next_v = q.rowwise().maxCoeff();
  const VectorXd flat = table_to_pairs(mdp.mean_reward()) + mdp.gamma() * mdp.transitions() * next_v;
  return pairs_to_table(flat, mdp.n_states(), mdp.n_actions());
}

double value_gap(const TabularMdp& mdp, const PolicyTable& policy, const VectorXd& v_star) {
  if (v_star.size() != mdp.n_states()) throw std::invalid_argument("value_gap: V* has the wrong length");
  return mdp.nu_states().dot(v_star - exact_v_pi(mdp, policy));
}

double value_gap(const TabularMdp& mdp, const PolicyTable& policy) {
  return value_gap(mdp, policy, exact_v_star(mdp, 1e-10).v);
}

double policy_value(const TabularMdp& mdp, const PolicyTable& policy) {
  return mdp.nu_states().dot(exact_v_pi(mdp, policy));
}

ErrorReport decompose_errors(const TabularMdp& mdp, const PolicyTable& policy, const RoundData& round,
                             const VectorXd& zeta, bool tabular_features) {
  check_table(round.q_prev, mdp, "q_prev");
  check_table(round.fitted, mdp, "fitted");
  if (zeta.size() != mdp.pairs()) throw std::invalid_argument("decompose_errors: zeta has the wrong length");
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  const double g = round.gamma < 0.0 ? mdp.gamma() : round.gamma;

  ErrorReport rep;
  rep.target = bellman_pi(round.q_prev, policy, mdp, g);

  // Q3: per-pair mean of the batch targets; pairs never visited get 0, the
  // minimum-norm least-squares value for one-hot rows.
  const VectorXd next_v = policy.cwiseProduct(round.q_prev).rowwise().sum();
  const double upper = mdp.value_bound();
  MatrixXd sum = MatrixXd::Zero(S, A);
  MatrixXd count = MatrixXd::Zero(S, A);
  for (const auto& t : round.batch) {
    const double y = std::clamp(t.r + g * next_v[t.s_next], 0.0, upper);
    sum(t.s, t.a) += y;
    count(t.s, t.a) += 1.0;
  }
  rep.q3 = MatrixXd::Zero(S, A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      if (count(s, a) > 0.0) rep.q3(s, a) = sum(s, a) / count(s, a);
    }
  }

  const MatrixXd total = round.fitted - rep.target;
  rep.eps_total = weighted_abs(total, zeta);
  rep.eps1_sur = rep.eps_total;
  rep.e4 = round.fitted - rep.q3;
  rep.eps4 = weighted_abs(rep.e4, zeta);

  if (!tabular_features) {
    rep.partial = true;
    rep.eps2 = std::numeric_limits<double>::quiet_NaN();
    rep.eps3 = std::numeric_limits<double>::quiet_NaN();
    return rep;
  }

  // Q1: weighted least squares of T^pi q_prev on one-hot rows under zeta.
  rep.q1 = MatrixXd::Zero(S, A);
  // Q2: weighted least squares over joint (s, a, s') rows with weight
  // zeta(s,a) P(s'|s,a) and target r'(s,a) + gamma V_prev(s').
  rep.q2 = MatrixXd::Zero(S, A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      const int i = mdp.index(s, a);
      if (zeta[i] <= 0.0) continue;
      rep.q1(s, a) = rep.target(s, a);
      double num = 0.0;
      double den = 0.0;
      for (int s2 = 0; s2 < S; ++s2) {
        const double w = zeta[i] * mdp.transitions()(i, s2);
        if (w == 0.0) continue;
        num += w * (mdp.mean_reward()(s, a) + g * next_v[s2]);
        den += w;
      }
      rep.q2(s, a) = num / den;
    }
  }
  rep.e1 = rep.q1 - rep.target;
  rep.e2 = rep.q2 - rep.q1;
  rep.e3 = rep.q2 - rep.q3;
  rep.eps2 = weighted_abs(rep.e2, zeta);
  rep.eps3 = weighted_abs(rep.e3, zeta);
  return rep;
}

}  // namespace nac2l
