#include <cmath>

#include "doctest.h"
#include "nac2l/critic.hpp"
#include "nac2l/diagnostics.hpp"

using namespace nac2l;

namespace {

PolicyTable random_policy(int S, int A, Rng& rng) {
  PolicyTable p(S, A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) p(s, a) = uniform01(rng) + 1e-3;
    p.row(s) /= p.row(s).sum();
  }
  return p;
}

MatrixXd random_table(int S, int A, Rng& rng, double scale) {
  MatrixXd q(S, A);
  for (Index i = 0; i < q.size(); ++i) q.data()[i] = scale * uniform01(rng);
  return q;
}

}  // namespace

TEST_CASE("T^pi: zero input, fixed point, monotonicity") {
  Rng rng(1);
  const TabularMdp m = make_random_mdp(5, 3, 0.9, rng);
  const PolicyTable pi = random_policy(5, 3, rng);
  CHECK((bellman_pi(MatrixXd::Zero(5, 3), pi, m) - m.mean_reward()).norm() == 0.0);

  const MatrixXd q = exact_q_pi(m, pi);
  CHECK((bellman_pi(q, pi, m) - q).lpNorm<Eigen::Infinity>() <= 1e-9);

  for (int t = 0; t < 50; ++t) {
    const MatrixXd q1 = random_table(5, 3, rng, 5.0);
    const MatrixXd q2 = q1 + random_table(5, 3, rng, 1.0);
    CHECK(((bellman_pi(q2, pi, m) - bellman_pi(q1, pi, m)).array() >= 0.0).all());
  }
}

TEST_CASE("T: zero input, dominance over T^pi, contraction") {
  Rng rng(2);
  const TabularMdp m = make_random_mdp(6, 3, 0.85, rng);
  CHECK((bellman_opt(MatrixXd::Zero(6, 3), m) - m.mean_reward()).norm() == 0.0);
  for (int t = 0; t < 100; ++t) {
    const MatrixXd q = random_table(6, 3, rng, 6.0);
    const PolicyTable pi = random_policy(6, 3, rng);
    CHECK(((bellman_opt(q, m) - bellman_pi(q, pi, m)).array() >= -1e-12).all());

    const MatrixXd q2 = random_table(6, 3, rng, 6.0);
    const double lhs = (bellman_opt(q, m) - bellman_opt(q2, m)).lpNorm<Eigen::Infinity>();
    CHECK(lhs <= m.gamma() * (q - q2).lpNorm<Eigen::Infinity>() + 1e-12);
    const double lhs_pi = (bellman_pi(q, pi, m) - bellman_pi(q2, pi, m)).lpNorm<Eigen::Infinity>();
    CHECK(lhs_pi <= m.gamma() * (q - q2).lpNorm<Eigen::Infinity>() + 1e-12);
  }
}

TEST_CASE("value gap") {
  GridSpec g;
  g.slip = 0.1;
  const TabularMdp grid = make_gridworld(g);
  const ValueIterationResult vi = exact_v_star(grid, 1e-10);
  CHECK(std::abs(value_gap(grid, vi.greedy, vi.v)) <= 1e-9);
  Rng rng(3);
  for (int t = 0; t < 20; ++t) CHECK(value_gap(grid, random_policy(16, 4, rng), vi.v) >= -1e-9);

  // 2 states, 2 actions, deterministic moves: action 0 stays, action 1 switches.
  // Rewards: r(0,0)=0, r(0,1)=0.5, r(1,0)=1, r(1,1)=0. gamma = 0.5.
  MatrixXd p(4, 2);
  p << 1, 0,  //
      0, 1,   //
      0, 1,   //
      1, 0;
  MatrixXd r(2, 2);
  r << 0, 0.5, 1, 0;
  const TabularMdp m(2, 2, p, r, 0.5, VectorXd::Constant(4, 0.25), 1.0);
  // Optimal: switch from 0 then stay at 1. V*(1) = 1/(1-0.5) = 2, V*(0) = 0.5 + 0.5*2 = 1.5.
  // Policy "always stay": V(0) = 0, V(1) = 2.
  PolicyTable stay(2, 2);
  stay << 1, 0, 1, 0;
  CHECK(value_gap(m, stay) == doctest::Approx(0.5 * (1.5 - 0.0) + 0.5 * (2.0 - 2.0)).epsilon(1e-9));
  // Policy "always switch": V(0) = (0.5 + 0.5*0)/(1-0.25) = 2/3, V(1) = 0 + 0.5 V(0) = 1/3.
  PolicyTable sw(2, 2);
  sw << 0, 1, 0, 1;
  CHECK(value_gap(m, sw) == doctest::Approx(0.5 * (1.5 - 2.0 / 3.0) + 0.5 * (2.0 - 1.0 / 3.0)).epsilon(1e-9));
}

TEST_CASE("error decomposition: exact fit of exact targets is all zero") {
  GridSpec g;
  g.goal_resets = false;
  const TabularMdp m = make_gridworld(g);  // deterministic, noise-free
  Rng rng(4);
  const PolicyTable pi = random_policy(16, 4, rng);
  const MatrixXd q_prev = random_table(16, 4, rng, 5.0);

  // One transition per pair: per-pair batch means are exact.
  std::vector<Transition> batch;
  for (int s = 0; s < 16; ++s) {
    for (int a = 0; a < 4; ++a) {
      Rng step_rng(static_cast<std::uint64_t>(s * 4 + a));
      const StepOutcome o = step(m, s, a, step_rng);
      batch.push_back({s, a, o.r, o.s_next});
    }
  }
  const MatrixXd fitted = bellman_pi(q_prev, pi, m);
  const VectorXd zeta = VectorXd::Constant(64, 1.0 / 64);
  const ErrorReport rep = decompose_errors(m, pi, {q_prev, fitted, batch, -1.0}, zeta, true);
  CHECK_FALSE(rep.partial);
  CHECK(rep.eps_total <= 1e-9);
  CHECK(rep.eps1_sur <= 1e-9);
  CHECK(rep.eps2 <= 1e-9);
  CHECK(rep.eps3 <= 1e-9);
  CHECK(rep.eps4 <= 1e-9);
}

TEST_CASE("error decomposition: Q1 equals Q2 and the signed parts telescope") {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const int S = 2 + static_cast<int>(uniform01(rng) * 5);
    const int A = 1 + static_cast<int>(uniform01(rng) * 3);
    const TabularMdp m = make_random_mdp(S, A, 0.9, rng);
    const PolicyTable pi = random_policy(S, A, rng);
    const MatrixXd q_prev = random_table(S, A, rng, m.value_bound());
    Rng env(static_cast<std::uint64_t>(t));
    const auto batch = collect_transitions(m, pi, 200, env);
    const MatrixXd fitted = random_table(S, A, rng, m.value_bound());
    const VectorXd zeta = stationary_dist(m, pi);
    const ErrorReport rep = decompose_errors(m, pi, {q_prev, fitted, batch, -1.0}, zeta, true);
    CHECK((rep.q1 - rep.q2).lpNorm<Eigen::Infinity>() <= 1e-9);
    CHECK(rep.eps2 <= 1e-9);
    const MatrixXd total = fitted - rep.target;
    CHECK((total - (rep.e1 + rep.e2 - rep.e3 + rep.e4)).lpNorm<Eigen::Infinity>() <= 1e-9);
    CHECK(rep.eps_total == doctest::Approx(zeta.dot(table_to_pairs(total).cwiseAbs())));
  }
}

TEST_CASE("error decomposition without tabular features is partial") {
  Rng rng(6);
  const TabularMdp m = make_random_mdp(3, 2, 0.9, rng);
  const PolicyTable pi = random_policy(3, 2, rng);
  Rng env(1);
  const auto batch = collect_transitions(m, pi, 50, env);
  const ErrorReport rep = decompose_errors(m, pi, {MatrixXd::Zero(3, 2), MatrixXd::Zero(3, 2), batch, -1.0},
                                           VectorXd::Constant(6, 1.0 / 6), false);
  CHECK(rep.partial);
  CHECK(std::isnan(rep.eps2));
  CHECK(std::isnan(rep.eps3));
  CHECK(std::isfinite(rep.eps4));
  CHECK(std::isfinite(rep.eps_total));
}
