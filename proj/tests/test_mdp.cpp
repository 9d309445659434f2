#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "nac2l/mdp.hpp"

using namespace nac2l;

namespace {

TabularMdp single_state(double r, double gamma) {
  MatrixXd p = MatrixXd::Ones(1, 1);
  MatrixXd rr(1, 1);
  rr << r;
  return TabularMdp(1, 1, p, rr, gamma, VectorXd::Ones(1), std::max(r, 1.0));
}

// 2 states, 2 actions, stochastic.
TabularMdp two_state() {
  MatrixXd p(4, 2);
  p << 0.9, 0.1,  //
      0.2, 0.8,   //
      0.5, 0.5,   //
      0.0, 1.0;
  MatrixXd r(2, 2);
  r << 1.0, 0.0,  //
      0.3, 0.6;
  return TabularMdp(2, 2, p, r, 0.8, VectorXd::Constant(4, 0.25), 1.0);
}

PolicyTable uniform(const TabularMdp& m) {
  return PolicyTable::Constant(m.n_states(), m.n_actions(), 1.0 / m.n_actions());
}

double tv(const VectorXd& a, const VectorXd& b) { return 0.5 * (a - b).lpNorm<1>(); }

// Policy iteration with exact evaluation by linear solve.
VectorXd policy_iteration(const TabularMdp& m) {
  const int S = m.n_states(), A = m.n_actions();
  std::vector<int> act(static_cast<std::size_t>(S), 0);
  for (int round = 0; round < 1000; ++round) {
    MatrixXd pp(S, S);
    VectorXd rr(S);
    for (int s = 0; s < S; ++s) {
      pp.row(s) = m.transitions().row(s * A + act[static_cast<std::size_t>(s)]);
      rr[s] = m.mean_reward()(s, act[static_cast<std::size_t>(s)]);
    }
    const VectorXd v = (MatrixXd::Identity(S, S) - m.gamma() * pp).fullPivLu().solve(rr);
    bool stable = true;
    for (int s = 0; s < S; ++s) {
      int best = act[static_cast<std::size_t>(s)];
      double best_q = rr[s] + m.gamma() * pp.row(s).dot(v);
      for (int a = 0; a < A; ++a) {
        const double q = m.mean_reward()(s, a) + m.gamma() * m.transitions().row(s * A + a).dot(v);
        if (q > best_q + 1e-12) {
          best_q = q;
          best = a;
        }
      }
      if (best != act[static_cast<std::size_t>(s)]) stable = false;
      act[static_cast<std::size_t>(s)] = best;
    }
    if (stable) return v;
  }
  FAIL("policy iteration did not stabilize");
  return {};
}

}  // namespace

TEST_CASE("MDP construction validates its inputs") {
  MatrixXd p = MatrixXd::Ones(1, 1);
  MatrixXd r = MatrixXd::Constant(1, 1, 0.5);
  VectorXd nu = VectorXd::Ones(1);
  CHECK_NOTHROW(TabularMdp(1, 1, p, r, 0.9, nu, 1.0));
  CHECK_THROWS_AS(TabularMdp(1, 1, p, r, 1.0, nu, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(TabularMdp(1, 1, p, r, 0.0, nu, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(TabularMdp(1, 1, p * 0.5, r, 0.9, nu, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(TabularMdp(1, 1, p, r * 4, 0.9, nu, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(TabularMdp(1, 1, p, r, 0.9, nu * 2, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(TabularMdp(1, 2, p, r, 0.9, nu, 1.0), std::invalid_argument);
}

TEST_CASE("step: deterministic successor, exact reward, empirical row") {
  GridSpec g;
  const TabularMdp grid = make_gridworld(g);
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const StepOutcome o = step(grid, 0, 1, rng);
    CHECK(o.s_next == 1);
    CHECK(o.r == grid.rewards()(0, 1));
  }

  g.slip = 0.2;
  const TabularMdp slippery = make_gridworld(g);
  const int s = 1 * 4 + 1;
  VectorXd freq = VectorXd::Zero(slippery.n_states());
  const int n = 100000;
  for (int t = 0; t < n; ++t) freq[step(slippery, s, 1, rng).s_next] += 1.0;
  freq /= n;
  CHECK(tv(freq, slippery.transition_row(s, 1).transpose()) <= 0.01);
}

TEST_CASE("noisy rewards stay in range and r' is their mean") {
  MatrixXd p = MatrixXd::Ones(2, 1);
  MatrixXd r(1, 2);
  r << 0.1, 0.95;
  const TabularMdp m(1, 2, p, r, 0.5, VectorXd::Constant(2, 0.5), 1.0, 0.3);
  // Midpoint-rule integral of clip(r + u) over u in [-h, h].
  for (int a = 0; a < 2; ++a) {
    double acc = 0.0;
    const int cells = 200000;
    for (int i = 0; i < cells; ++i) {
      const double u = -0.3 + 0.6 * (i + 0.5) / cells;
      acc += std::clamp(r(0, a) + u, 0.0, 1.0);
    }
    CHECK(m.mean_reward()(0, a) == doctest::Approx(acc / cells).epsilon(1e-9));
  }
  Rng rng(4);
  double sum = 0.0;
  const int n = 200000;
  for (int t = 0; t < n; ++t) {
    const double x = step(m, 0, 0, rng).r;
    CHECK((x >= 0.0 && x <= 1.0));
    sum += x;
  }
  CHECK(sum / n == doctest::Approx(m.mean_reward()(0, 0)).epsilon(0.01));
}

TEST_CASE("exact Q^pi examples") {
  const TabularMdp one = single_state(1.0, 0.5);
  CHECK(exact_q_pi(one, uniform(one))(0, 0) == doctest::Approx(2.0));

  const TabularMdp m = two_state();
  const MatrixXd q0 = exact_q_pi(m, uniform(m), 0.0);
  CHECK((q0 - m.mean_reward()).norm() <= 1e-15);

  // Linear-system residual.
  const PolicyTable pi = uniform(m);
  const MatrixXd q = exact_q_pi(m, pi);
  const VectorXd qf = table_to_pairs(q);
  const VectorXd resid = qf - (table_to_pairs(m.mean_reward()) + m.gamma() * pair_transition(m, pi) * qf);
  CHECK(resid.lpNorm<Eigen::Infinity>() <= 1e-10);

  // V^pi = sum_a pi Q^pi.
  const VectorXd v = exact_v_pi(m, pi);
  for (int s = 0; s < 2; ++s) CHECK(v[s] == doctest::Approx(pi.row(s).dot(q.row(s))).epsilon(1e-12));
}

TEST_CASE("exact Q^pi agrees with truncated Monte Carlo") {
  const TabularMdp m = two_state();
  PolicyTable pi(2, 2);
  pi << 0.3, 0.7, 0.6, 0.4;
  const MatrixXd q = exact_q_pi(m, pi);
  Rng rng(12);
  const int episodes = 100000;
  const int horizon = 200;
  for (int s0 = 0; s0 < 2; ++s0) {
    double sum = 0.0, sum_sq = 0.0;
    for (int e = 0; e < episodes; ++e) {
      int s = s0, a = 0;
      double ret = 0.0, disc = 1.0;
      for (int t = 0; t < horizon; ++t) {
        const StepOutcome o = step(m, s, a, rng);
        ret += disc * o.r;
        disc *= m.gamma();
        s = o.s_next;
        a = sample_index(pi.row(s).transpose(), rng);
      }
      sum += ret;
      sum_sq += ret * ret;
    }
    const double mean = sum / episodes;
    const double se = std::sqrt((sum_sq / episodes - mean * mean) / episodes);
    CHECK(std::abs(mean - q(s0, 0)) <= 3.0 * se + std::pow(m.gamma(), horizon) * 5.0);
  }
}

TEST_CASE("value iteration") {
  const TabularMdp one = single_state(0.7, 0.9);
  CHECK(exact_v_star(one).v[0] == doctest::Approx(7.0).epsilon(1e-8));

  MatrixXd p = MatrixXd::Ones(2, 1);
  const TabularMdp zero(1, 2, p, MatrixXd::Zero(1, 2), 0.9, VectorXd::Constant(2, 0.5), 1.0);
  CHECK(exact_v_star(zero).v[0] == 0.0);

  MatrixXd r(1, 2);
  r << 0.2, 0.9;
  const TabularMdp two_actions(1, 2, p, r, 0.5, VectorXd::Constant(2, 0.5), 1.0);
  CHECK(exact_v_star(two_actions).v[0] == doctest::Approx(1.8).epsilon(1e-8));

  GridSpec g;
  g.slip = 0.1;
  g.step_reward = 0.05;
  const TabularMdp grid = make_gridworld(g);
  const double tol = 1e-8;
  const ValueIterationResult vi = exact_v_star(grid, tol);
  CHECK((vi.v - policy_iteration(grid)).lpNorm<Eigen::Infinity>() <= tol);
  CHECK((exact_v_pi(grid, vi.greedy) - vi.v).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("stationary distribution") {
  // P^pi is doubly stochastic over pairs under the uniform policy.
  MatrixXd p(4, 2);
  p << 0.3, 0.7,  //
      0.7, 0.3,   //
      0.7, 0.3,   //
      0.3, 0.7;
  const TabularMdp ds(2, 2, p, MatrixXd::Zero(2, 2), 0.9, (VectorXd(4) << 1, 0, 0, 0).finished(), 1.0);
  const VectorXd z = stationary_dist(ds, uniform(ds));
  CHECK((z - VectorXd::Constant(4, 0.25)).lpNorm<Eigen::Infinity>() <= 1e-10);

  const TabularMdp m = two_state();
  PolicyTable pi(2, 2);
  pi << 0.5, 0.5, 0.2, 0.8;
  const VectorXd zeta = stationary_dist(m, pi);
  CHECK((zeta.array() >= 0.0).all());
  CHECK(zeta.sum() == doctest::Approx(1.0).epsilon(1e-12));
  const VectorXd moved = (zeta.transpose() * pair_transition(m, pi)).transpose();
  CHECK((moved - zeta).lpNorm<1>() <= 1e-10);

  Rng rng(9);
  VectorXd freq = VectorXd::Zero(4);
  int s = 0, a = 0;
  const int n = 1000000;
  for (int t = 0; t < n; ++t) {
    freq[s * 2 + a] += 1.0;
    s = step(m, s, a, rng).s_next;
    a = sample_index(pi.row(s).transpose(), rng);
  }
  CHECK(tv(freq / n, zeta) <= 0.01);

  // Period-2 chain from a point mass never settles.
  MatrixXd flip(2, 2);
  flip << 0, 1, 1, 0;
  const TabularMdp periodic(2, 1, flip, MatrixXd::Zero(2, 1), 0.9, (VectorXd(2) << 1, 0).finished(), 1.0);
  CHECK_THROWS_AS(stationary_dist(periodic, PolicyTable::Ones(2, 1)), std::runtime_error);
}

TEST_CASE("discounted visitation") {
  const TabularMdp m = two_state();
  const PolicyTable pi = uniform(m);
  const VectorXd d = discounted_visitation(m, pi);
  CHECK(d.sum() == doctest::Approx(1.0).epsilon(1e-12));
  const MatrixXd pp = pair_transition(m, pi);
  VectorXd series = VectorXd::Zero(4);
  VectorXd x = m.nu();
  double w = 1.0 - m.gamma();
  for (int t = 0; t < 400; ++t) {
    series += w * x;
    x = (x.transpose() * pp).transpose();
    w *= m.gamma();
  }
  CHECK((series - d).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("one-hot and table encoders") {
  const Encoder e = Encoder::one_hot(2, 2);
  CHECK(e.dim() == 4);
  CHECK(e.encode(0, 0).transpose() == VectorXd::Unit(4, 0));
  std::set<std::vector<double>> seen;
  for (int s = 0; s < 2; ++s) {
    for (int a = 0; a < 2; ++a) {
      const VectorXd v = e.encode(s, a).transpose();
      CHECK((v.array() >= 0.0).all());
      CHECK((v.array() <= 1.0).all());
      CHECK(v.sum() == 1.0);
      seen.insert(std::vector<double>(v.data(), v.data() + v.size()));
    }
  }
  CHECK(seen.size() == 4);
  CHECK_THROWS_AS(Encoder::table(2, 2, MatrixXd::Constant(4, 2, 1.5)), std::invalid_argument);
  CHECK_THROWS_AS(Encoder::table(2, 2, MatrixXd::Constant(3, 2, 0.5)), std::invalid_argument);
  const Encoder t = Encoder::table(2, 2, MatrixXd::Constant(4, 3, 0.5));
  CHECK(t.dim() == 3);
}

TEST_CASE("gridworld dynamics") {
  GridSpec g;
  const TabularMdp m = make_gridworld(g);
  CHECK(m.n_states() == 16);
  CHECK(m.n_actions() == 4);
  CHECK(m.transitions()(m.index(0, 1), 1) == 1.0);   // right from (0,0)
  CHECK(m.transitions()(m.index(0, 0), 0) == 1.0);   // up off the grid bounces
  CHECK(m.transitions()(m.index(0, 2), 4) == 1.0);   // down
  const int goal = 15;
  for (int a = 0; a < 4; ++a) {
    CHECK(m.transitions()(m.index(goal, a), goal) == 1.0);
    CHECK(m.rewards()(goal, a) == 1.0);
  }
  CHECK(m.r_max() == 1.0);

  g.slip = 0.2;
  const TabularMdp s = make_gridworld(g);
  const int interior = 1 * 4 + 1;  // (1,1)
  CHECK(s.transitions()(s.index(interior, 1), interior + 1) == doctest::Approx(0.85));
  CHECK(s.transitions()(s.index(interior, 1), interior - 1) == doctest::Approx(0.05));

  g.goal_resets = true;
  const TabularMdp reset = make_gridworld(g);
  CHECK(reset.transitions()(reset.index(goal, 0), 0) == doctest::Approx(1.0 / 16));

  for (const TabularMdp* mdp : {&m, &s, &reset}) {
    for (Index i = 0; i < mdp->transitions().rows(); ++i) {
      CHECK(mdp->transitions().row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  g.goal_x = 4;
  CHECK_THROWS_AS(make_gridworld(g), std::invalid_argument);
  g.goal_x = 0;
  g.slip = 1.0;
  CHECK_THROWS_AS(make_gridworld(g), std::invalid_argument);
}

TEST_CASE("random MDPs are proper and reproducible") {
  Rng a(5), b(5);
  const TabularMdp m1 = make_random_mdp(4, 3, 0.7, a);
  const TabularMdp m2 = make_random_mdp(4, 3, 0.7, b);
  CHECK(m1.transitions() == m2.transitions());
  CHECK(m1.rewards() == m2.rewards());
  for (Index i = 0; i < m1.transitions().rows(); ++i) {
    CHECK(m1.transitions().row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((m1.transitions().row(i).array() > 0.0).all());
  }
}

TEST_CASE("MDP text format") {
  Rng rng(3);
  const TabularMdp m = make_random_mdp(3, 2, 0.8, rng);
  const TabularMdp back = parse_mdp(format_mdp(m));
  CHECK(back.transitions() == m.transitions());
  CHECK(back.rewards() == m.rewards());
  CHECK(back.gamma() == m.gamma());
  CHECK((back.nu() - m.nu()).lpNorm<Eigen::Infinity>() <= 1e-15);

  const std::string text =
      "# two states\n"
      "states 2\nactions 1\ngamma 0.5\n"
      "reward 0 0 1\n"
      "transition 0 0 1 1.0\n"
      "transition 1 0 0 1.0\n";
  const TabularMdp small = parse_mdp(text);
  CHECK(small.r_max() == 1.0);
  CHECK(small.nu()[0] == 0.5);

  auto error_of = [](const std::string& t) {
    try {
      parse_mdp(t);
    } catch (const std::exception& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(error_of("states 2\nactions 1\ngamma 0.5\nbogus 1\n").find("line 4") != std::string::npos);
  CHECK(error_of("states 2\nactions 1\ngamma 0.5\ntransition 0 0 7 1\n").find("line 4") != std::string::npos);
  CHECK(error_of("states 2\nactions x\n").find("line 2") != std::string::npos);
  CHECK(error_of("states 1\nactions 1\n").find("gamma") != std::string::npos);
  CHECK_FALSE(error_of("states 2\nactions 1\ngamma 0.5\ntransition 0 0 1 1\n").empty());  // row of state 1 empty
}
