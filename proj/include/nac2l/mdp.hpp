#pragma once

// Finite discounted MDPs: construction, simulation, state-action encoding
// and the exact solvers that the rest of the library is tested against.

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nac2l/random.hpp"

namespace nac2l {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// pi(a|s) stored as an |S| x |A| row-stochastic matrix.
using PolicyTable = MatrixXd;

/// Flat pair vector (index s*|A|+a) <-> |S| x |A| table.
MatrixXd pairs_to_table(const VectorXd& flat, int n_states, int n_actions);
VectorXd table_to_pairs(const MatrixXd& table);

struct Transition {
  int s = 0;
  int a = 0;
  double r = 0.0;
  int s_next = 0;
};

/// (S, A, P, R, gamma, nu). State-action pairs are flattened as s * |A| + a.
class TabularMdp {
 public:
  /// `p` is (|S||A|) x |S| with row s*|A|+a holding P(.|s,a); `r` is |S| x |A|
  /// with entries in [0, r_max]; `nu` is a distribution over the |S||A| pairs.
  /// Rewards observed by step() are r(s,a) + U(-noise, noise), clipped to
  /// [0, r_max].
  TabularMdp(int n_states, int n_actions, MatrixXd p, MatrixXd r, double gamma, VectorXd nu,
             double r_max, double reward_noise = 0.0);

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  int pairs() const { return n_states_ * n_actions_; }
  int index(int s, int a) const { return s * n_actions_ + a; }

  const MatrixXd& transitions() const { return p_; }
  auto transition_row(int s, int a) const { return p_.row(index(s, a)); }
  const MatrixXd& rewards() const { return r_; }
  const VectorXd& nu() const { return nu_; }
  double gamma() const { return gamma_; }
  double r_max() const { return r_max_; }
  double reward_noise() const { return reward_noise_; }
  /// R_max / (1 - gamma), the bound on every value in the problem.
  double value_bound() const { return r_max_ / (1.0 - gamma_); }

  /// r'(s,a): expected observed reward, accounting for clipped noise.
  const MatrixXd& mean_reward() const { return mean_r_; }

  /// |S| marginal of nu.
  VectorXd nu_states() const;

 private:
  int n_states_;
  int n_actions_;
  MatrixXd p_;
  MatrixXd r_;
  double gamma_;
  VectorXd nu_;
  double r_max_;
  double reward_noise_;
  MatrixXd mean_r_;
};

struct StepOutcome {
  double r = 0.0;
  int s_next = 0;
};

StepOutcome step(const TabularMdp& mdp, int s, int a, Rng& rng);

/// Draws a start pair from nu.
std::pair<int, int> sample_start(const TabularMdp& mdp, Rng& rng);

/// Checks that `policy` is |S| x |A|, nonnegative, with rows summing to one.
void validate_policy(const TabularMdp& mdp, const PolicyTable& policy);

/// P^pi over state-action pairs: P^pi[(s,a),(s',a')] = P(s'|s,a) pi(a'|s').
MatrixXd pair_transition(const TabularMdp& mdp, const PolicyTable& policy);

/// Q^pi from (I - gamma P^pi) Q = r'. `gamma` overrides the MDP's discount and
/// may be 0 here (only here).
MatrixXd exact_q_pi(const TabularMdp& mdp, const PolicyTable& policy,
                    std::optional<double> gamma = std::nullopt);

/// V^pi(s) = sum_a pi(a|s) Q^pi(s,a).
VectorXd exact_v_pi(const TabularMdp& mdp, const PolicyTable& policy);

struct ValueIterationResult {
  VectorXd v;
  MatrixXd q;
  PolicyTable greedy;  // deterministic, first maximizing action
  int iterations = 0;
};

/// Value iteration stopped once ||V_{t+1} - V_t||_inf <= tol (1 - gamma) / gamma,
/// so the returned V is within tol of V*.
ValueIterationResult exact_v_star(const TabularMdp& mdp, double tol = 1e-8);

/// Stationary distribution over state-action pairs of the chain induced by
/// `policy`, by power iteration from nu (with repeated squaring of P^pi).
/// Throws std::runtime_error when the iteration does not settle, which is
/// what a periodic chain does.
VectorXd stationary_dist(const TabularMdp& mdp, const PolicyTable& policy, double tol = 1e-12);

/// (1 - gamma) sum_t gamma^t Pr(s_t, a_t) from nu, by linear solve.
VectorXd discounted_visitation(const TabularMdp& mdp, const PolicyTable& policy);

/// Maps (s, a) into [0,1]^d through a lookup table with one row per pair.
class Encoder {
 public:
  static Encoder one_hot(int n_states, int n_actions);
  /// Rows indexed by s * n_actions + a; every entry must lie in [0,1].
  static Encoder table(int n_states, int n_actions, MatrixXd rows);

  int dim() const { return static_cast<int>(rows_.cols()); }
  bool is_one_hot() const { return one_hot_; }
  auto encode(int s, int a) const { return rows_.row(s * n_actions_ + a); }
  const MatrixXd& rows() const { return rows_; }
  /// One row per transition, encoding (s, a).
  MatrixXd encode_batch(const std::vector<Transition>& batch) const;

 private:
  Encoder(int n_actions, MatrixXd rows, bool one_hot)
      : n_actions_(n_actions), rows_(std::move(rows)), one_hot_(one_hot) {}
  int n_actions_;
  MatrixXd rows_;
  bool one_hot_;
};

struct GridSpec {
  int width = 4;
  int height = 4;
  int goal_x = 3;
  int goal_y = 3;
  double step_reward = 0.0;
  double goal_reward = 1.0;
  double slip = 0.0;
  /// false: the goal is absorbing. true: every action at the goal moves to
  /// a uniformly random cell, which keeps the chain irreducible.
  bool goal_resets = false;
  double gamma = 0.9;
  double reward_noise = 0.0;

  bool operator==(const GridSpec&) const = default;
};

/// Actions 0 up (y-1), 1 right (x+1), 2 down (y+1), 3 left (x-1); state
/// y * width + x. Off-grid moves stay put. With probability `slip` the action
/// is replaced by one drawn uniformly from all four. The goal pays
/// goal_reward under every action, every other pair pays step_reward.
TabularMdp make_gridworld(const GridSpec& spec);

/// Dense random MDP: every P row has full support (uniform weights,
/// normalized), rewards uniform in [0,1], nu uniform.
TabularMdp make_random_mdp(int n_states, int n_actions, double gamma, Rng& rng);

/// Line-oriented text format, see README. Parse errors carry line numbers.
TabularMdp load_mdp(const std::filesystem::path& path);
TabularMdp parse_mdp(const std::string& text);
std::string format_mdp(const TabularMdp& mdp);

}  // namespace nac2l
