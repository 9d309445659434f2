#include "nac2l/critic.hpp"

#include <algorithm>
#include <stdexcept>

#include "nac2l/diagnostics.hpp"

namespace nac2l {

QEstimate QEstimate::zero(int n_states, int n_actions, double upper) {
  QEstimate q;
  q.table_ = MatrixXd::Zero(n_states, n_actions);
  q.upper_ = upper;
  return q;
}

QEstimate QEstimate::from_table(const MatrixXd& table, double upper) {
  QEstimate q;
  q.table_ = table.cwiseMax(0.0).cwiseMin(upper);
  q.upper_ = upper;
  return q;
}

QEstimate QEstimate::from_network(relu::ReluNet net, const Encoder& encoder, int n_states, int n_actions,
                                  double upper) {
  if (encoder.rows().rows() != static_cast<Index>(n_states) * n_actions) {
    throw std::invalid_argument("encoder does not cover the state-action space");
  }
  const VectorXd flat = relu::predict_rows(net, encoder.rows());
  QEstimate q = from_table(pairs_to_table(flat, n_states, n_actions), upper);
  q.net_ = std::move(net);
  return q;
}

std::vector<Transition> collect_transitions(const TabularMdp& mdp, const PolicyTable& policy, int n, Rng& rng) {
  if (n < 0) throw std::invalid_argument("collect_transitions: n must be nonnegative");
  validate_policy(mdp, policy);
  std::vector<Transition> out;
  if (n == 0) return out;
  out.reserve(static_cast<std::size_t>(n));
  auto [s, a] = sample_start(mdp, rng);
  for (int t = 0; t < n; ++t) {
    const StepOutcome o = step(mdp, s, a, rng);
    out.push_back({s, a, o.r, o.s_next});
    s = o.s_next;
    a = sample_index(policy.row(s).transpose(), rng);
  }
  return out;
}

VectorXd build_targets(const std::vector<Transition>& batch, const MatrixXd& q_prev, const PolicyTable& policy,
                       double gamma, double upper, TargetRule rule) {
  if (q_prev.rows() != policy.rows() || q_prev.cols() != policy.cols()) {
    throw std::invalid_argument("build_targets: q_prev and policy shapes differ");
  }
  const VectorXd next_v = rule == TargetRule::expectation ? VectorXd(policy.cwiseProduct(q_prev).rowwise().sum())
                                                          : VectorXd(q_prev.rowwise().maxCoeff());
  VectorXd y(static_cast<Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& t = batch[i];
    y[static_cast<Index>(i)] = std::clamp(t.r + gamma * next_v[t.s_next], 0.0, upper);
  }
  return y;
}

FqiResult fqi(const TabularMdp& mdp, const PolicyTable& policy, const Encoder& encoder, const CriticConfig& config,
              std::uint64_t seed, std::uint64_t k) {
  if (config.J < 0) throw std::invalid_argument("fqi: J must be nonnegative");
  if (config.n_per_iter < 1) throw std::invalid_argument("fqi: n_per_iter must be positive");
  const double gamma = config.gamma.value_or(mdp.gamma());
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("fqi: gamma must lie in [0,1)");
  if (!(config.radius >= 0.0)) throw std::invalid_argument("fqi: radius must be nonnegative");
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  const double upper = mdp.value_bound();

  FqiResult res{QEstimate::zero(S, A, upper), {}, {}};
  res.samples.reserve(static_cast<std::size_t>(config.J) * static_cast<std::size_t>(config.n_per_iter));

  for (int j = 1; j <= config.J; ++j) {
    Rng env = make_rng(seed, "env", k, static_cast<std::uint64_t>(j));
    FqiRound round;
    round.q_prev = res.q.table();
    round.batch = collect_transitions(mdp, policy, config.n_per_iter, env);
    const VectorXd y = build_targets(round.batch, round.q_prev, policy, gamma, upper, config.target);
    const double n = static_cast<double>(round.batch.size());

    switch (config.backend) {
      case CriticBackend::relu: {
        relu::FitConfig fc = config.solver;
        fc.radius = config.radius > 0.0 ? config.radius : upper;
        fc.seed = derive_seed(seed, "patterns", k, static_cast<std::uint64_t>(j));
        relu::Dataset data(encoder.encode_batch(round.batch), y);
        relu::FitResult fit = relu::fit(data, fc);
        round.fit_objective = fit.report.final_objective / n;
        round.report = fit.report;
        res.q = QEstimate::from_network(std::move(fit.net), encoder, S, A, upper);
        break;
      }
      case CriticBackend::tabular: {
        MatrixXd sum = MatrixXd::Zero(S, A);
        MatrixXd count = MatrixXd::Zero(S, A);
        for (std::size_t i = 0; i < round.batch.size(); ++i) {
          sum(round.batch[i].s, round.batch[i].a) += y[static_cast<Index>(i)];
          count(round.batch[i].s, round.batch[i].a) += 1.0;
        }
        MatrixXd mean = MatrixXd::Zero(S, A);
        for (int s = 0; s < S; ++s) {
          for (int a = 0; a < A; ++a) {
            if (count(s, a) > 0.0) mean(s, a) = sum(s, a) / count(s, a);
          }
        }
        double sse = 0.0;
        for (std::size_t i = 0; i < round.batch.size(); ++i) {
          const double e = y[static_cast<Index>(i)] - mean(round.batch[i].s, round.batch[i].a);
          sse += e * e;
        }
        round.fit_objective = sse / n;
        res.q = QEstimate::from_table(mean, upper);
        break;
      }
      case CriticBackend::tabular_exact: {
        MatrixXd next;
        if (config.target == TargetRule::expectation) {
          next = bellman_pi(round.q_prev, policy, mdp, gamma);
        } else {
          // T with the chosen discount: reuse T^pi against the greedy policy.
          PolicyTable greedy = PolicyTable::Zero(S, A);
          for (int s = 0; s < S; ++s) {
            Index best = 0;
            round.q_prev.row(s).maxCoeff(&best);
            greedy(s, best) = 1.0;
          }
          next = bellman_pi(round.q_prev, greedy, mdp, gamma);
        }
        res.q = QEstimate::from_table(next, upper);
        round.fit_objective = 0.0;
        break;
      }
      case CriticBackend::oracle:
        res.q = QEstimate::from_table(exact_q_pi(mdp, policy, gamma), upper);
        round.fit_objective = 0.0;
        break;
    }
    round.fitted = res.q.table();
    round.bellman_resid =
        (round.fitted - bellman_pi(round.q_prev, policy, mdp, gamma)).lpNorm<Eigen::Infinity>();
    res.samples.insert(res.samples.end(), round.batch.begin(), round.batch.end());
    res.rounds.push_back(std::move(round));
  }
  return res;
}

}  // namespace nac2l
