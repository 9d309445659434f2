#include "nac2l/actor.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/QR>

namespace nac2l {

FeatureMap FeatureMap::one_hot(int n_states, int n_actions) {
  if (n_states < 1 || n_actions < 1) throw std::invalid_argument("feature map needs S, A >= 1");
  const Index p = static_cast<Index>(n_states) * n_actions;
  return FeatureMap(FeatureKind::one_hot, n_states, n_actions, MatrixXd::Identity(p, p));
}

FeatureMap FeatureMap::one_hot_reduced(int n_states, int n_actions) {
  if (n_states < 1 || n_actions < 2) throw std::invalid_argument("reduced one-hot features need A >= 2");
  const int per = n_actions - 1;
  MatrixXd rows = MatrixXd::Zero(static_cast<Index>(n_states) * n_actions, static_cast<Index>(n_states) * per);
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < per; ++a) rows(s * n_actions + a, s * per + a) = 1.0;
  }
  return FeatureMap(FeatureKind::one_hot_reduced, n_states, n_actions, std::move(rows));
}

FeatureMap FeatureMap::table(int n_states, int n_actions, MatrixXd rows) {
  if (n_states < 1 || n_actions < 1) throw std::invalid_argument("feature map needs S, A >= 1");
  if (rows.rows() != static_cast<Index>(n_states) * n_actions || rows.cols() < 1) {
    throw std::invalid_argument("feature table must have S*A rows and at least one column");
  }
  if (!rows.allFinite()) throw std::invalid_argument("feature table must be finite");
  return FeatureMap(FeatureKind::table, n_states, n_actions, std::move(rows));
}

PolicyParams PolicyParams::zeros(FeatureMap features) {
  const int p = features.dim();
  return PolicyParams{VectorXd::Zero(p), std::move(features)};
}

namespace {

void check_params(const PolicyParams& params) {
  if (params.lambda.size() != params.features.dim()) throw std::invalid_argument("lambda and feature map dimensions differ");
  if (!params.lambda.allFinite()) throw std::invalid_argument("lambda has non-finite entries");
}

void check_sa(const PolicyParams& params, int s, int a) {
  if (s < 0 || s >= params.features.n_states() || a < 0 || a >= params.features.n_actions()) {
    throw std::out_of_range("invalid (s,a)");
  }
}

}  // namespace

VectorXd action_probs(const PolicyParams& params, int s) {
  check_params(params);
  check_sa(params, s, 0);
  const int A = params.features.n_actions();
  VectorXd logits(A);
  for (int a = 0; a < A; ++a) logits[a] = params.features.phi(s, a).dot(params.lambda);
  const VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

PolicyTable policy_table(const PolicyParams& params) {
  const int S = params.features.n_states();
  PolicyTable t(S, params.features.n_actions());
  for (int s = 0; s < S; ++s) t.row(s) = action_probs(params, s).transpose();
  return t;
}

VectorXd grad_log_pi(const PolicyParams& params, int s, int a) {
  check_sa(params, s, a);
  const VectorXd pi = action_probs(params, s);
  VectorXd mean = VectorXd::Zero(params.features.dim());
  for (int b = 0; b < params.features.n_actions(); ++b) mean += pi[b] * params.features.phi(s, b).transpose();
  return params.features.phi(s, a).transpose() - mean;
}

MatrixXd score_table(const PolicyParams& params) {
  const int S = params.features.n_states();
  const int A = params.features.n_actions();
  MatrixXd out(static_cast<Index>(S) * A, params.features.dim());
  for (int s = 0; s < S; ++s) {
    const VectorXd pi = action_probs(params, s);
    VectorXd mean = VectorXd::Zero(params.features.dim());
    for (int b = 0; b < A; ++b) mean += pi[b] * params.features.phi(s, b).transpose();
    for (int a = 0; a < A; ++a) out.row(s * A + a) = params.features.phi(s, a) - mean.transpose();
  }
  return out;
}

double advantage(const QEstimate& q, const PolicyParams& params, int s, int a) {
  check_sa(params, s, a);
  const VectorXd pi = action_probs(params, s);
  return q.value(s, a) - pi.dot(q.table().row(s).transpose());
}

MatrixXd advantage_table(const MatrixXd& q_table, const PolicyTable& policy) {
  if (q_table.rows() != policy.rows() || q_table.cols() != policy.cols()) {
    throw std::invalid_argument("advantage_table: shapes differ");
  }
  const VectorXd v = policy.cwiseProduct(q_table).rowwise().sum();
  return q_table.colwise() - v;
}

VectorXd sgd_w(std::span<const std::pair<int, int>> samples, const MatrixXd& adv_table, const PolicyParams& params,
               const SgdConfig& config, const VectorXd& w0, std::size_t first_step) {
  check_params(params);
  if (!(config.beta0 > 0.0)) throw std::invalid_argument("sgd_w: beta0 must be positive");
  if (config.w_clip && !(*config.w_clip > 0.0)) throw std::invalid_argument("sgd_w: w_clip must be positive");
  if (w0.size() != params.features.dim()) throw std::invalid_argument("sgd_w: w0 has the wrong dimension");
  const int A = params.features.n_actions();
  if (adv_table.rows() != params.features.n_states() || adv_table.cols() != A) {
    throw std::invalid_argument("sgd_w: advantage table must be S x A");
  }
  const MatrixXd scores = score_table(params);
  VectorXd w = w0;
  std::size_t i = first_step;
  for (const auto& [s, a] : samples) {
    check_sa(params, s, a);
    const auto g = scores.row(s * A + a);
    const double beta = config.beta0 / (static_cast<double>(i) + 1.0);
    const double err = g.dot(w) - adv_table(s, a);
    w -= (2.0 * beta * err) * g.transpose();
    if (config.w_clip) {
      const double norm = w.norm();
      if (norm > *config.w_clip) w *= *config.w_clip / norm;
    }
    ++i;
  }
  return w;
}

std::vector<std::pair<int, int>> state_actions(const std::vector<Transition>& batch) {
  std::vector<std::pair<int, int>> out;
  out.reserve(batch.size());
  for (const auto& t : batch) out.emplace_back(t.s, t.a);
  return out;
}

VectorXd empirical_weights(std::span<const std::pair<int, int>> samples, int n_states, int n_actions) {
  VectorXd w = VectorXd::Zero(static_cast<Index>(n_states) * n_actions);
  if (samples.empty()) return w;
  for (const auto& [s, a] : samples) w[s * n_actions + a] += 1.0;
  return w / static_cast<double>(samples.size());
}

namespace {

void check_weights(const VectorXd& weights, const MatrixXd& adv_table, const PolicyParams& params) {
  const Index pairs = static_cast<Index>(params.features.n_states()) * params.features.n_actions();
  if (weights.size() != pairs) throw std::invalid_argument("weights must cover every state-action pair");
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("weights must be nonnegative and sum to 1");
  }
  if (adv_table.rows() != params.features.n_states() || adv_table.cols() != params.features.n_actions()) {
    throw std::invalid_argument("advantage table must be S x A");
  }
}

}  // namespace

double compat_loss(const VectorXd& w, const VectorXd& weights, const MatrixXd& adv_table,
                   const PolicyParams& params) {
  check_weights(weights, adv_table, params);
  const VectorXd resid = table_to_pairs(adv_table) - score_table(params) * w;
  return weights.dot(resid.cwiseAbs2());
}

VectorXd exact_w_star(const VectorXd& weights, const MatrixXd& adv_table, const PolicyParams& params) {
  check_weights(weights, adv_table, params);
  const VectorXd root = weights.cwiseSqrt();
  const MatrixXd design = root.asDiagonal() * score_table(params);
  const VectorXd target = root.cwiseProduct(table_to_pairs(adv_table));
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(design);
  return cod.solve(target);
}

PolicyParams npg_update(const PolicyParams& params, const VectorXd& w, double eta, double gamma) {
  check_params(params);
  if (w.size() != params.lambda.size()) throw std::invalid_argument("npg_update: w has the wrong dimension");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("npg_update: gamma must lie in [0,1)");
  PolicyParams out = params;
  out.lambda += (eta / (1.0 - gamma)) * w;
  return out;
}

}  // namespace nac2l
