#include "nac2l/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <Eigen/LU>

#include "nac2l/text.hpp"

namespace nac2l {

MatrixXd pairs_to_table(const VectorXd& flat, int n_states, int n_actions) {
  if (flat.size() != static_cast<Index>(n_states) * n_actions) {
    throw std::invalid_argument("pair vector has the wrong length");
  }
  MatrixXd t(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) t(s, a) = flat[s * n_actions + a];
  }
  return t;
}

VectorXd table_to_pairs(const MatrixXd& table) {
  VectorXd flat(table.size());
  const Index A = table.cols();
  for (Index s = 0; s < table.rows(); ++s) {
    for (Index a = 0; a < A; ++a) flat[s * A + a] = table(s, a);
  }
  return flat;
}

namespace {

// E[clip(mean + U(-h, h), 0, hi)].
double clipped_uniform_mean(double mean, double h, double hi) {
  if (h <= 0.0) return std::clamp(mean, 0.0, hi);
  const double lo_x = mean - h;
  const double hi_x = mean + h;
  double integral = 0.0;
  const double a = std::max(lo_x, 0.0);
  const double b = std::min(hi_x, hi);
  if (a < b) integral += 0.5 * (b * b - a * a);
  integral += hi * std::max(0.0, hi_x - std::max(lo_x, hi));
  return integral / (2.0 * h);
}

}  // namespace

TabularMdp::TabularMdp(int n_states, int n_actions, MatrixXd p, MatrixXd r, double gamma,
                       VectorXd nu, double r_max, double reward_noise)
    : n_states_(n_states),
      n_actions_(n_actions),
      p_(std::move(p)),
      r_(std::move(r)),
      gamma_(gamma),
      nu_(std::move(nu)),
      r_max_(r_max),
      reward_noise_(reward_noise) {
  if (n_states < 1 || n_actions < 1) throw std::invalid_argument("MDP needs at least one state and one action");
  const Index pairs = static_cast<Index>(n_states) * n_actions;
  if (p_.rows() != pairs || p_.cols() != n_states) throw std::invalid_argument("transition matrix must be (S*A) x S");
  if (r_.rows() != n_states || r_.cols() != n_actions) throw std::invalid_argument("reward table must be S x A");
  if (nu_.size() != pairs) throw std::invalid_argument("start distribution must have S*A entries");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0,1)");
  if (!(r_max > 0.0) || !std::isfinite(r_max)) throw std::invalid_argument("r_max must be positive");
  if (!(reward_noise >= 0.0) || !std::isfinite(reward_noise)) throw std::invalid_argument("reward noise must be nonnegative");
  if (!p_.allFinite() || (p_.array() < 0.0).any()) throw std::invalid_argument("transition probabilities must be nonnegative");
  for (Index i = 0; i < pairs; ++i) {
    if (std::abs(p_.row(i).sum() - 1.0) > 1e-9) {
      throw std::invalid_argument("transition row for (s=" + std::to_string(i / n_actions) + ", a=" +
                                  std::to_string(i % n_actions) + ") does not sum to 1");
    }
  }
  if (!r_.allFinite() || (r_.array() < 0.0).any() || (r_.array() > r_max).any()) {
    throw std::invalid_argument("rewards must lie in [0, r_max]");
  }
  if (!nu_.allFinite() || (nu_.array() < 0.0).any() || std::abs(nu_.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("start distribution must be nonnegative and sum to 1");
  }
  mean_r_.resize(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) mean_r_(s, a) = clipped_uniform_mean(r_(s, a), reward_noise_, r_max_);
  }
}

VectorXd TabularMdp::nu_states() const {
  VectorXd out = VectorXd::Zero(n_states_);
  for (int s = 0; s < n_states_; ++s) out[s] = nu_.segment(static_cast<Index>(s) * n_actions_, n_actions_).sum();
  return out;
}

StepOutcome step(const TabularMdp& mdp, int s, int a, Rng& rng) {
  if (s < 0 || s >= mdp.n_states() || a < 0 || a >= mdp.n_actions()) throw std::out_of_range("step: invalid (s,a)");
  StepOutcome out;
  out.s_next = sample_index(mdp.transition_row(s, a).transpose(), rng);
  out.r = mdp.rewards()(s, a);
  if (mdp.reward_noise() > 0.0) {
    const double u = 2.0 * uniform01(rng) - 1.0;
    out.r = std::clamp(out.r + mdp.reward_noise() * u, 0.0, mdp.r_max());
  }
  return out;
}

std::pair<int, int> sample_start(const TabularMdp& mdp, Rng& rng) {
  const int idx = sample_index(mdp.nu(), rng);
  return {idx / mdp.n_actions(), idx % mdp.n_actions()};
}

void validate_policy(const TabularMdp& mdp, const PolicyTable& policy) {
  if (policy.rows() != mdp.n_states() || policy.cols() != mdp.n_actions()) {
    throw std::invalid_argument("policy table must be S x A");
  }
  if (!policy.allFinite() || (policy.array() < 0.0).any()) throw std::invalid_argument("policy has negative entries");
  for (Index s = 0; s < policy.rows(); ++s) {
    if (std::abs(policy.row(s).sum() - 1.0) > 1e-9) throw std::invalid_argument("policy row does not sum to 1");
  }
}

MatrixXd pair_transition(const TabularMdp& mdp, const PolicyTable& policy) {
  validate_policy(mdp, policy);
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  MatrixXd out(mdp.pairs(), mdp.pairs());
  for (int i = 0; i < mdp.pairs(); ++i) {
    for (int s2 = 0; s2 < S; ++s2) {
      const double p = mdp.transitions()(i, s2);
      for (int a2 = 0; a2 < A; ++a2) out(i, s2 * A + a2) = p * policy(s2, a2);
    }
  }
  return out;
}

MatrixXd exact_q_pi(const TabularMdp& mdp, const PolicyTable& policy, std::optional<double> gamma) {
  const double g = gamma.value_or(mdp.gamma());
  if (!(g >= 0.0 && g < 1.0)) throw std::invalid_argument("exact_q_pi: gamma must lie in [0,1)");
  const MatrixXd m = MatrixXd::Identity(mdp.pairs(), mdp.pairs()) - g * pair_transition(mdp, policy);
  const VectorXd q = m.partialPivLu().solve(table_to_pairs(mdp.mean_reward()));
  return pairs_to_table(q, mdp.n_states(), mdp.n_actions());
}

VectorXd exact_v_pi(const TabularMdp& mdp, const PolicyTable& policy) {
  const MatrixXd q = exact_q_pi(mdp, policy);
  return policy.cwiseProduct(q).rowwise().sum();
}

ValueIterationResult exact_v_star(const TabularMdp& mdp, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("exact_v_star: tol must be positive");
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  const double g = mdp.gamma();
  const double threshold = tol * (1.0 - g) / g;
  const VectorXd r = table_to_pairs(mdp.mean_reward());

  ValueIterationResult res;
  res.v = VectorXd::Zero(S);
  for (;;) {
    const VectorXd q = r + g * mdp.transitions() * res.v;
    VectorXd v_next(S);
    for (int s = 0; s < S; ++s) v_next[s] = q.segment(static_cast<Index>(s) * A, A).maxCoeff();
    ++res.iterations;
    const double change = (v_next - res.v).lpNorm<Eigen::Infinity>();
    res.v = std::move(v_next);
    if (change <= threshold) break;
  }
  res.q = pairs_to_table(r + g * mdp.transitions() * res.v, S, A);
  res.greedy = PolicyTable::Zero(S, A);
  for (int s = 0; s < S; ++s) {
    Index best = 0;
    res.q.row(s).maxCoeff(&best);
    res.greedy(s, best) = 1.0;
  }
  return res;
}

VectorXd stationary_dist(const TabularMdp& mdp, const PolicyTable& policy, double tol) {
  const MatrixXd p = pair_transition(mdp, policy);
  MatrixXd power = p;
  VectorXd x = mdp.nu();
  constexpr int kMaxSquarings = 64;
  for (int m = 0; m <= kMaxSquarings; ++m) {
    const VectorXd once = (x.transpose() * p).transpose();
    if ((once - x).lpNorm<1>() <= tol) return x / x.sum();
    x = (x.transpose() * power).transpose();
    x = x.cwiseMax(0.0);
    x /= x.sum();
    power = power * power;
  }
  throw std::runtime_error("stationary_dist: power iteration did not converge (periodic or reducible chain?)");
}

VectorXd discounted_visitation(const TabularMdp& mdp, const PolicyTable& policy) {
  const double g = mdp.gamma();
  const MatrixXd m = MatrixXd::Identity(mdp.pairs(), mdp.pairs()) - g * pair_transition(mdp, policy);
  // d^T (I - g P) = (1 - g) nu^T
  const VectorXd d = m.transpose().partialPivLu().solve((1.0 - g) * mdp.nu());
  return d;
}

// ---------------------------------------------------------------------------

Encoder Encoder::one_hot(int n_states, int n_actions) {
  if (n_states < 1 || n_actions < 1) throw std::invalid_argument("encoder needs S, A >= 1");
  const Index pairs = static_cast<Index>(n_states) * n_actions;
  return Encoder(n_actions, MatrixXd::Identity(pairs, pairs), true);
}

Encoder Encoder::table(int n_states, int n_actions, MatrixXd rows) {
  if (n_states < 1 || n_actions < 1) throw std::invalid_argument("encoder needs S, A >= 1");
  if (rows.rows() != static_cast<Index>(n_states) * n_actions || rows.cols() < 1) {
    throw std::invalid_argument("encoder table must have S*A rows and at least one column");
  }
  if (!rows.allFinite() || (rows.array() < 0.0).any() || (rows.array() > 1.0).any()) {
    throw std::invalid_argument("encoder entries must lie in [0,1]");
  }
  return Encoder(n_actions, std::move(rows), false);
}

MatrixXd Encoder::encode_batch(const std::vector<Transition>& batch) const {
  MatrixXd x(static_cast<Index>(batch.size()), rows_.cols());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    x.row(static_cast<Index>(i)) = rows_.row(static_cast<Index>(batch[i].s) * n_actions_ + batch[i].a);
  }
  return x;
}

// ---------------------------------------------------------------------------

TabularMdp make_gridworld(const GridSpec& g) {
  if (g.width < 1 || g.height < 1) throw std::invalid_argument("gridworld needs positive width and height");
  if (g.goal_x < 0 || g.goal_x >= g.width || g.goal_y < 0 || g.goal_y >= g.height) {
    throw std::invalid_argument("gridworld goal lies outside the grid");
  }
  if (!(g.slip >= 0.0 && g.slip < 1.0)) throw std::invalid_argument("gridworld slip must lie in [0,1)");
  if (!(g.step_reward >= 0.0) || !(g.goal_reward >= 0.0)) throw std::invalid_argument("gridworld rewards must be nonnegative");

  const int S = g.width * g.height;
  constexpr int A = 4;
  const int goal = g.goal_y * g.width + g.goal_x;
  const int dx[A] = {0, 1, 0, -1};
  const int dy[A] = {-1, 0, 1, 0};

  auto successor = [&](int s, int a) {
    const int x = s % g.width;
    const int y = s / g.width;
    const int nx = x + dx[a];
    const int ny = y + dy[a];
    if (nx < 0 || nx >= g.width || ny < 0 || ny >= g.height) return s;
    return ny * g.width + nx;
  };

  MatrixXd p = MatrixXd::Zero(S * A, S);
  MatrixXd r(S, A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      const int row = s * A + a;
      if (s == goal) {
        r(s, a) = g.goal_reward;
        if (g.goal_resets) {
          p.row(row).setConstant(1.0 / S);
        } else {
          p(row, s) = 1.0;
        }
        continue;
      }
      r(s, a) = g.step_reward;
      p(row, successor(s, a)) += 1.0 - g.slip;
      for (int b = 0; b < A; ++b) p(row, successor(s, b)) += g.slip / A;
    }
  }
  double r_max = std::max(g.step_reward, g.goal_reward);
  if (r_max == 0.0) r_max = 1.0;
  VectorXd nu = VectorXd::Constant(S * A, 1.0 / (S * A));
  return TabularMdp(S, A, std::move(p), std::move(r), g.gamma, std::move(nu), r_max, g.reward_noise);
}

TabularMdp make_random_mdp(int n_states, int n_actions, double gamma, Rng& rng) {
  if (n_states < 1 || n_actions < 1) throw std::invalid_argument("random MDP needs S, A >= 1");
  const int pairs = n_states * n_actions;
  MatrixXd p(pairs, n_states);
  for (int i = 0; i < pairs; ++i) {
    for (int s2 = 0; s2 < n_states; ++s2) p(i, s2) = uniform01(rng) + 1e-3;
    p.row(i) /= p.row(i).sum();
  }
  MatrixXd r(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) r(s, a) = uniform01(rng);
  }
  VectorXd nu = VectorXd::Constant(pairs, 1.0 / pairs);
  return TabularMdp(n_states, n_actions, std::move(p), std::move(r), gamma, std::move(nu), 1.0);
}

// ---------------------------------------------------------------------------
// Text format

namespace {

[[noreturn]] void parse_fail(int line, const std::string& what) {
  throw std::runtime_error("mdp line " + std::to_string(line) + ": " + what);
}

}  // namespace

TabularMdp parse_mdp(const std::string& text) {
  long long n_states = 0;
  long long n_actions = 0;
  std::optional<double> gamma;
  std::optional<double> r_max;
  double noise = 0.0;
  struct Entry {
    int line;
    long long s, a, s2;
    double value;
  };
  std::vector<Entry> rewards, transitions, starts;

  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  auto need_int = [&](std::string_view w, const char* what) {
    long long v = 0;
    if (!parse_int(w, v)) parse_fail(line_no, std::string("expected integer ") + what + ", got '" + std::string(w) + "'");
    return v;
  };
  auto need_double = [&](std::string_view w, const char* what) {
    double v = 0.0;
    if (!parse_double(w, v) || !std::isfinite(v)) {
      parse_fail(line_no, std::string("expected number ") + what + ", got '" + std::string(w) + "'");
    }
    return v;
  };
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line(raw);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto w = split_words(line);
    if (w.empty()) continue;
    auto arity = [&](std::size_t n) {
      if (w.size() != n) parse_fail(line_no, "'" + std::string(w[0]) + "' takes " + std::to_string(n - 1) + " value(s)");
    };
    if (w[0] == "states") {
      arity(2);
      n_states = need_int(w[1], "state count");
    } else if (w[0] == "actions") {
      arity(2);
      n_actions = need_int(w[1], "action count");
    } else if (w[0] == "gamma") {
      arity(2);
      gamma = need_double(w[1], "gamma");
    } else if (w[0] == "r_max") {
      arity(2);
      r_max = need_double(w[1], "r_max");
    } else if (w[0] == "reward_noise") {
      arity(2);
      noise = need_double(w[1], "reward_noise");
    } else if (w[0] == "reward") {
      arity(4);
      rewards.push_back({line_no, need_int(w[1], "state"), need_int(w[2], "action"), 0, need_double(w[3], "reward")});
    } else if (w[0] == "transition") {
      arity(5);
      transitions.push_back({line_no, need_int(w[1], "state"), need_int(w[2], "action"), need_int(w[3], "next state"),
                             need_double(w[4], "probability")});
    } else if (w[0] == "start") {
      arity(4);
      starts.push_back({line_no, need_int(w[1], "state"), need_int(w[2], "action"), 0, need_double(w[3], "weight")});
    } else {
      parse_fail(line_no, "unknown directive '" + std::string(w[0]) + "'");
    }
  }
  if (n_states < 1) throw std::runtime_error("mdp: missing or non-positive 'states'");
  if (n_actions < 1) throw std::runtime_error("mdp: missing or non-positive 'actions'");
  if (!gamma) throw std::runtime_error("mdp: missing 'gamma'");
  if (n_states * n_actions > 1'000'000) throw std::runtime_error("mdp: state-action space too large");

  const int S = static_cast<int>(n_states);
  const int A = static_cast<int>(n_actions);
  auto check_sa = [&](const Entry& e) {
    if (e.s < 0 || e.s >= S) parse_fail(e.line, "state " + std::to_string(e.s) + " out of range");
    if (e.a < 0 || e.a >= A) parse_fail(e.line, "action " + std::to_string(e.a) + " out of range");
  };
  MatrixXd r = MatrixXd::Zero(S, A);
  for (const auto& e : rewards) {
    check_sa(e);
    r(e.s, e.a) = e.value;
  }
  MatrixXd p = MatrixXd::Zero(static_cast<Index>(S) * A, S);
  for (const auto& e : transitions) {
    check_sa(e);
    if (e.s2 < 0 || e.s2 >= S) parse_fail(e.line, "next state " + std::to_string(e.s2) + " out of range");
    if (e.value < 0.0) parse_fail(e.line, "negative probability");
    p(e.s * A + e.a, e.s2) += e.value;
  }
  VectorXd nu;
  if (starts.empty()) {
    nu = VectorXd::Constant(static_cast<Index>(S) * A, 1.0 / (static_cast<double>(S) * A));
  } else {
    nu = VectorXd::Zero(static_cast<Index>(S) * A);
    for (const auto& e : starts) {
      check_sa(e);
      if (e.value < 0.0) parse_fail(e.line, "negative start weight");
      nu[e.s * A + e.a] += e.value;
    }
    if (!(nu.sum() > 0.0)) throw std::runtime_error("mdp: start weights sum to zero");
    nu /= nu.sum();
  }
  double rm = r_max.value_or(r.size() > 0 ? r.maxCoeff() : 0.0);
  if (!r_max && rm == 0.0) rm = 1.0;
  return TabularMdp(S, A, std::move(p), std::move(r), *gamma, std::move(nu), rm, noise);
}

TabularMdp load_mdp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mdp file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_mdp(buf.str());
}

std::string format_mdp(const TabularMdp& mdp) {
  std::ostringstream out;
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  out << "states " << S << "\nactions " << A << "\ngamma " << format_double(mdp.gamma()) << "\nr_max "
      << format_double(mdp.r_max()) << "\nreward_noise " << format_double(mdp.reward_noise()) << "\n";
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) out << "reward " << s << ' ' << a << ' ' << format_double(mdp.rewards()(s, a)) << "\n";
  }
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      for (int s2 = 0; s2 < S; ++s2) {
        const double p = mdp.transitions()(s * A + a, s2);
        if (p != 0.0) out << "transition " << s << ' ' << a << ' ' << s2 << ' ' << format_double(p) << "\n";
      }
    }
  }
  for (int i = 0; i < mdp.pairs(); ++i) {
    if (mdp.nu()[i] != 0.0) out << "start " << i / A << ' ' << i % A << ' ' << format_double(mdp.nu()[i]) << "\n";
  }
  return out.str();
}

}  // namespace nac2l
