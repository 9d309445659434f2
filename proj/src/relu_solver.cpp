#include "nac2l/relu_solver.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/QR>

namespace nac2l::relu {

namespace {

void check_shapes(const ConvexVars& vars, const Dataset& data,
                  std::span<const ActivationPattern> patterns) {
  if (vars.dim != data.dim()) {
    throw std::invalid_argument("convex variables have block dimension " + std::to_string(vars.dim) +
                                ", data has " + std::to_string(data.dim()));
  }
  if (vars.u.size() != vars.dim * static_cast<Index>(patterns.size())) {
    throw std::invalid_argument("convex variables hold " + std::to_string(vars.block_count()) +
                                " blocks for " + std::to_string(patterns.size()) + " patterns");
  }
  for (const auto& pattern : patterns) {
    if (pattern.size() != data.rows()) {
      throw std::invalid_argument("activation pattern length does not match the number of rows");
    }
  }
}

VectorXd mask_vector(const ActivationPattern& pattern) {
  VectorXd m(pattern.size());
  for (Index j = 0; j < m.size(); ++j) m[j] = pattern.mask[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
  return m;
}

VectorXd signs(const ActivationPattern& pattern) {
  VectorXd s(pattern.size());
  for (Index j = 0; j < s.size(); ++j) s[j] = pattern.mask[static_cast<std::size_t>(j)] ? 1.0 : -1.0;
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Dataset / patterns

Dataset::Dataset(MatrixXd x, VectorXd y) : x_(std::move(x)), y_(std::move(y)) {
  if (x_.rows() < 1 || x_.cols() < 1) throw std::invalid_argument("dataset needs n >= 1 and d >= 1");
  if (y_.size() != x_.rows()) throw std::invalid_argument("dataset targets do not match row count");
  if (!x_.allFinite() || !y_.allFinite()) throw std::invalid_argument("dataset contains non-finite values");
}

bool Dataset::in_unit_box() const {
  return (x_.array() >= 0.0).all() && (x_.array() <= 1.0).all();
}

ActivationPattern ActivationPattern::from_gate(const MatrixXd& x, VectorXd gate) {
  if (gate.size() != x.cols()) throw std::invalid_argument("gate dimension does not match data");
  const VectorXd scores = x * gate;
  ActivationPattern p;
  p.mask.resize(static_cast<std::size_t>(x.rows()));
  for (Index j = 0; j < x.rows(); ++j) p.mask[static_cast<std::size_t>(j)] = scores[j] > 0.0;
  p.gate = std::move(gate);
  return p;
}

bool ActivationPattern::matches_gate(const MatrixXd& x) const {
  if (gate.size() != x.cols() || size() != x.rows()) return false;
  const VectorXd scores = x * gate;
  for (Index j = 0; j < x.rows(); ++j) {
    if (mask[static_cast<std::size_t>(j)] != (scores[j] > 0.0)) return false;
  }
  return true;
}

std::vector<ActivationPattern> sample_patterns(const Dataset& data, std::size_t count, Rng& rng) {
  if (count == 0) throw std::invalid_argument("pattern count must be positive");
  std::vector<ActivationPattern> out;
  std::set<std::vector<bool>> seen;
  for (std::size_t c = 0; c < count; ++c) {
    VectorXd g(data.dim());
    for (Index k = 0; k < g.size(); ++k) g[k] = standard_normal(rng);
    auto pattern = ActivationPattern::from_gate(data.x(), std::move(g));
    if (seen.insert(pattern.mask).second) out.push_back(std::move(pattern));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convex program

ConvexVars ConvexVars::zeros(Index blocks, Index dim, double radius) {
  return ConvexVars{VectorXd::Zero(blocks * dim), dim, radius};
}

namespace {

VectorXd convex_residual(const ConvexVars& vars, const Dataset& data,
                         std::span<const ActivationPattern> patterns) {
  check_shapes(vars, data, patterns);
  VectorXd r = -data.y();
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    const VectorXd xu = data.x() * vars.block(static_cast<Index>(i));
    r += mask_vector(patterns[i]).cwiseProduct(xu);
  }
  return r;
}

}  // namespace

double convex_objective(const ConvexVars& vars, const Dataset& data,
                        std::span<const ActivationPattern> patterns) {
  return convex_residual(vars, data, patterns).squaredNorm();
}

ConvexVars convex_gradient(const ConvexVars& vars, const Dataset& data,
                           std::span<const ActivationPattern> patterns) {
  const VectorXd r = convex_residual(vars, data, patterns);
  ConvexVars g = ConvexVars::zeros(vars.block_count(), vars.dim, vars.radius);
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    g.block(static_cast<Index>(i)) = 2.0 * data.x().transpose() * mask_vector(patterns[i]).cwiseProduct(r);
  }
  return g;
}

VectorXd convex_model_output(const ConvexVars& vars, std::span<const ActivationPattern> patterns,
                             const MatrixXd& x) {
  if (vars.dim != x.cols() || vars.block_count() != static_cast<Index>(patterns.size())) {
    throw std::invalid_argument("convex variables do not match patterns or row dimension");
  }
  VectorXd out = VectorXd::Zero(x.rows());
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    const VectorXd gate_scores = x * patterns[i].gate;
    const VectorXd xu = x * vars.block(static_cast<Index>(i));
    for (Index j = 0; j < x.rows(); ++j) {
      if (gate_scores[j] > 0.0) out[j] += xu[j];
    }
  }
  return out;
}

VectorXd project_l1(const VectorXd& v, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("L1 radius must be positive");
  if (v.lpNorm<1>() <= radius) return v;

  std::vector<double> mag(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) mag[static_cast<std::size_t>(i)] = std::abs(v[i]);
  std::sort(mag.begin(), mag.end(), std::greater<>());

  double cumsum = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < mag.size(); ++j) {
    cumsum += mag[j];
    const double candidate = (cumsum - radius) / static_cast<double>(j + 1);
    if (mag[j] > candidate) theta = candidate;
  }

  VectorXd out(v.size());
  for (Index i = 0; i < v.size(); ++i) {
    const double shrunk = std::max(std::abs(v[i]) - theta, 0.0);
    out[i] = std::copysign(shrunk, v[i]);
  }
  // Rounding in the threshold can leave the norm an ulp or two above the
  // budget; pull it back so feasibility holds exactly.
  double norm = out.lpNorm<1>();
  if (norm > radius) {
    out *= radius / norm;
    while (out.lpNorm<1>() > radius) out *= std::nextafter(1.0, 0.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stacked design

StackedDesign::StackedDesign(const Dataset& data, std::span<const ActivationPattern> patterns) {
  const Index n = data.rows();
  const Index d = data.dim();
  const Index p = static_cast<Index>(patterns.size());
  for (const auto& pattern : patterns) {
    if (pattern.size() != n) throw std::invalid_argument("activation pattern length does not match the number of rows");
  }

  // Group rows that agree in every coordinate and every pattern bit.
  std::map<std::pair<std::vector<double>, std::vector<bool>>, Index> group_of;
  std::vector<Index> representative;
  std::vector<Index> row_group(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) {
    std::vector<double> coords(static_cast<std::size_t>(d));
    for (Index k = 0; k < d; ++k) coords[static_cast<std::size_t>(k)] = data.x()(j, k);
    std::vector<bool> bits(static_cast<std::size_t>(p));
    for (Index i = 0; i < p; ++i) bits[static_cast<std::size_t>(i)] = patterns[static_cast<std::size_t>(i)].mask[static_cast<std::size_t>(j)];
    auto [it, inserted] = group_of.try_emplace({std::move(coords), std::move(bits)},
                                               static_cast<Index>(representative.size()));
    if (inserted) representative.push_back(j);
    row_group[static_cast<std::size_t>(j)] = it->second;
  }

  const Index groups = static_cast<Index>(representative.size());
  VectorXd count = VectorXd::Zero(groups);
  VectorXd mean = VectorXd::Zero(groups);
  for (Index j = 0; j < n; ++j) {
    const Index g = row_group[static_cast<std::size_t>(j)];
    count[g] += 1.0;
    mean[g] += data.y()[j];
  }
  mean = mean.cwiseQuotient(count);
  offset_ = 0.0;
  for (Index j = 0; j < n; ++j) {
    const double dev = data.y()[j] - mean[row_group[static_cast<std::size_t>(j)]];
    offset_ += dev * dev;
  }

  std::vector<Eigen::Triplet<double>> triplets;
  for (Index g = 0; g < groups; ++g) {
    const Index j = representative[static_cast<std::size_t>(g)];
    const double scale = std::sqrt(count[g]);
    for (Index i = 0; i < p; ++i) {
      if (!patterns[static_cast<std::size_t>(i)].mask[static_cast<std::size_t>(j)]) continue;
      for (Index k = 0; k < d; ++k) {
        const double value = data.x()(j, k);
        if (value != 0.0) triplets.emplace_back(g, i * d + k, scale * value);
      }
    }
  }
  design_.resize(groups, p * d);
  design_.setFromTriplets(triplets.begin(), triplets.end());
  target_ = count.cwiseSqrt().cwiseProduct(mean);
}

double StackedDesign::objective(const VectorXd& u) const {
  return (design_ * u - target_).squaredNorm() + offset_;
}

VectorXd StackedDesign::gradient(const VectorXd& u) const {
  return 2.0 * (design_.transpose() * (design_ * u - target_));
}

double StackedDesign::smoothness() const {
  if (design_.nonZeros() == 0) return 0.0;
  Rng rng(0x5eed);
  VectorXd v(design_.cols());
  for (Index k = 0; k < v.size(); ++k) v[k] = standard_normal(rng);
  v.normalize();
  double estimate = 0.0;
  for (int it = 0; it < 10000; ++it) {
    VectorXd w = design_.transpose() * (design_ * v);
    const double norm = w.norm();
    if (norm == 0.0) break;
    const double previous = estimate;
    estimate = norm;
    v = w / norm;
    if (std::abs(estimate - previous) <= 1e-12 * estimate) break;
  }
  return 2.0 * estimate;
}

// ---------------------------------------------------------------------------
// Projected gradient descent

double StepSchedule::step(std::size_t i, double smoothness, double radius) const {
  const double inv_l = 1.0 / smoothness;
  if (rule == StepRule::accelerated) return inv_l;
  const double c = scale.value_or(radius) * inv_l;
  return std::min(c / std::sqrt(static_cast<double>(i) + 1.0), inv_l);
}

PgdResult solve_pgd(const Dataset& data, std::span<const ActivationPattern> patterns, double radius,
                    std::size_t steps, const StepSchedule& schedule) {
  if (!(radius > 0.0)) throw std::invalid_argument("L1 radius must be positive");
  if (schedule.scale && !(*schedule.scale > 0.0)) throw std::invalid_argument("step scale must be positive");

  const StackedDesign design(data, patterns);
  double smooth = design.smoothness();
  if (!(smooth > 0.0)) smooth = 1.0;  // zero design: every gradient vanishes

  PgdResult result;
  result.smoothness = smooth;
  result.solution = ConvexVars::zeros(static_cast<Index>(patterns.size()), data.dim(), radius);
  result.trace.reserve(steps + 1);

  VectorXd u = VectorXd::Zero(design.columns());
  double f = design.objective(u);
  if (!std::isfinite(f)) throw std::runtime_error("projected gradient descent: objective at u = 0 is not finite");
  result.trace.push_back(f);
  result.best_objective = f;

  auto record = [&](std::size_t iteration, const VectorXd& iterate, double value) {
    if (!std::isfinite(value)) {
      throw std::runtime_error("projected gradient descent diverged at iteration " +
                               std::to_string(iteration) + " (objective " + std::to_string(value) +
                               ", smoothness estimate " + std::to_string(smooth) + ")");
    }
    result.trace.push_back(value);
    if (value < result.best_objective) {
      result.best_objective = value;
      result.best_iteration = iteration;
      result.solution.u = iterate;
    }
  };

  if (schedule.rule == StepRule::diminishing) {
    for (std::size_t i = 0; i < steps; ++i) {
      const double alpha = schedule.step(i, smooth, radius);
      u = project_l1(u - alpha * design.gradient(u), radius);
      f = design.objective(u);
      record(i + 1, u, f);
    }
  } else {
    const double alpha = 1.0 / smooth;
    VectorXd previous = u;
    VectorXd probe = u;
    double t = 1.0;
    double f_previous = f;
    for (std::size_t i = 0; i < steps; ++i) {
      u = project_l1(probe - alpha * design.gradient(probe), radius);
      f = design.objective(u);
      record(i + 1, u, f);
      if (f > f_previous) {
        // Momentum overshot: restart from the current iterate.
        t = 1.0;
        probe = u;
      } else {
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        probe = u + ((t - 1.0) / t_next) * (u - previous);
        t = t_next;
      }
      previous = u;
      f_previous = f;
    }
  }
  return result;
}

ConvexVars stacked_least_squares(const Dataset& data, std::span<const ActivationPattern> patterns,
                                 double radius) {
  const Index d = data.dim();
  const Index p = static_cast<Index>(patterns.size());
  MatrixXd z(data.rows(), p * d);
  for (Index i = 0; i < p; ++i) {
    z.middleCols(i * d, d) = mask_vector(patterns[static_cast<std::size_t>(i)]).asDiagonal() * data.x();
  }
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(z);
  ConvexVars out = ConvexVars::zeros(p, d, radius);
  out.u = cod.solve(data.y());
  return out;
}

// ---------------------------------------------------------------------------
// Cone decomposition

double cone_violation(const VectorXd& u, const ActivationPattern& pattern, const MatrixXd& x) {
  const VectorXd signed_scores = signs(pattern).cwiseProduct(x * u);
  return std::max(0.0, -signed_scores.minCoeff());
}

ConeSplit cone_decompose(const VectorXd& p, const ActivationPattern& pattern, const Dataset& data,
                         const ConeOptions& options) {
  const MatrixXd& x = data.x();
  if (p.size() != x.cols()) throw std::invalid_argument("cone_decompose: block dimension mismatch");
  if (pattern.size() != x.rows()) throw std::invalid_argument("cone_decompose: pattern length mismatch");

  const Index n = x.rows();
  const VectorXd s = signs(pattern);
  const MatrixXd a = s.asDiagonal() * x;  // row j: s_j x_j; cone is {u : a u >= 0}
  const VectorXd ap = a * p;

  // w must satisfy a w >= 0 and a (p + w) >= 0, i.e. a w >= b.
  const VectorXd b = (-ap).cwiseMax(0.0);

  ConeSplit split;
  split.pattern = pattern;
  if ((b.array() == 0.0).all()) {
    split.v = p;
    split.w = VectorXd::Zero(p.size());
    split.residual = 0.0;
    return split;
  }

  const VectorXd row_norm_sq = a.rowwise().squaredNorm();
  VectorXd mu = VectorXd::Zero(n);
  VectorXd w = VectorXd::Zero(p.size());
  std::size_t it = 0;
  for (; it < options.max_iterations; ++it) {
    for (Index j = 0; j < n; ++j) {
      if (row_norm_sq[j] == 0.0) continue;
      const double delta = (b[j] - a.row(j).dot(w)) / row_norm_sq[j];
      const double updated = std::max(0.0, mu[j] + delta);
      if (updated != mu[j]) {
        w += (updated - mu[j]) * a.row(j).transpose();
        mu[j] = updated;
      }
    }
    const double violation = std::max(0.0, (b - a * w).maxCoeff());
    if (violation <= options.tol) {
      ++it;
      break;
    }
  }
  split.iterations = it;

  VectorXd v = p + w;
  double residual = std::max(cone_violation(v, pattern, x), cone_violation(w, pattern, x));

  if (residual > 0.0) {
    // Both halves move by the same multiple of the gate, which lies strictly
    // inside the cone on every active row.
    const VectorXd ag = a * pattern.gate;
    const VectorXd av = a * v;
    const VectorXd aw = a * w;
    double shift = 0.0;
    bool shiftable = true;
    for (Index j = 0; j < n; ++j) {
      const double deficit = std::max({0.0, -av[j], -aw[j]});
      if (deficit == 0.0) continue;
      if (ag[j] > 0.0) {
        shift = std::max(shift, deficit / ag[j]);
      } else {
        shiftable = false;
      }
    }
    if (shiftable && shift > 0.0) {
      shift *= 1.0 + 1e-9;
      const VectorXd v2 = v + shift * pattern.gate;
      const VectorXd w2 = w + shift * pattern.gate;
      const double r2 = std::max(cone_violation(v2, pattern, x), cone_violation(w2, pattern, x));
      if (r2 < residual) {
        v = v2;
        w = w2;
        residual = r2;
      }
    }
  }

  split.v = std::move(v);
  split.w = std::move(w);
  split.residual = residual;
  return split;
}

// ---------------------------------------------------------------------------
// Network

ReluNet build_network(std::span<const ConeSplit> splits) {
  ReluNet net;
  for (const auto& split : splits) {
    const bool v_zero = (split.v.array() == 0.0).all();
    const bool w_zero = (split.w.array() == 0.0).all();
    if (!v_zero) net.neurons.push_back({split.v, +1});
    if (!w_zero) net.neurons.push_back({split.w, -1});
  }
  return net;
}

double predict(const ReluNet& net, const Eigen::Ref<const VectorXd>& x) {
  double out = 0.0;
  for (const auto& neuron : net.neurons) {
    if (neuron.weights.size() != x.size()) throw std::invalid_argument("predict: input dimension mismatch");
    out += std::max(x.dot(neuron.weights), 0.0) * neuron.sign;
  }
  return out;
}

VectorXd predict_rows(const ReluNet& net, const MatrixXd& x) {
  VectorXd out = VectorXd::Zero(x.rows());
  for (const auto& neuron : net.neurons) {
    if (neuron.weights.size() != x.cols()) throw std::invalid_argument("predict: input dimension mismatch");
    out += (x * neuron.weights).cwiseMax(0.0) * static_cast<double>(neuron.sign);
  }
  return out;
}

double network_loss(const ReluNet& net, const Dataset& data) {
  return (predict_rows(net, data.x()) - data.y()).squaredNorm();
}

// ---------------------------------------------------------------------------
// End to end

FitResult fit(const Dataset& data, const FitConfig& config) {
  const std::size_t count =
      config.pattern_count > 0 ? config.pattern_count
                               : std::max<std::size_t>(static_cast<std::size_t>(data.dim()), 16);
  Rng rng(config.seed);
  FitResult result;
  result.patterns = sample_patterns(data, count, rng);

  PgdResult pgd = solve_pgd(data, result.patterns, config.radius, config.steps, config.schedule);

  std::vector<ConeSplit> splits;
  splits.reserve(result.patterns.size());
  for (std::size_t i = 0; i < result.patterns.size(); ++i) {
    splits.push_back(cone_decompose(pgd.solution.block(static_cast<Index>(i)), result.patterns[i],
                                    data, config.cone));
  }
  result.net = build_network(splits);

  FitReport& report = result.report;
  report.final_objective = network_loss(result.net, data);
  report.pgd_objective = pgd.best_objective;
  report.residuals.reserve(splits.size());
  for (const auto& split : splits) {
    report.residuals.push_back(split.residual);
    report.max_residual = std::max(report.max_residual, split.residual);
  }
  report.patterns = result.patterns.size();
  report.width = static_cast<std::size_t>(result.net.width());
  result.solution = std::move(pgd.solution);
  return result;
}

}  // namespace nac2l::relu
