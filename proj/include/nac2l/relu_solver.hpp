#pragma once

// Two-layer ReLU regression through its convex reformulation: sample
// activation patterns, solve the L1-constrained least-squares program over
// the pattern blocks with projected gradient descent, split each block into
// two cone members and read a ReLU network off the split.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "nac2l/random.hpp"

namespace nac2l::relu {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Regression instance: n rows of dimension d plus n targets.
///
/// The solver accepts arbitrary finite rows; the critic only ever builds
/// datasets whose rows lie in [0,1]^d (see in_unit_box()).
class Dataset {
 public:
  Dataset(MatrixXd x, VectorXd y);

  const MatrixXd& x() const { return x_; }
  const VectorXd& y() const { return y_; }
  Index rows() const { return x_.rows(); }
  Index dim() const { return x_.cols(); }
  bool in_unit_box() const;

 private:
  MatrixXd x_;
  VectorXd y_;
};

/// Diagonal 0/1 matrix diag(1(X g > 0)) stored as its diagonal, together
/// with the gate g that generated it.
struct ActivationPattern {
  std::vector<bool> mask;
  VectorXd gate;

  /// Strict threshold: a row with x.g == 0 is inactive.
  static ActivationPattern from_gate(const MatrixXd& x, VectorXd gate);

  bool matches_gate(const MatrixXd& x) const;
  /// Activation of an arbitrary row under this pattern's gate.
  bool active_on(const Eigen::Ref<const VectorXd>& row) const { return row.dot(gate) > 0.0; }
  Index size() const { return static_cast<Index>(mask.size()); }
};

/// Draws `count` standard-normal gates and returns the distinct patterns
/// they induce, in first-seen order.
std::vector<ActivationPattern> sample_patterns(const Dataset& data, std::size_t count, Rng& rng);

/// Variables of the convex program: one d-vector per pattern, stored
/// back to back, plus the L1 budget they must respect.
struct ConvexVars {
  VectorXd u;
  Index dim = 0;
  double radius = 0.0;

  static ConvexVars zeros(Index blocks, Index dim, double radius);

  Index block_count() const { return dim == 0 ? 0 : u.size() / dim; }
  auto block(Index i) const { return u.segment(i * dim, dim); }
  auto block(Index i) { return u.segment(i * dim, dim); }
  double l1_norm() const { return u.lpNorm<1>(); }
};

/// ||sum_i D_i X u_i - y||^2.
double convex_objective(const ConvexVars& vars, const Dataset& data,
                        std::span<const ActivationPattern> patterns);

/// Block i of the result is 2 (D_i X)^T (sum_j D_j X u_j - y).
ConvexVars convex_gradient(const ConvexVars& vars, const Dataset& data,
                           std::span<const ActivationPattern> patterns);

/// sum_i 1(x.g_i > 0) (x.u_i) for every row of `x`. On the training rows this
/// is sum_i D_i X u_i.
VectorXd convex_model_output(const ConvexVars& vars, std::span<const ActivationPattern> patterns,
                             const MatrixXd& x);

/// Euclidean projection onto {z : ||z||_1 <= radius} (sort and soft-threshold).
VectorXd project_l1(const VectorXd& v, double radius);

/// The stacked design [D_1 X | ... | D_P X] with identical data rows merged.
///
/// Merging rows r with multiplicity c_r and mean target ybar_r rewrites the
/// loss as sum_r c_r (z_r.u - ybar_r)^2 + sum_i (y_i - ybar_{r(i)})^2, which
/// has the same value and gradient as the unmerged sum. One-hot encoded
/// transition batches have at most |S||A| distinct rows, so this is what
/// keeps a critic fit independent of the batch size.
class StackedDesign {
 public:
  StackedDesign(const Dataset& data, std::span<const ActivationPattern> patterns);

  double objective(const VectorXd& u) const;
  VectorXd gradient(const VectorXd& u) const;

  /// 2 sigma_max(Z)^2, the gradient's Lipschitz constant, by power iteration.
  double smoothness() const;

  Index columns() const { return design_.cols(); }
  Index distinct_rows() const { return design_.rows(); }

 private:
  Eigen::SparseMatrix<double, Eigen::RowMajor> design_;  // rows scaled by sqrt(c_r)
  VectorXd target_;                                       // sqrt(c_r) * ybar_r
  double offset_ = 0.0;
};

enum class StepRule {
  /// u <- P(u - a_i grad), a_i = min(c / sqrt(i + 1), 1 / L).
  diminishing,
  /// FISTA with constant step 1 / L and function-value restart.
  accelerated,
};

struct StepSchedule {
  StepRule rule = StepRule::diminishing;
  /// c = scale / L. Unset means scale = radius, i.e. c = B / L.
  std::optional<double> scale;

  double step(std::size_t i, double smoothness, double radius) const;
};

struct PgdResult {
  ConvexVars solution;         // best iterate seen, not the last one
  std::vector<double> trace;   // objective at u^0 = 0, u^1, ..., u^T
  double best_objective = 0.0;
  std::size_t best_iteration = 0;
  double smoothness = 0.0;
};

/// Projected gradient descent from u = 0 for `steps` iterations. Every
/// iterate lies in the L1 ball. Throws std::runtime_error if the objective
/// stops being finite.
PgdResult solve_pgd(const Dataset& data, std::span<const ActivationPattern> patterns, double radius,
                    std::size_t steps, const StepSchedule& schedule = {});

/// Minimum-norm minimizer of the unconstrained stacked least-squares problem.
ConvexVars stacked_least_squares(const Dataset& data, std::span<const ActivationPattern> patterns,
                                 double radius);

/// p = v - w with v, w in the cone {u : (2 mask - 1) .* (X u) >= 0}.
struct ConeSplit {
  VectorXd v;
  VectorXd w;
  ActivationPattern pattern;
  double residual = 0.0;  // worst cone-membership violation of v or w
  std::size_t iterations = 0;
};

struct ConeOptions {
  double tol = 1e-8;
  std::size_t max_iterations = 10000;
};

/// Largest violation max_j max(0, -(2 mask_j - 1) x_j.u).
double cone_violation(const VectorXd& u, const ActivationPattern& pattern, const MatrixXd& x);

/// Finds the minimum-norm w with w and p + w in the pattern's cone
/// (Hildreth's row-action method on the dual), then shifts both halves along
/// the pattern's gate to absorb any leftover violation. A p already inside
/// the cone comes back as (p, 0). On budget exhaustion the best split is
/// returned with its residual recorded.
ConeSplit cone_decompose(const VectorXd& p, const ActivationPattern& pattern, const Dataset& data,
                         const ConeOptions& options = {});

struct Neuron {
  VectorXd weights;
  int sign = 0;  // -1, 0 or +1
};

struct ReluNet {
  std::vector<Neuron> neurons;
  Index width() const { return static_cast<Index>(neurons.size()); }
};

/// (v, 0) -> (v, +1); (0, w) -> (w, -1); (0, 0) -> nothing; a split with both
/// halves nonzero emits both neurons (v, +1) and (w, -1).
ReluNet build_network(std::span<const ConeSplit> splits);

/// sum_i max(x.u_i, 0) alpha_i.
double predict(const ReluNet& net, const Eigen::Ref<const VectorXd>& x);
VectorXd predict_rows(const ReluNet& net, const MatrixXd& x);

/// Squared loss of the network on the dataset.
double network_loss(const ReluNet& net, const Dataset& data);

struct FitConfig {
  std::size_t pattern_count = 0;  // 0 means max(d, 16)
  double radius = 1.0;
  std::size_t steps = 1000;
  StepSchedule schedule;
  std::uint64_t seed = 0;
  ConeOptions cone;
};

struct FitReport {
  double final_objective = 0.0;  // squared loss of the returned network
  double pgd_objective = 0.0;    // best convex objective reached
  double max_residual = 0.0;
  std::vector<double> residuals;
  std::size_t patterns = 0;
  std::size_t width = 0;

  bool operator==(const FitReport&) const = default;
};

struct FitResult {
  ReluNet net;
  FitReport report;
  std::vector<ActivationPattern> patterns;
  ConvexVars solution;
};

/// sample_patterns -> solve_pgd -> cone_decompose -> build_network.
FitResult fit(const Dataset& data, const FitConfig& config);

}  // namespace nac2l::relu
