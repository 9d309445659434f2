#pragma once

// End-to-end runs: configuration text format, the actor-critic outer loop
// with per-iteration CSV records, and log-log rate studies.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nac2l/actor.hpp"
#include "nac2l/critic.hpp"
#include "nac2l/mdp.hpp"
#include "nac2l/relu_solver.hpp"

namespace nac2l {

enum class RunMode { nac2l, critic_only, rate_study };
enum class EnvKind { gridworld, random, file };
enum class StudyKind { critic, pgd };

struct RunConfig {
  RunMode mode = RunMode::nac2l;
  EnvKind env = EnvKind::gridworld;
  std::string mdp_file;
  GridSpec grid;  // grid.gamma is ignored; `gamma` below is used
  int random_states = 5;
  int random_actions = 2;

  int K = 200;
  int J = 10;
  int n_per_iter = 2000;
  int T_pgd = 1000;
  int pattern_count = 0;  // 0: max(d, 16)
  double radius = 0.0;    // 0: R_max / (1 - gamma)
  double eta = 0.0;       // 0: 1 / sqrt(K)
  double beta0 = 0.1;
  double gamma = 0.9;     // ignored for env = file (the file carries it)
  std::uint64_t seed = 0;

  CriticBackend critic = CriticBackend::relu;
  TargetRule target = TargetRule::expectation;
  relu::StepRule step_rule = relu::StepRule::diminishing;
  double step_scale = 0.0;  // 0: radius, i.e. c = B / L
  double w_clip = 0.0;      // 0: no projection
  FeatureKind features = FeatureKind::one_hot;

  StudyKind study = StudyKind::critic;
  std::vector<int> grid_points;  // n values (critic) or T values (pgd)
  int seeds = 5;

  bool operator==(const RunConfig&) const = default;
};

/// Sets one key from its text value. Throws std::invalid_argument naming the
/// key on unknown keys or malformed values.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);
/// All recognized keys, in dump order.
const std::vector<std::string>& config_keys();
/// Checks ranges and cross-field requirements.
void validate_config(const RunConfig& config);

/// `key = value` lines; '#' starts a comment. `mode` and `seed` are required.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
std::string dump_config(const RunConfig& config);

TabularMdp build_mdp(const RunConfig& config);
FeatureMap build_features(const RunConfig& config, const TabularMdp& mdp);
CriticConfig build_critic(const RunConfig& config);
/// eta if set, else 1 / sqrt(K) (1 when K = 0).
double effective_eta(const RunConfig& config);

struct IterationRecord {
  int k = 0;
  double value = 0.0;
  double gap = 0.0;
  double bellman_resid = 0.0;
  double w_norm = 0.0;
  double fit_obj = 0.0;
  double eps_total = 0.0;
  double eps1_sur = 0.0;
  double eps2 = 0.0;
  double eps3 = 0.0;
  double eps4 = 0.0;
  double ms = 0.0;
};

inline constexpr const char* kCsvHeader =
    "k,value,gap,bellman_resid,w_norm,fit_obj,eps_total,eps1_sur,eps2,eps3,eps4,ms";

std::string format_record(const IterationRecord& rec, bool with_ms = true);
/// Header plus one line per record. Without ms the last column is dropped,
/// which is the form compared for determinism.
std::string records_csv(const std::vector<IterationRecord>& records, bool with_ms = true);

struct RunResult {
  std::vector<IterationRecord> records;
  PolicyParams final_params;
  double final_value = 0.0;
  double final_gap = 0.0;
  double min_gap = 0.0;  // over pi_0 .. pi_K
  double v_star_range = 0.0;
};

/// K outer iterations; record k describes pi_{lambda_k}, the policy the
/// critic and actor of iteration k work with. final_params is lambda_K.
RunResult run_nac2l(const RunConfig& config);

/// Structured text: feature spec, lambda and the action-probability table.
std::string format_policy(const PolicyParams& params);
void dump_policy(const std::filesystem::path& path, const PolicyParams& params);

struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::vector<std::string> warnings;  // one per dropped point
};

/// Least squares of log y on log x. Nonpositive or non-finite y are dropped
/// with a warning; fewer than two usable points throws.
LogLogFit fit_log_log(const std::vector<double>& x, const std::vector<double>& y);

struct RateStudyResult {
  std::vector<double> grid;
  std::vector<std::vector<double>> errors;  // [grid point][seed]
  std::vector<double> median;
  LogLogFit fit;

  std::string csv() const;
};

/// critic: E_zeta |Q_J - Q_J^exact| for n in the grid, where Q_J^exact runs
/// the same J rounds with exact backups. pgd: f(best iterate) - f* after T
/// steps on a planted unit-box instance (50 x 5, pattern_count or 10
/// patterns, inactive constraint) for T in the grid. Medians over seeds.
RateStudyResult run_rate_study(const RunConfig& config);

/// Critic-only mode: one FQI pass under the uniform policy, one CSV row per
/// round (j, bellman_resid, fit_obj, eps..., sup error against Q^pi).
std::string run_critic_only(const RunConfig& config);

}  // namespace nac2l
