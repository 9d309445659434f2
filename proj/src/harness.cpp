#include "nac2l/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "nac2l/diagnostics.hpp"
#include "nac2l/random.hpp"
#include "nac2l/text.hpp"

namespace nac2l {

// ---------------------------------------------------------------------------
// Config fields

namespace {

template <typename E>
struct EnumName {
  E value;
  const char* name;
};

constexpr EnumName<RunMode> kModes[] = {
    {RunMode::nac2l, "nac2l"}, {RunMode::critic_only, "critic-only"}, {RunMode::rate_study, "rate-study"}};
constexpr EnumName<EnvKind> kEnvs[] = {
    {EnvKind::gridworld, "gridworld"}, {EnvKind::random, "random"}, {EnvKind::file, "file"}};
constexpr EnumName<CriticBackend> kCritics[] = {{CriticBackend::relu, "relu"},
                                                {CriticBackend::tabular, "tabular"},
                                                {CriticBackend::tabular_exact, "tabular-exact"},
                                                {CriticBackend::oracle, "oracle"}};
constexpr EnumName<TargetRule> kTargets[] = {{TargetRule::expectation, "expectation"}, {TargetRule::max, "max"}};
constexpr EnumName<relu::StepRule> kStepRules[] = {{relu::StepRule::diminishing, "diminishing"},
                                                   {relu::StepRule::accelerated, "accelerated"}};
constexpr EnumName<FeatureKind> kFeatures[] = {{FeatureKind::one_hot, "one-hot"},
                                               {FeatureKind::one_hot_reduced, "one-hot-reduced"}};
constexpr EnumName<StudyKind> kStudies[] = {{StudyKind::critic, "critic"}, {StudyKind::pgd, "pgd"}};

template <typename E, std::size_t N>
E enum_from(const EnumName<E> (&table)[N], const std::string& key, const std::string& text) {
  std::string options;
  for (const auto& e : table) {
    if (text == e.name) return e.value;
    options += options.empty() ? "" : ", ";
    options += e.name;
  }
  throw std::invalid_argument(key + ": '" + text + "' is not one of " + options);
}

template <typename E, std::size_t N>
std::string enum_to(const EnumName<E> (&table)[N], E value) {
  for (const auto& e : table) {
    if (e.value == value) return e.name;
  }
  throw std::logic_error("unnamed enum value");
}

int to_int(const std::string& key, const std::string& text) {
  long long v = 0;
  if (!parse_int(text, v) || v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw std::invalid_argument(key + ": expected an integer, got '" + text + "'");
  }
  return static_cast<int>(v);
}

double to_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  if (!parse_double(text, v) || !std::isfinite(v)) {
    throw std::invalid_argument(key + ": expected a finite number, got '" + text + "'");
  }
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::invalid_argument(key + ": expected a nonnegative integer, got '" + text + "'");
  }
  return v;
}

bool to_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw std::invalid_argument(key + ": expected true or false, got '" + text + "'");
}

std::vector<int> to_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    out.push_back(to_int(key, item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string from_int_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define NAC2L_INT(name, member)                                                               \
  Field{name, [](RunConfig& c, const std::string& v) { c.member = to_int(name, v); },        \
        [](const RunConfig& c) { return std::to_string(c.member); }}
#define NAC2L_DOUBLE(name, member)                                                            \
  Field{name, [](RunConfig& c, const std::string& v) { c.member = to_double(name, v); },     \
        [](const RunConfig& c) { return format_double(c.member); }}
#define NAC2L_ENUM(name, member, table)                                                       \
  Field{name, [](RunConfig& c, const std::string& v) { c.member = enum_from(table, name, v); }, \
        [](const RunConfig& c) { return enum_to(table, c.member); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      NAC2L_ENUM("mode", mode, kModes),
      NAC2L_ENUM("env", env, kEnvs),
      Field{"mdp_file", [](RunConfig& c, const std::string& v) { c.mdp_file = v; },
            [](const RunConfig& c) { return c.mdp_file; }},
      NAC2L_INT("grid_width", grid.width),
      NAC2L_INT("grid_height", grid.height),
      NAC2L_INT("goal_x", grid.goal_x),
      NAC2L_INT("goal_y", grid.goal_y),
      NAC2L_DOUBLE("step_reward", grid.step_reward),
      NAC2L_DOUBLE("goal_reward", grid.goal_reward),
      NAC2L_DOUBLE("slip", grid.slip),
      Field{"goal_resets", [](RunConfig& c, const std::string& v) { c.grid.goal_resets = to_bool("goal_resets", v); },
            [](const RunConfig& c) { return std::string(c.grid.goal_resets ? "true" : "false"); }},
      NAC2L_DOUBLE("reward_noise", grid.reward_noise),
      NAC2L_INT("random_states", random_states),
      NAC2L_INT("random_actions", random_actions),
      NAC2L_INT("K", K),
      NAC2L_INT("J", J),
      NAC2L_INT("n_per_iter", n_per_iter),
      NAC2L_INT("T_pgd", T_pgd),
      NAC2L_INT("pattern_count", pattern_count),
      NAC2L_DOUBLE("radius", radius),
      NAC2L_DOUBLE("eta", eta),
      NAC2L_DOUBLE("beta0", beta0),
      NAC2L_DOUBLE("gamma", gamma),
      Field{"seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64("seed", v); },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      NAC2L_ENUM("critic", critic, kCritics),
      NAC2L_ENUM("target", target, kTargets),
      NAC2L_ENUM("step_rule", step_rule, kStepRules),
      NAC2L_DOUBLE("step_scale", step_scale),
      NAC2L_DOUBLE("w_clip", w_clip),
      NAC2L_ENUM("features", features, kFeatures),
      NAC2L_ENUM("study", study, kStudies),
      Field{"grid", [](RunConfig& c, const std::string& v) { c.grid_points = to_int_list("grid", v); },
            [](const RunConfig& c) { return from_int_list(c.grid_points); }},
      NAC2L_INT("seeds", seeds),
  };
  return f;
}

#undef NAC2L_INT
#undef NAC2L_DOUBLE
#undef NAC2L_ENUM

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(config, value);
      return;
    }
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

void validate_config(const RunConfig& c) {
  auto fail = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
  if (c.K < 0) fail("K must be >= 0");
  if (c.J < 1) fail("J must be >= 1");
  if (c.n_per_iter < 1) fail("n_per_iter must be >= 1");
  if (c.T_pgd < 0) fail("T_pgd must be >= 0");
  if (c.pattern_count < 0) fail("pattern_count must be >= 0");
  if (!(c.radius >= 0.0)) fail("radius must be >= 0");
  if (!(c.eta >= 0.0)) fail("eta must be >= 0");
  if (!(c.beta0 > 0.0)) fail("beta0 must be > 0");
  if (!(c.gamma > 0.0 && c.gamma < 1.0)) fail("gamma must lie in (0,1)");
  if (!(c.step_scale >= 0.0)) fail("step_scale must be >= 0");
  if (!(c.w_clip >= 0.0)) fail("w_clip must be >= 0");
  if (c.seeds < 1) fail("seeds must be >= 1");
  if (c.random_states < 1 || c.random_actions < 1) fail("random_states and random_actions must be >= 1");
  if (c.env == EnvKind::file && c.mdp_file.empty()) fail("env = file needs mdp_file");
  if (c.mode == RunMode::rate_study) {
    if (c.grid_points.size() < 3) fail("rate-study needs at least 3 grid points");
    for (std::size_t i = 0; i < c.grid_points.size(); ++i) {
      if (c.grid_points[i] < 1) fail("grid points must be positive");
      if (i > 0 && c.grid_points[i] <= c.grid_points[i - 1]) fail("grid points must be increasing");
    }
  }
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  std::map<std::string, int> seen;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line(raw);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (auto [it, fresh] = seen.emplace(key, line_no); !fresh) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": '" + key +
                                  "' already set on line " + std::to_string(it->second));
    }
    try {
      apply_setting(c, key, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  for (const char* required : {"mode", "seed"}) {
    if (!seen.count(required)) throw std::invalid_argument(std::string("config: missing required key '") + required + "'");
  }
  validate_config(c);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string dump_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Builders

TabularMdp build_mdp(const RunConfig& c) {
  switch (c.env) {
    case EnvKind::gridworld: {
      GridSpec g = c.grid;
      g.gamma = c.gamma;
      return make_gridworld(g);
    }
    case EnvKind::random: {
      Rng rng = make_rng(c.seed, "mdp");
      return make_random_mdp(c.random_states, c.random_actions, c.gamma, rng);
    }
    case EnvKind::file:
      return load_mdp(c.mdp_file);
  }
  throw std::logic_error("unknown env");
}

FeatureMap build_features(const RunConfig& c, const TabularMdp& mdp) {
  if (c.features == FeatureKind::one_hot_reduced) return FeatureMap::one_hot_reduced(mdp.n_states(), mdp.n_actions());
  return FeatureMap::one_hot(mdp.n_states(), mdp.n_actions());
}

CriticConfig build_critic(const RunConfig& c) {
  CriticConfig cc;
  cc.J = c.J;
  cc.n_per_iter = c.n_per_iter;
  cc.radius = c.radius;
  cc.target = c.target;
  cc.backend = c.critic;
  cc.solver.pattern_count = static_cast<std::size_t>(c.pattern_count);
  cc.solver.steps = static_cast<std::size_t>(c.T_pgd);
  cc.solver.schedule.rule = c.step_rule;
  if (c.step_scale > 0.0) cc.solver.schedule.scale = c.step_scale;
  return cc;
}

double effective_eta(const RunConfig& c) {
  if (c.eta > 0.0) return c.eta;
  return c.K > 0 ? 1.0 / std::sqrt(static_cast<double>(c.K)) : 1.0;
}

// ---------------------------------------------------------------------------
// Records

std::string format_record(const IterationRecord& r, bool with_ms) {
  std::string out = std::to_string(r.k);
  for (double v : {r.value, r.gap, r.bellman_resid, r.w_norm, r.fit_obj, r.eps_total, r.eps1_sur, r.eps2, r.eps3,
                   r.eps4}) {
    out += ',';
    out += format_double(v);
  }
  if (with_ms) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), ",%.3f", r.ms);
    out += buf;
  }
  return out;
}

std::string records_csv(const std::vector<IterationRecord>& records, bool with_ms) {
  std::string header = kCsvHeader;
  if (!with_ms) header.resize(header.rfind(','));
  std::string out = header + "\n";
  for (const auto& r : records) out += format_record(r, with_ms) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// NAC2L

RunResult run_nac2l(const RunConfig& config) {
  validate_config(config);
  const TabularMdp mdp = build_mdp(config);
  const Encoder encoder = Encoder::one_hot(mdp.n_states(), mdp.n_actions());
  const CriticConfig critic = build_critic(config);
  const double eta = effective_eta(config);
  SgdConfig sgd;
  sgd.beta0 = config.beta0;
  if (config.w_clip > 0.0) sgd.w_clip = config.w_clip;

  const VectorXd v_star = exact_v_star(mdp, 1e-10).v;
  PolicyParams params = PolicyParams::zeros(build_features(config, mdp));
  const double nan = std::numeric_limits<double>::quiet_NaN();

  RunResult res{{}, params, 0.0, 0.0, 0.0, v_star.maxCoeff() - v_star.minCoeff()};
  res.records.reserve(static_cast<std::size_t>(config.K));
  res.min_gap = std::numeric_limits<double>::infinity();

  for (int k = 0; k < config.K; ++k) {
    const auto start = std::chrono::steady_clock::now();
    const PolicyTable pi = policy_table(params);
    IterationRecord rec;
    rec.k = k;
    rec.value = policy_value(mdp, pi);
    rec.gap = value_gap(mdp, pi, v_star);
    res.min_gap = std::min(res.min_gap, rec.gap);

    FqiResult critic_out;
    try {
      critic_out = fqi(mdp, pi, encoder, critic, config.seed, static_cast<std::uint64_t>(k));
    } catch (const std::exception& e) {
      throw std::runtime_error("iteration " + std::to_string(k) + ": critic failed: " + e.what());
    }
    const FqiRound& last = critic_out.rounds.back();
    rec.bellman_resid = last.bellman_resid;
    rec.fit_obj = last.fit_objective;

    rec.eps_total = rec.eps1_sur = rec.eps2 = rec.eps3 = rec.eps4 = nan;
    try {
      const VectorXd zeta = stationary_dist(mdp, pi);
      const RoundData rd{last.q_prev, last.fitted, last.batch, critic.gamma.value_or(-1.0)};
      const ErrorReport er = decompose_errors(mdp, pi, rd, zeta, encoder.is_one_hot());
      rec.eps_total = er.eps_total;
      rec.eps1_sur = er.eps1_sur;
      rec.eps2 = er.eps2;
      rec.eps3 = er.eps3;
      rec.eps4 = er.eps4;
    } catch (const std::runtime_error&) {
      // No stationary distribution under this policy; the eps columns stay NaN.
    }

    const MatrixXd adv = advantage_table(critic_out.q.table(), pi);
    const auto samples = state_actions(critic_out.samples);
    const VectorXd w = sgd_w(samples, adv, params, sgd, VectorXd::Zero(params.features.dim()));
    rec.w_norm = w.norm();
    params = npg_update(params, w, eta, mdp.gamma());
    if (!params.lambda.allFinite()) {
      throw std::runtime_error("iteration " + std::to_string(k) + ": policy parameters became non-finite");
    }

    rec.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    res.records.push_back(rec);
  }

  const PolicyTable final_pi = policy_table(params);
  res.final_value = policy_value(mdp, final_pi);
  res.final_gap = value_gap(mdp, final_pi, v_star);
  res.min_gap = std::min(res.min_gap, res.final_gap);
  res.final_params = std::move(params);
  return res;
}

// ---------------------------------------------------------------------------
// Policy dump

std::string format_policy(const PolicyParams& params) {
  const FeatureMap& f = params.features;
  std::ostringstream out;
  const char* kind = f.kind() == FeatureKind::one_hot           ? "one-hot"
                     : f.kind() == FeatureKind::one_hot_reduced ? "one-hot-reduced"
                                                                : "table";
  out << "features " << kind << "\nstates " << f.n_states() << "\nactions " << f.n_actions() << "\ndim " << f.dim()
      << "\n";
  if (f.kind() == FeatureKind::table) {
    for (int s = 0; s < f.n_states(); ++s) {
      for (int a = 0; a < f.n_actions(); ++a) {
        out << "phi " << s << ' ' << a;
        for (Index i = 0; i < f.dim(); ++i) out << ' ' << format_double(f.phi(s, a)[i]);
        out << "\n";
      }
    }
  }
  out << "lambda";
  for (Index i = 0; i < params.lambda.size(); ++i) out << ' ' << format_double(params.lambda[i]);
  out << "\n";
  for (int s = 0; s < f.n_states(); ++s) {
    const VectorXd p = action_probs(params, s);
    out << "prob " << s;
    for (Index a = 0; a < p.size(); ++a) out << ' ' << format_double(p[a]);
    out << "\n";
  }
  return out.str();
}

void dump_policy(const std::filesystem::path& path, const PolicyParams& params) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write policy file " + path.string());
  out << format_policy(params);
  if (!out) throw std::runtime_error("failed writing policy file " + path.string());
}

// ---------------------------------------------------------------------------
// Rate studies

LogLogFit fit_log_log(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("fit_log_log: x and y lengths differ");
  LogLogFit fit;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0) || !std::isfinite(x[i]) || !std::isfinite(y[i])) {
      fit.warnings.push_back("dropped point x=" + format_double(x[i]) + " y=" + format_double(y[i]));
      continue;
    }
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  if (lx.size() < 2) throw std::runtime_error("fit_log_log: fewer than two usable points");
  const double n = static_cast<double>(lx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0.0) throw std::runtime_error("fit_log_log: all x values coincide");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

std::string RateStudyResult::csv() const {
  std::string out = "x,median";
  const std::size_t seeds = errors.empty() ? 0 : errors.front().size();
  for (std::size_t s = 0; s < seeds; ++s) out += ",seed" + std::to_string(s);
  out += "\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out += format_double(grid[i]) + "," + format_double(median[i]);
    for (double e : errors[i]) out += "," + format_double(e);
    out += "\n";
  }
  return out;
}

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

PolicyTable uniform_policy(const TabularMdp& mdp) {
  return PolicyTable::Constant(mdp.n_states(), mdp.n_actions(), 1.0 / mdp.n_actions());
}

void critic_study(const RunConfig& config, RateStudyResult& out) {
  const TabularMdp mdp = build_mdp(config);
  const Encoder encoder = Encoder::one_hot(mdp.n_states(), mdp.n_actions());
  const PolicyTable pi = uniform_policy(mdp);
  const VectorXd zeta = stationary_dist(mdp, pi);

  CriticConfig cc = build_critic(config);
  CriticConfig exact = cc;
  exact.backend = CriticBackend::tabular_exact;
  exact.n_per_iter = 1;
  const MatrixXd reference = fqi(mdp, pi, encoder, exact, config.seed).q.table();

  for (std::size_t g = 0; g < out.grid.size(); ++g) {
    cc.n_per_iter = static_cast<int>(out.grid[g]);
    for (int s = 0; s < config.seeds; ++s) {
      const std::uint64_t seed = derive_seed(config.seed, "rate", static_cast<std::uint64_t>(s));
      const MatrixXd q = fqi(mdp, pi, encoder, cc, seed).q.table();
      out.errors[g][static_cast<std::size_t>(s)] = zeta.dot(table_to_pairs(q - reference).cwiseAbs());
    }
  }
}

void pgd_study(const RunConfig& config, RateStudyResult& out) {
  constexpr Index n = 50;
  constexpr Index d = 5;
  const std::size_t count = config.pattern_count > 0 ? static_cast<std::size_t>(config.pattern_count) : 10;
  const std::size_t t_max = static_cast<std::size_t>(out.grid.back());
  relu::StepSchedule schedule;
  schedule.rule = config.step_rule;
  schedule.scale = config.step_scale > 0.0 ? config.step_scale : 1.0;

  for (int s = 0; s < config.seeds; ++s) {
    Rng rng = make_rng(config.seed, "rate", static_cast<std::uint64_t>(s));
    MatrixXd x(n, d);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = uniform01(rng);
    const relu::Dataset shape(x, VectorXd::Zero(n));
    const auto patterns = relu::sample_patterns(shape, count, rng);

    // Planted targets: y = Z u_true + 0.1 noise.
    relu::ConvexVars planted = relu::ConvexVars::zeros(static_cast<Index>(patterns.size()), d, 1.0);
    for (Index i = 0; i < planted.u.size(); ++i) planted.u[i] = standard_normal(rng);
    VectorXd y = relu::convex_model_output(planted, patterns, x);
    for (Index i = 0; i < n; ++i) y[i] += 0.1 * standard_normal(rng);
    const relu::Dataset data(x, y);

    const relu::ConvexVars ls = relu::stacked_least_squares(data, patterns, 1.0);
    const double f_star = relu::convex_objective(ls, data, patterns);
    const double radius = config.radius > 0.0 ? config.radius : 10.0 * std::max(ls.l1_norm(), 1e-12);
    const relu::PgdResult pgd = relu::solve_pgd(data, patterns, radius, t_max, schedule);

    for (std::size_t g = 0; g < out.grid.size(); ++g) {
      const std::size_t t = static_cast<std::size_t>(out.grid[g]);
      const double best = *std::min_element(pgd.trace.begin(), pgd.trace.begin() + static_cast<std::ptrdiff_t>(t) + 1);
      out.errors[g][static_cast<std::size_t>(s)] = best - f_star;
    }
  }
}

}  // namespace

RateStudyResult run_rate_study(const RunConfig& config) {
  validate_config(config);
  if (config.grid_points.size() < 3) throw std::invalid_argument("rate study needs at least 3 grid points");
  RateStudyResult out;
  for (int g : config.grid_points) out.grid.push_back(static_cast<double>(g));
  out.errors.assign(out.grid.size(), std::vector<double>(static_cast<std::size_t>(config.seeds), 0.0));
  if (config.study == StudyKind::critic) {
    critic_study(config, out);
  } else {
    pgd_study(config, out);
  }
  for (const auto& row : out.errors) out.median.push_back(median_of(row));
  out.fit = fit_log_log(out.grid, out.median);
  return out;
}

std::string run_critic_only(const RunConfig& config) {
  validate_config(config);
  const TabularMdp mdp = build_mdp(config);
  const Encoder encoder = Encoder::one_hot(mdp.n_states(), mdp.n_actions());
  const PolicyTable pi = uniform_policy(mdp);
  const CriticConfig cc = build_critic(config);
  const MatrixXd q_pi = exact_q_pi(mdp, pi);
  const FqiResult res = fqi(mdp, pi, encoder, cc, config.seed);

  std::optional<VectorXd> zeta;
  try {
    zeta = stationary_dist(mdp, pi);
  } catch (const std::runtime_error&) {
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::string out = "j,bellman_resid,fit_obj,eps_total,eps1_sur,eps2,eps3,eps4,q_err\n";
  for (std::size_t j = 0; j < res.rounds.size(); ++j) {
    const FqiRound& r = res.rounds[j];
    ErrorReport er;
    er.eps_total = er.eps1_sur = er.eps2 = er.eps3 = er.eps4 = nan;
    if (zeta) er = decompose_errors(mdp, pi, {r.q_prev, r.fitted, r.batch, -1.0}, *zeta, encoder.is_one_hot());
    out += std::to_string(j + 1);
    for (double v : {r.bellman_resid, r.fit_objective, er.eps_total, er.eps1_sur, er.eps2, er.eps3, er.eps4,
                     (r.fitted - q_pi).lpNorm<Eigen::Infinity>()}) {
      out += "," + format_double(v);
    }
    out += "\n";
  }
  return out;
}

}  // namespace nac2l
