// nac2l command-line front end: run, rate-study, solve-mdp.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nac2l/diagnostics.hpp"
#include "nac2l/harness.hpp"
#include "nac2l/text.hpp"

namespace fs = std::filesystem;
using namespace nac2l;

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
  std::map<std::string, std::string> flags;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("-c,--config", opts.config_path, "Config file (key = value lines)");
  cmd->add_option("--set", opts.sets, "Override a config key: --set key=value (repeatable)");
  cmd->add_option("-o,--out-dir", opts.out_dir, "Output directory (default: $NAC2L_OUT_DIR or .)");
  for (const auto& key : config_keys()) {
    cmd->add_option("--" + key, opts.flags[key], "Config key '" + key + "'");
  }
}

RunConfig resolve_config(CLI::App* cmd, const CommonOptions& opts, RunMode default_mode) {
  RunConfig c;
  c.mode = default_mode;
  if (!opts.config_path.empty()) c = load_config(opts.config_path);
  for (const auto& s : opts.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
    apply_setting(c, s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& key : config_keys()) {
    if (cmd->count("--" + key) > 0) apply_setting(c, key, opts.flags.at(key));
  }
  validate_config(c);
  return c;
}

fs::path output_dir(const CommonOptions& opts) {
  fs::path dir = ".";
  if (const char* env = std::getenv("NAC2L_OUT_DIR"); env && *env) dir = env;
  if (!opts.out_dir.empty()) dir = opts.out_dir;
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

int cmd_run(CLI::App* cmd, const CommonOptions& opts) {
  const RunConfig c = resolve_config(cmd, opts, RunMode::nac2l);
  const fs::path dir = output_dir(opts);
  write_file(dir / "config.txt", dump_config(c));
  if (c.mode == RunMode::critic_only) {
    write_file(dir / "critic.csv", run_critic_only(c));
    std::cout << "wrote " << (dir / "critic.csv").string() << "\n";
    return 0;
  }
  if (c.mode != RunMode::nac2l) throw std::invalid_argument("run: mode must be nac2l or critic-only");
  const RunResult r = run_nac2l(c);
  write_file(dir / "nac2l.csv", records_csv(r.records));
  dump_policy(dir / "policy.txt", r.final_params);
  std::cout << "iterations " << r.records.size() << "\n"
            << "final_value " << format_double(r.final_value) << "\n"
            << "final_gap " << format_double(r.final_gap) << "\n"
            << "min_gap " << format_double(r.min_gap) << "\n"
            << "v_star_range " << format_double(r.v_star_range) << "\n"
            << "wrote " << (dir / "nac2l.csv").string() << " and " << (dir / "policy.txt").string() << "\n";
  return 0;
}

int cmd_rate_study(CLI::App* cmd, const CommonOptions& opts) {
  RunConfig c = resolve_config(cmd, opts, RunMode::rate_study);
  c.mode = RunMode::rate_study;
  validate_config(c);
  const fs::path dir = output_dir(opts);
  const RateStudyResult r = run_rate_study(c);
  for (const auto& w : r.fit.warnings) std::cerr << "warning: " << w << "\n";
  write_file(dir / "rate_study.csv", r.csv());
  std::cout << "slope " << format_double(r.fit.slope) << "\n"
            << "r2 " << format_double(r.fit.r2) << "\n"
            << "wrote " << (dir / "rate_study.csv").string() << "\n";
  return 0;
}

int cmd_solve(CLI::App* cmd, const CommonOptions& opts) {
  const RunConfig c = resolve_config(cmd, opts, RunMode::nac2l);
  const TabularMdp mdp = build_mdp(c);
  const ValueIterationResult vi = exact_v_star(mdp, 1e-10);
  const PolicyTable uniform =
      PolicyTable::Constant(mdp.n_states(), mdp.n_actions(), 1.0 / mdp.n_actions());
  const VectorXd v_uniform = exact_v_pi(mdp, uniform);
  std::cout << "s,v_star,greedy_action,v_uniform\n";
  for (int s = 0; s < mdp.n_states(); ++s) {
    Index a = 0;
    vi.greedy.row(s).maxCoeff(&a);
    std::cout << s << ',' << format_double(vi.v[s]) << ',' << a << ',' << format_double(v_uniform[s]) << "\n";
  }
  std::cout << "# V*(nu) " << format_double(mdp.nu_states().dot(vi.v)) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NAC2L: natural actor-critic with a convex two-layer ReLU critic"};
  app.require_subcommand(1);

  CommonOptions run_opts, rate_opts, solve_opts;
  CLI::App* run = app.add_subcommand("run", "Run the actor-critic (or critic-only) loop and write CSV diagnostics");
  add_common(run, run_opts);
  CLI::App* rate = app.add_subcommand("rate-study", "Fit a log-log error slope over a grid of n or T");
  add_common(rate, rate_opts);
  CLI::App* solve = app.add_subcommand("solve-mdp", "Print oracle values (V*, greedy policy, V of uniform)");
  add_common(solve, solve_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run, run_opts);
    if (rate->parsed()) return cmd_rate_study(rate, rate_opts);
    if (solve->parsed()) return cmd_solve(solve, solve_opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
