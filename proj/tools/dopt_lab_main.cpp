// dopt-lab: build environments, solve them exactly, learn behavior policies
// and baselines from offline logs, evaluate estimators, reproduce the
// comparison protocol, and verify the variance identities.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "doptlab/comparison.hpp"
#include "doptlab/environments.hpp"
#include "doptlab/estimators.hpp"
#include "doptlab/exact_dp.hpp"
#include "doptlab/io.hpp"
#include "doptlab/offline.hpp"

namespace {

namespace fs = std::filesystem;
using namespace doptlab;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitInfeasible = 2;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

struct EnvBuildOptions {
  std::string config_file;
  int n = 10;
  double slip = 0.1;
  std::uint64_t seed = 1;
  int log_episodes = 0;
  int log_policies = 5;
  std::string out_dir = "out";
};

int cmd_env_build(const EnvBuildOptions& options) {
  GridworldSpec spec;
  if (!options.config_file.empty()) {
    const ExperimentConfig config = load_experiment_config(options.config_file);
    if (config.env != "gridworld") {
      throw ValidationError("env build: config does not describe a gridworld");
    }
    spec = GridworldSpec{config.grid_n, config.grid_slip, config.reward_seed,
                         config.policy_seed};
  } else {
    spec = GridworldSpec{options.n, options.slip, options.seed, options.seed};
  }
  const FiniteMdp mdp = build_gridworld(spec);
  fs::create_directories(options.out_dir);
  const fs::path mdp_path = fs::path(options.out_dir) / "mdp.txt";
  save_mdp(mdp, mdp_path);
  std::cout << "wrote " << mdp_path.string() << " (" << mdp.num_states << " states, "
            << mdp.num_actions << " actions, horizon " << mdp.horizon << ")\n";

  if (options.log_episodes > 0) {
    std::vector<TimedPolicy> loggers;
    const RngSpec stream{options.seed, fnv1a_hash("logging_policies")};
    for (int i = 0; i < std::max(options.log_policies, 1); ++i) {
      loggers.push_back(random_policy(mdp.horizon, mdp.num_states, mdp.num_actions,
                                      stream.derived(static_cast<std::uint64_t>(i))));
    }
    const TupleDataset log =
        generate_offline_log(mdp, loggers, options.log_episodes, options.seed);
    const fs::path log_path = fs::path(options.out_dir) / "log.jsonl";
    save_dataset_jsonl(log, log_path);
    std::cout << "wrote " << log_path.string() << " (" << log.records.size() << " tuples from "
              << options.log_episodes << " episodes)\n";
  }
  return kExitOk;
}

struct SolveOptions {
  std::string mdp_file;
  std::string target_file;
  std::string out_dir = "out";
};

int cmd_solve(const SolveOptions& options) {
  const FiniteMdp mdp = load_mdp(options.mdp_file);
  const TimedPolicy target = load_policy(options.target_file);
  const PolicyValidationReport report = validate_policy(target, mdp);
  if (!report.ok()) {
    throw ValidationError("solve: target policy fails validation against the MDP");
  }

  const QvTables qv = compute_q_v(mdp, target);
  const TsaTable nu = compute_nu(mdp, target, qv.v);
  const TsaTable u = compute_u_bstar_recursive(mdp, target);
  const Baseline b_star = derive_b_star(qv);
  const TimedPolicy mu_star = derive_mu_star(target, u);

  fs::create_directories(options.out_dir);
  const fs::path out(options.out_dir);
  save_value_tables(ValueTables{qv.q, qv.v, nu, u}, out / "tables.txt");
  save_policy(mu_star, out / "mu_star.txt");
  save_baseline(b_star, out / "b_star.txt");

  double j = 0.0;
  for (int s = 0; s < mdp.num_states; ++s) j += mdp.initial_dist[s] * qv.v(0, s);
  std::cout << "J(pi) = " << format_double(j) << "\n";
  std::cout << "wrote " << (out / "tables.txt").string() << ", "
            << (out / "mu_star.txt").string() << ", " << (out / "b_star.txt").string() << "\n";
  return kExitOk;
}

struct LearnOptions {
  std::string dataset_file;
  std::string target_file;
  std::string out_dir = "artifacts";
};

int cmd_learn(const LearnOptions& options) {
  const TimedPolicy target = load_policy(options.target_file);
  const ModelDims dims{target.horizon, target.num_states, target.num_actions};
  const TupleDataset dataset = load_dataset_jsonl(options.dataset_file, &dims);
  const LearnedArtifacts artifacts = learn_dopt(dataset, target, dims);

  fs::create_directories(options.out_dir);
  const fs::path out(options.out_dir);
  save_policy(artifacts.mu_hat_star, out / "mu_hat_star.txt");
  save_baseline(artifacts.b_hat_star, out / "b_hat_star.txt");
  save_value_tables(
      ValueTables{artifacts.q_hat, artifacts.v_hat, artifacts.nu_hat, artifacts.u_hat},
      out / "learned_tables.txt");

  std::ofstream diag(out / "diagnostics.json", std::ios::binary | std::ios::trunc);
  diag << "{\n"
       << "  \"num_records\": " << artifacts.diagnostics.num_records << ",\n"
       << "  \"unvisited_fraction\": "
       << format_double(artifacts.diagnostics.unvisited_fraction) << ",\n"
       << "  \"nu_clamped_fraction\": "
       << format_double(artifacts.diagnostics.nu_clamped_fraction) << ",\n"
       << "  \"fallback_row_fraction\": "
       << format_double(artifacts.diagnostics.fallback_row_fraction) << ",\n"
       << "  \"q_residual\": " << format_double(artifacts.diagnostics.q_residual) << "\n"
       << "}\n";

  std::cout << "wrote learned artifacts to " << out.string() << " ("
            << artifacts.diagnostics.num_records << " records, unvisited fraction "
            << format_double(artifacts.diagnostics.unvisited_fraction) << ")\n";
  return kExitOk;
}

struct EvaluateOptions {
  std::string mdp_file;
  std::string target_file;
  std::string estimator = "on_policy_mc";
  std::string behavior_file;
  std::string baseline_file;
  std::int64_t episodes = 1000;
  std::uint64_t seed = 0;
  std::string out_file = "eval.csv";
};

int cmd_evaluate(const EvaluateOptions& options) {
  const FiniteMdp mdp = load_mdp(options.mdp_file);
  const TimedPolicy target = load_policy(options.target_file);
  if (!target.matches(mdp)) {
    throw ValidationError("evaluate: target policy dimensions do not match the MDP");
  }

  std::optional<EstimatorSpec> spec;
  if (options.estimator == "on_policy_mc") {
    spec = EstimatorSpec::on_policy_mc(target);
  } else if (options.estimator == "pdis") {
    if (options.behavior_file.empty()) {
      throw ValidationError("evaluate: pdis requires --behavior");
    }
    spec = EstimatorSpec::pdis(load_policy(options.behavior_file));
  } else if (options.estimator == "baseline_corrected") {
    if (options.behavior_file.empty() || options.baseline_file.empty()) {
      throw ValidationError("evaluate: baseline_corrected requires --behavior and --baseline");
    }
    spec = EstimatorSpec::baseline_corrected(load_policy(options.behavior_file),
                                             load_baseline(options.baseline_file));
  } else if (options.estimator == "dopt" || options.estimator == "odi" ||
             options.estimator == "dr") {
    // Exact-solve variants, derived from the MDP itself.
    const QvTables qv = compute_q_v(mdp, target);
    const Baseline b_star = derive_b_star(qv);
    if (options.estimator == "dopt") {
      spec = EstimatorSpec::baseline_corrected(
          derive_mu_star(target, compute_u_bstar_recursive(mdp, target)), b_star);
    } else if (options.estimator == "odi") {
      const Baseline zero = Baseline::zeros(mdp.horizon, mdp.num_states, mdp.num_actions);
      spec = EstimatorSpec::pdis(derive_mu_star(target, compute_u(mdp, target, zero).u));
    } else {
      spec = EstimatorSpec::baseline_corrected(target, b_star);
    }
  } else {
    throw ValidationError("evaluate: unknown estimator '" + options.estimator + "'");
  }

  const double truth = policy_performance(mdp, target);
  const EvalRun run = run_evaluation(mdp, target, *spec, options.episodes,
                                     RngSpec{options.seed, fnv1a_hash("evaluate")});
  write_eval_run_csv(run, truth, fs::path(options.out_file));
  std::cout << "episodes " << run.episodes << ", mean " << format_double(run.running_mean)
            << ", sample variance " << format_double(run.running_variance) << ", truth "
            << format_double(truth) << "\n";
  std::cout << "wrote " << options.out_file << "\n";
  return kExitOk;
}

struct CompareOptions {
  std::string config_file;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

int cmd_compare(const CompareOptions& options) {
  std::string config_text = read_text(options.config_file);
  ExperimentConfig config = parse_experiment_config(config_text);
  if (options.seed.has_value()) {
    config.master_seed = *options.seed;
    config_text += "\n# cli override\nmaster_seed " + std::to_string(*options.seed) + "\n";
  }
  if (!options.out_dir.empty()) config.out_dir = options.out_dir;

  const ComparisonResult result = run_comparison(config);
  write_comparison_outputs(result, config, config_text, config.out_dir);

  for (const EstimatorCurve& curve : result.curves) {
    std::cout << curve.name << ": variance ratio "
              << format_double(curve.variance_ratio_vs_mc) << ", episodes to match MC "
              << result.episodes_to_match.at(curve.name) << "\n";
  }
  std::cout << "wrote outputs to " << config.out_dir << "\n";
  return kExitOk;
}

struct VerifyOptions {
  int instances = 50;
  std::uint64_t seed = 1;
  std::string out_file;
};

int cmd_verify(const VerifyOptions& options) {
  const TheoremSuiteResult result = run_theorem_suite(options.instances, options.seed);
  const std::string report = theorem_suite_to_json(result);
  if (!options.out_file.empty()) {
    std::ofstream out(options.out_file, std::ios::binary | std::ios::trunc);
    out << report;
  } else {
    std::cout << report;
  }
  std::cerr << (result.all_passed() ? "PASS" : "FAIL") << ": " << result.instances
            << " instances, " << result.failures << " failures, max equality residual "
            << format_double(result.max_equality_residual) << "\n";
  return result.all_passed() ? kExitOk : kExitValidation;
}

struct DumpOptions {
  std::string mdp_file;
  std::string policy_file;
  std::string tables_file;
  std::string dataset_file;
};

int cmd_dump(const DumpOptions& options) {
  bool did_something = false;
  if (!options.mdp_file.empty()) {
    const FiniteMdp mdp = load_mdp(options.mdp_file);
    std::cout << "mdp: " << mdp.num_states << " states, " << mdp.num_actions
              << " actions, horizon " << mdp.horizon << "; valid\n";
    did_something = true;
  }
  if (!options.policy_file.empty()) {
    const TimedPolicy policy = load_policy(options.policy_file);
    std::cout << "policy: horizon " << policy.horizon << ", " << policy.num_states
              << " states, " << policy.num_actions << " actions; all rows valid\n";
    did_something = true;
  }
  if (!options.tables_file.empty()) {
    const ValueTables tables = load_value_tables(options.tables_file);
    double v0_min = HUGE_VAL;
    double v0_max = -HUGE_VAL;
    for (int s = 0; s < tables.v.num_states(); ++s) {
      v0_min = std::min(v0_min, tables.v(0, s));
      v0_max = std::max(v0_max, tables.v(0, s));
    }
    std::cout << "tables: horizon " << tables.q.horizon() << ", " << tables.q.num_states()
              << " states, " << tables.q.num_actions() << " actions; v[0] in ["
              << format_double(v0_min) << ", " << format_double(v0_max) << "]\n";
    did_something = true;
  }
  if (!options.dataset_file.empty()) {
    const TupleDataset dataset = load_dataset_jsonl(options.dataset_file);
    std::cout << "dataset: " << dataset.records.size() << " records\n";
    did_something = true;
  }
  if (!did_something) {
    throw ValidationError("dump: pass at least one of --mdp, --policy, --tables, --dataset");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"doubly optimal off-policy evaluation laboratory"};
  app.require_subcommand(1);

  EnvBuildOptions env_options;
  CLI::App* env = app.add_subcommand("env", "environment utilities");
  env->require_subcommand(1);
  CLI::App* env_build = env->add_subcommand("build", "build a gridworld MDP file");
  env_build->add_option("--config", env_options.config_file, "experiment config file");
  env_build->add_option("--n", env_options.n, "grid side length (and horizon)");
  env_build->add_option("--slip", env_options.slip, "slip probability");
  env_build->add_option("--seed", env_options.seed, "reward/policy seed");
  env_build->add_option("--log-episodes", env_options.log_episodes,
                        "also write log.jsonl with this many offline episodes");
  env_build->add_option("--log-policies", env_options.log_policies,
                        "number of random logging policies for the offline log");
  env_build->add_option("--out", env_options.out_dir, "output directory");

  SolveOptions solve_options;
  CLI::App* solve = app.add_subcommand("solve", "exact DP tables, mu*, and b* for a policy");
  solve->add_option("--mdp", solve_options.mdp_file, "MDP file")->required();
  solve->add_option("--target", solve_options.target_file, "target policy file")->required();
  solve->add_option("--out", solve_options.out_dir, "output directory");

  LearnOptions learn_options;
  CLI::App* learn = app.add_subcommand("learn", "learn (mu*, b*) from an offline log");
  learn->add_option("--dataset", learn_options.dataset_file, "JSON-lines tuple log")->required();
  learn->add_option("--target", learn_options.target_file, "target policy file")->required();
  learn->add_option("--out", learn_options.out_dir, "output directory");

  EvaluateOptions evaluate_options;
  CLI::App* evaluate = app.add_subcommand("evaluate", "run one estimator for N episodes");
  evaluate->add_option("--mdp", evaluate_options.mdp_file, "MDP file")->required();
  evaluate->add_option("--target", evaluate_options.target_file, "target policy file")
      ->required();
  evaluate->add_option("--estimator", evaluate_options.estimator,
                       "on_policy_mc | pdis | baseline_corrected | dopt | odi | dr");
  evaluate->add_option("--behavior", evaluate_options.behavior_file, "behavior policy file");
  evaluate->add_option("--baseline", evaluate_options.baseline_file, "baseline file");
  evaluate->add_option("--episodes", evaluate_options.episodes, "episode count");
  evaluate->add_option("--seed", evaluate_options.seed, "RNG seed");
  evaluate->add_option("--out", evaluate_options.out_file, "output CSV path");

  CompareOptions compare_options;
  std::uint64_t compare_seed = 0;
  CLI::App* compare = app.add_subcommand("compare", "full estimator comparison from a config");
  compare->add_option("--config", compare_options.config_file, "experiment config file")
      ->required();
  compare->add_option("--out", compare_options.out_dir, "output directory override");
  CLI::Option* seed_option =
      compare->add_option("--seed", compare_seed, "master seed override");

  VerifyOptions verify_options;
  CLI::App* verify = app.add_subcommand("verify", "run the theorem-check suite");
  verify->add_option("--instances", verify_options.instances, "number of random instances");
  verify->add_option("--seed", verify_options.seed, "suite seed");
  verify->add_option("--out", verify_options.out_file, "write the JSON report here");

  DumpOptions dump_options;
  CLI::App* dump = app.add_subcommand("dump", "validate and summarize serialized files");
  dump->add_option("--mdp", dump_options.mdp_file, "MDP file");
  dump->add_option("--policy", dump_options.policy_file, "policy file");
  dump->add_option("--tables", dump_options.tables_file, "value-tables file");
  dump->add_option("--dataset", dump_options.dataset_file, "JSON-lines dataset");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& error) {
    const int code = app.exit(error);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (env_build->parsed()) return cmd_env_build(env_options);
    if (solve->parsed()) return cmd_solve(solve_options);
    if (learn->parsed()) return cmd_learn(learn_options);
    if (evaluate->parsed()) return cmd_evaluate(evaluate_options);
    if (compare->parsed()) {
      if (seed_option->count() > 0) compare_options.seed = compare_seed;
      return cmd_compare(compare_options);
    }
    if (verify->parsed()) return cmd_verify(verify_options);
    if (dump->parsed()) return cmd_dump(dump_options);
  } catch (const InfeasibleError& error) {
    std::cerr << "infeasible: " << error.what() << "\n";
    return kExitInfeasible;
  } catch (const ValidationError& error) {
    std::cerr << "error: " << error.what() << "\n";
    return kExitValidation;
  } catch (const CoverageViolation& error) {
    std::cerr << "error: " << error.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& error) {
    std::cerr << "error: " << error.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}
