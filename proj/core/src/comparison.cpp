#include "doptlab/comparison.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <sstream>

#include "json.hpp"

#include "doptlab/estimators.hpp"
#include "doptlab/exact_dp.hpp"
#include "doptlab/offline.hpp"
#include "doptlab/theorem_checks.hpp"

namespace doptlab {

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kSuiteChallengers = 50;

// ---------------------------------------------------------------------------
// Estimator comparison
// ---------------------------------------------------------------------------

struct PolicyOutcome {
  double ground_truth = 0.0;
  double normalizer = 0.0;
  // [estimator][run] -> abs error of the cumulative mean per episode.
  std::vector<std::vector<std::vector<double>>> error_curves;
  // [estimator][run] -> within-run sample variance of the per-episode
  // estimates.
  std::vector<std::vector<double>> run_variances;
};

std::vector<double> error_curve(const EvalRun& run, double truth) {
  std::vector<double> curve(run.samples.size());
  double cumulative = 0.0;
  for (std::size_t i = 0; i < run.samples.size(); ++i) {
    cumulative += run.samples[i];
    curve[i] = std::abs(cumulative / static_cast<double>(i + 1) - truth);
  }
  return curve;
}

PolicyOutcome evaluate_policy(const FiniteMdp& mdp, const TimedPolicy& target,
                              const EmpiricalModel& model,
                              const std::vector<std::string>& estimators, int episodes,
                              int runs, RngSpec policy_stream) {
  PolicyOutcome outcome;
  outcome.ground_truth = policy_performance(mdp, target);

  // Every learned method reads the same offline model; only the target
  // policy changes the fitted quantities.
  const FittedQv fit = fitted_q_evaluation(model, target);
  const TsaTable nu_hat = construct_nu_targets(model, fit.q_hat, fit.v_hat);

  std::vector<EstimatorSpec> specs;
  specs.reserve(estimators.size());
  for (const std::string& name : estimators) {
    if (name == "on_policy_mc") {
      specs.push_back(EstimatorSpec::on_policy_mc(target));
    } else if (name == "dopt") {
      const TsaTable u_hat = fit_u(model, target, nu_hat);
      specs.push_back(EstimatorSpec::baseline_corrected(
          derive_behavior_policy(target, u_hat, model), Baseline{fit.q_hat, fit.v_hat}));
    } else if (name == "odi") {
      const TsaTable u_pdis = fit_u_pdis(model, target, fit, nu_hat);
      specs.push_back(EstimatorSpec::pdis(derive_behavior_policy(target, u_pdis, model)));
    } else if (name == "dr") {
      specs.push_back(
          EstimatorSpec::baseline_corrected(target, Baseline{fit.q_hat, fit.v_hat}));
    } else {
      throw ValidationError("unknown estimator '" + name + "'");
    }
  }

  outcome.error_curves.resize(estimators.size());
  outcome.run_variances.resize(estimators.size());
  for (std::size_t e = 0; e < specs.size(); ++e) {
    outcome.error_curves[e].reserve(static_cast<std::size_t>(runs));
    const RngSpec estimator_stream = policy_stream.derived(fnv1a_hash(estimators[e]));
    for (int run = 0; run < runs; ++run) {
      const EvalRun result =
          run_evaluation(mdp, target, specs[e], episodes,
                         estimator_stream.derived(static_cast<std::uint64_t>(run)));
      outcome.error_curves[e].push_back(error_curve(result, outcome.ground_truth));
      outcome.run_variances[e].push_back(result.running_variance);
    }
  }

  // Relative-error normalizer: the on-policy MC error after its first
  // episode, averaged over this policy's runs and frozen before any curve is
  // normalized.
  const auto mc_it = std::find(estimators.begin(), estimators.end(), "on_policy_mc");
  const std::size_t mc_index = static_cast<std::size_t>(mc_it - estimators.begin());
  double normalizer = 0.0;
  for (const std::vector<double>& curve : outcome.error_curves[mc_index]) {
    normalizer += curve.front();
  }
  outcome.normalizer = normalizer / static_cast<double>(runs);
  return outcome;
}

}  // namespace

ComparisonResult run_comparison(const ExperimentConfig& config) {
  if (std::find(config.estimators.begin(), config.estimators.end(), "on_policy_mc") ==
      config.estimators.end()) {
    throw ValidationError(
        "comparison requires on_policy_mc (relative-error and ratio reference)");
  }

  FiniteMdp mdp;
  if (config.env == "gridworld") {
    mdp = build_gridworld(
        GridworldSpec{config.grid_n, config.grid_slip, config.reward_seed, config.policy_seed});
  } else {
    mdp = load_mdp(config.mdp_file);
  }

  std::vector<TimedPolicy> targets;
  if (!config.target_policy_file.empty()) {
    targets.push_back(load_policy(config.target_policy_file));
    if (!targets.front().matches(mdp)) {
      throw ValidationError("target policy dimensions do not match the environment");
    }
  } else {
    targets = random_target_policies(mdp, config.num_policies, config.policy_seed);
  }

  // One shared offline log; all learned methods consume the same data.
  std::vector<TimedPolicy> logging_policies;
  const RngSpec logging_stream{config.offline_seed, fnv1a_hash("logging_policies")};
  for (int i = 0; i < std::max(config.offline_logging_policies, 1); ++i) {
    logging_policies.push_back(random_policy(mdp.horizon, mdp.num_states, mdp.num_actions,
                                             logging_stream.derived(i)));
  }
  const TupleDataset log =
      generate_offline_log(mdp, logging_policies, config.offline_episodes, config.offline_seed);
  const EmpiricalModel model =
      build_empirical_model(log, ModelDims{mdp.horizon, mdp.num_states, mdp.num_actions});

  const RngSpec master{config.master_seed, fnv1a_hash("comparison")};
  std::vector<std::future<PolicyOutcome>> futures;
  futures.reserve(targets.size());
  for (std::size_t p = 0; p < targets.size(); ++p) {
    futures.push_back(std::async(std::launch::async, [&, p] {
      return evaluate_policy(mdp, targets[p], model, config.estimators, config.episodes,
                             config.runs_per_policy, master.derived(p));
    }));
  }
  std::vector<PolicyOutcome> outcomes;
  outcomes.reserve(targets.size());
  for (std::future<PolicyOutcome>& future : futures) outcomes.push_back(future.get());

  ComparisonResult result;
  result.episodes = config.episodes;
  result.num_policies = static_cast<int>(targets.size());
  result.runs_per_policy = config.runs_per_policy;
  for (const PolicyOutcome& outcome : outcomes) {
    result.ground_truth.push_back(outcome.ground_truth);
    result.normalizers.push_back(outcome.normalizer);
  }

  const std::size_t total_runs = targets.size() * static_cast<std::size_t>(config.runs_per_policy);
  const double runs = static_cast<double>(config.runs_per_policy);
  double mc_mean_variance = 0.0;
  for (std::size_t e = 0; e < config.estimators.size(); ++e) {
    EstimatorCurve curve;
    curve.name = config.estimators[e];
    curve.mean_rel_error.assign(static_cast<std::size_t>(config.episodes), 0.0);
    curve.stderr_rel_error.assign(static_cast<std::size_t>(config.episodes), 0.0);

    // Mean: average of per-policy normalized mean curves. Dividing the
    // per-policy mean by the frozen normalizer (the identical double for
    // on-policy MC at episode 1) pins that curve's first entry to exactly 1.
    std::vector<double> rel_sum(static_cast<std::size_t>(config.episodes), 0.0);
    std::vector<double> rel_sum_sq(static_cast<std::size_t>(config.episodes), 0.0);
    double variance_sum = 0.0;
    for (const PolicyOutcome& outcome : outcomes) {
      std::vector<double> raw_mean(static_cast<std::size_t>(config.episodes), 0.0);
      for (const std::vector<double>& run_curve : outcome.error_curves[e]) {
        for (int i = 0; i < config.episodes; ++i) {
          raw_mean[static_cast<std::size_t>(i)] += run_curve[static_cast<std::size_t>(i)];
        }
      }
      for (int i = 0; i < config.episodes; ++i) {
        const double mean = raw_mean[static_cast<std::size_t>(i)] / runs;
        curve.mean_rel_error[static_cast<std::size_t>(i)] +=
            outcome.normalizer > 0.0 ? mean / outcome.normalizer : mean;
      }
      // Spread: per-run normalized values.
      for (const std::vector<double>& run_curve : outcome.error_curves[e]) {
        for (int i = 0; i < config.episodes; ++i) {
          const double rel = outcome.normalizer > 0.0
                                 ? run_curve[static_cast<std::size_t>(i)] / outcome.normalizer
                                 : run_curve[static_cast<std::size_t>(i)];
          rel_sum[static_cast<std::size_t>(i)] += rel;
          rel_sum_sq[static_cast<std::size_t>(i)] += rel * rel;
        }
      }
      for (double run_variance : outcome.run_variances[e]) variance_sum += run_variance;
    }
    const double num_policies = static_cast<double>(targets.size());
    const double n = static_cast<double>(total_runs);
    for (int i = 0; i < config.episodes; ++i) {
      curve.mean_rel_error[static_cast<std::size_t>(i)] /= num_policies;
      if (total_runs > 1) {
        const double mean = rel_sum[static_cast<std::size_t>(i)] / n;
        const double sample_var = std::max(
            0.0, (rel_sum_sq[static_cast<std::size_t>(i)] - n * mean * mean) / (n - 1.0));
        curve.stderr_rel_error[static_cast<std::size_t>(i)] = std::sqrt(sample_var / n);
      }
    }
    curve.mean_within_run_variance = variance_sum / n;
    if (curve.name == "on_policy_mc") mc_mean_variance = curve.mean_within_run_variance;
    result.curves.push_back(std::move(curve));
  }

  for (EstimatorCurve& curve : result.curves) {
    if (mc_mean_variance > 0.0) {
      curve.variance_ratio_vs_mc = curve.mean_within_run_variance / mc_mean_variance;
    } else {
      curve.variance_ratio_vs_mc = curve.mean_within_run_variance == 0.0 ? 1.0 : HUGE_VAL;
    }
  }

  const auto mc_curve =
      std::find_if(result.curves.begin(), result.curves.end(),
                   [](const EstimatorCurve& c) { return c.name == "on_policy_mc"; });
  for (const EstimatorCurve& curve : result.curves) {
    result.episodes_to_match[curve.name] =
        episodes_to_accuracy(curve, *mc_curve, config.episodes);
  }
  return result;
}

std::int64_t episodes_to_accuracy(const EstimatorCurve& curve, const EstimatorCurve& reference,
                                  int reference_budget) {
  if (reference_budget < 1 ||
      static_cast<std::size_t>(reference_budget) > reference.mean_rel_error.size()) {
    throw ValidationError("episodes_to_accuracy: reference budget outside the computed curve");
  }
  const double target_error =
      reference.mean_rel_error[static_cast<std::size_t>(reference_budget - 1)];
  for (std::size_t i = 0; i < curve.mean_rel_error.size(); ++i) {
    if (curve.mean_rel_error[i] <= target_error) return static_cast<std::int64_t>(i + 1);
  }
  return kEpisodesNotReached;
}

void write_comparison_outputs(const ComparisonResult& result, const ExperimentConfig& config,
                              const std::string& config_text,
                              const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);

  std::vector<std::string> written;
  for (const EstimatorCurve& curve : result.curves) {
    std::ostringstream csv;
    csv << "episode,mean_rel_error,stderr\n";
    for (std::size_t i = 0; i < curve.mean_rel_error.size(); ++i) {
      csv << (i + 1) << "," << format_double(curve.mean_rel_error[i]) << ","
          << format_double(curve.stderr_rel_error[i]) << "\n";
    }
    const std::string filename = curve.name + ".csv";
    std::ofstream out(out_dir / filename, std::ios::binary | std::ios::trunc);
    out << csv.str();
    written.push_back(filename);
  }

  nlohmann::ordered_json summary;
  summary["episodes"] = result.episodes;
  summary["num_policies"] = result.num_policies;
  summary["runs_per_policy"] = result.runs_per_policy;
  summary["estimators"] = nlohmann::ordered_json::array();
  for (const EstimatorCurve& curve : result.curves) {
    nlohmann::ordered_json entry;
    entry["name"] = curve.name;
    entry["variance_ratio_vs_on_policy_mc"] = curve.variance_ratio_vs_mc;
    entry["mean_within_run_variance"] = curve.mean_within_run_variance;
    entry["episodes_to_match_on_policy_mc"] = result.episodes_to_match.at(curve.name);
    entry["final_mean_rel_error"] = curve.mean_rel_error.back();
    summary["estimators"].push_back(entry);
  }
  {
    std::ofstream out(out_dir / "summary.json", std::ios::binary | std::ios::trunc);
    out << summary.dump(2) << "\n";
    written.push_back("summary.json");
  }

  nlohmann::ordered_json manifest;
  {
    std::ostringstream hash;
    hash << std::hex << fnv1a_hash(config_text);
    manifest["config_hash"] = hash.str();
  }
  manifest["version"] = kVersion;
  manifest["master_seed"] = config.master_seed;
  manifest["policy_seed"] = config.policy_seed;
  manifest["reward_seed"] = config.reward_seed;
  manifest["offline_seed"] = config.offline_seed;
  manifest["ground_truth"] = result.ground_truth;
  manifest["rel_error_normalizers"] = result.normalizers;
  manifest["config"] = config_text;
  manifest["outputs"] = written;
  {
    std::ofstream out(out_dir / "manifest.json", std::ios::binary | std::ios::trunc);
    out << manifest.dump(2) << "\n";
  }
}

// ---------------------------------------------------------------------------
// Theorem suite
// ---------------------------------------------------------------------------

namespace {

struct EnumeratedMoments {
  double expectation = 0.0;
  double variance = 0.0;
};

template <typename Estimate>
EnumeratedMoments enumerate_moments(const std::vector<WeightedPath>& paths, Estimate estimate) {
  double mean = 0.0;
  double second = 0.0;
  for (const WeightedPath& path : paths) {
    const double value = estimate(path.steps);
    mean += path.probability * value;
    second += path.probability * value * value;
  }
  return EnumeratedMoments{mean, second - mean * mean};
}

// One (behavior, baseline) family checked against enumeration at every
// (t, s): conditional expectation vs v and conditional variance vs the
// backward recursion.
struct FamilyAudit {
  double max_unbiasedness_residual = 0.0;
  double max_variance_residual = 0.0;
};

FamilyAudit audit_family(const FiniteMdp& mdp, const TimedPolicy& target,
                         const TimedPolicy& behavior, const Baseline& baseline,
                         const QvTables& qv) {
  FamilyAudit audit;
  const VarianceTables exact = exact_estimator_variance(mdp, target, behavior, baseline);
  for (int t = 0; t < mdp.horizon; ++t) {
    for (int s = 0; s < mdp.num_states; ++s) {
      const std::vector<WeightedPath> paths = enumerate_suffixes(mdp, behavior, t, s);
      const EnumeratedMoments moments =
          enumerate_moments(paths, [&](std::span<const TrajectoryStep> steps) {
            return baseline_return(steps, target, behavior, baseline);
          });
      audit.max_unbiasedness_residual = std::max(audit.max_unbiasedness_residual,
                                                 std::abs(moments.expectation - qv.v(t, s)));
      audit.max_variance_residual = std::max(
          audit.max_variance_residual, std::abs(moments.variance - exact.per_state(t, s)));
    }
  }
  return audit;
}

}  // namespace

TheoremInstanceResult audit_instance(const FiniteMdp& mdp, const TimedPolicy& target,
                                     std::uint64_t seed, int challengers) {
  TheoremInstanceResult result;
  result.seed = seed;
  result.dims = RandomMdpDims{mdp.num_states, mdp.num_actions, mdp.horizon};

  const QvTables qv = compute_q_v(mdp, target);
  const Baseline b_star = derive_b_star(qv);
  const Baseline zero = Baseline::zeros(mdp.horizon, mdp.num_states, mdp.num_actions);

  // Theorem gap reports.
  const GapReport on_policy = gap_vs_on_policy(mdp, target);
  const GapReport odi = gap_vs_odi(mdp, target);
  const GapReport dr = gap_vs_dr(mdp, target);
  result.max_equality_residual =
      std::max(on_policy.max_abs_residual(), dr.max_abs_residual());
  result.min_inequality_slack = odi.min_residual();
  result.min_delta = std::min({on_policy.min_delta(), odi.min_delta(), dr.min_delta()});

  // Lemma 4 cross-check: the general-form u with b = b* against the
  // recursion that never touches a trajectory variance.
  const UComputation u_general = compute_u(mdp, target, b_star);
  const TsaTable u_recursive = compute_u_bstar_recursive(mdp, target);
  result.max_lemma4_gap = max_abs_diff(u_general.u, u_recursive);

  const TimedPolicy mu_star = derive_mu_star(target, u_recursive);

  // Estimator families audited by enumeration: on-policy PDIS (= raw MC
  // return), PDIS under a random full-support behavior, a random baseline
  // under the same behavior, and the doubly optimal pair. A fifth family
  // zeroes one terminal action (in Lambda but not Lambda^-, since u* at the
  // final step is identically zero).
  const RngSpec stream{seed, fnv1a_hash("audit")};
  const TimedPolicy mu_random =
      random_policy(mdp.horizon, mdp.num_states, mdp.num_actions, stream.derived(1));
  const Baseline b_random = random_baseline(target, -1.0, 2.0, stream.derived(2));

  TimedPolicy mu_lambda_only = mu_star;
  if (mdp.num_actions >= 2) {
    for (int a = 0; a < mdp.num_actions; ++a) {
      mu_lambda_only.prob_ref(mdp.horizon - 1, 0, a) = a == 0 ? 1.0 : 0.0;
    }
  }

  const FamilyAudit audits[] = {
      audit_family(mdp, target, target, zero, qv),
      audit_family(mdp, target, mu_random, zero, qv),
      audit_family(mdp, target, mu_random, b_random, qv),
      audit_family(mdp, target, mu_star, b_star, qv),
      audit_family(mdp, target, mu_lambda_only, b_star, qv),
  };
  for (const FamilyAudit& audit : audits) {
    result.max_unbiasedness_residual =
        std::max(result.max_unbiasedness_residual, audit.max_unbiasedness_residual);
    result.max_variance_residual =
        std::max(result.max_variance_residual, audit.max_variance_residual);
  }

  // Optimality: the doubly optimal pair beats every random challenger at
  // every (t, s).
  const VarianceTables var_dopt = exact_estimator_variance(mdp, target, mu_star, b_star);
  double worst_margin = HUGE_VAL;
  for (int i = 0; i < challengers; ++i) {
    const RngSpec challenger_stream = stream.derived(100 + static_cast<std::uint64_t>(i));
    const TimedPolicy mu =
        random_policy(mdp.horizon, mdp.num_states, mdp.num_actions, challenger_stream.derived(0));
    const Baseline b = random_baseline(target, -1.0, 2.0, challenger_stream.derived(1));
    const VarianceTables var_challenger = exact_estimator_variance(mdp, target, mu, b);
    for (std::size_t cell = 0; cell < var_challenger.per_state.data().size(); ++cell) {
      worst_margin = std::min(worst_margin, var_challenger.per_state.data()[cell] -
                                                var_dopt.per_state.data()[cell]);
    }
  }
  result.worst_optimality_margin = challengers > 0 ? worst_margin : 0.0;

  result.variance_ordering_ok = variance_ordering(mdp, target).holds;

  result.passed = result.max_equality_residual <= kGapEqualityTolerance &&
                  result.min_inequality_slack >= -kGapEqualityTolerance &&
                  result.min_delta >= -kDeltaTolerance &&
                  result.max_lemma4_gap <= kVarianceTolerance &&
                  result.max_unbiasedness_residual <= kVarianceTolerance &&
                  result.max_variance_residual <= kVarianceTolerance &&
                  result.worst_optimality_margin >= -kVarianceTolerance &&
                  result.variance_ordering_ok;
  return result;
}

TheoremSuiteResult run_theorem_suite(int instances, std::uint64_t seed) {
  if (instances < 1) throw ValidationError("run_theorem_suite: instances must be >= 1");
  const RngSpec base{seed, fnv1a_hash("theorem_suite")};

  std::vector<std::future<TheoremInstanceResult>> futures;
  futures.reserve(static_cast<std::size_t>(instances));
  for (int i = 0; i < instances; ++i) {
    futures.push_back(std::async(std::launch::async, [&base, i] {
      const std::uint64_t instance_seed = base.derived(static_cast<std::uint64_t>(i)).stream_id;
      const RandomMdpDims dims = random_suite_dims(instance_seed);
      const RandomInstance instance = random_mdp(dims, instance_seed);
      return audit_instance(instance.mdp, instance.target, instance_seed, kSuiteChallengers);
    }));
  }

  TheoremSuiteResult suite;
  suite.instances = instances;
  suite.min_inequality_slack = HUGE_VAL;
  suite.min_delta = HUGE_VAL;
  suite.worst_optimality_margin = HUGE_VAL;
  for (std::future<TheoremInstanceResult>& future : futures) {
    const TheoremInstanceResult instance = future.get();
    suite.failures += instance.passed ? 0 : 1;
    suite.max_equality_residual =
        std::max(suite.max_equality_residual, instance.max_equality_residual);
    suite.min_inequality_slack =
        std::min(suite.min_inequality_slack, instance.min_inequality_slack);
    suite.min_delta = std::min(suite.min_delta, instance.min_delta);
    suite.max_lemma4_gap = std::max(suite.max_lemma4_gap, instance.max_lemma4_gap);
    suite.max_unbiasedness_residual =
        std::max(suite.max_unbiasedness_residual, instance.max_unbiasedness_residual);
    suite.max_variance_residual =
        std::max(suite.max_variance_residual, instance.max_variance_residual);
    suite.worst_optimality_margin =
        std::min(suite.worst_optimality_margin, instance.worst_optimality_margin);
    suite.per_instance.push_back(instance);
  }
  return suite;
}

std::string theorem_suite_to_json(const TheoremSuiteResult& result) {
  nlohmann::ordered_json report;
  report["instances"] = result.instances;
  report["failures"] = result.failures;
  report["all_passed"] = result.all_passed();
  report["max_equality_residual"] = result.max_equality_residual;
  report["min_inequality_slack"] = result.min_inequality_slack;
  report["min_delta"] = result.min_delta;
  report["max_lemma4_gap"] = result.max_lemma4_gap;
  report["max_unbiasedness_residual"] = result.max_unbiasedness_residual;
  report["max_variance_residual"] = result.max_variance_residual;
  report["worst_optimality_margin"] = result.worst_optimality_margin;
  report["per_instance"] = nlohmann::ordered_json::array();
  for (const TheoremInstanceResult& instance : result.per_instance) {
    nlohmann::ordered_json entry;
    entry["seed"] = instance.seed;
    entry["num_states"] = instance.dims.num_states;
    entry["num_actions"] = instance.dims.num_actions;
    entry["horizon"] = instance.dims.horizon;
    entry["max_equality_residual"] = instance.max_equality_residual;
    entry["min_inequality_slack"] = instance.min_inequality_slack;
    entry["min_delta"] = instance.min_delta;
    entry["max_lemma4_gap"] = instance.max_lemma4_gap;
    entry["max_unbiasedness_residual"] = instance.max_unbiasedness_residual;
    entry["max_variance_residual"] = instance.max_variance_residual;
    entry["worst_optimality_margin"] = instance.worst_optimality_margin;
    entry["variance_ordering_ok"] = instance.variance_ordering_ok;
    entry["passed"] = instance.passed;
    report["per_instance"].push_back(entry);
  }
  return report.dump(2) + "\n";
}

}  // namespace doptlab
