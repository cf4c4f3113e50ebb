#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "doptlab/environments.hpp"
#include "doptlab/io.hpp"
#include "doptlab/mdp.hpp"

namespace doptlab {

inline constexpr std::int64_t kEpisodesNotReached = -1;

// Mean and standard error of the relative error per episode index, plus the
// variance summary, for one estimator. Standard errors are taken across runs
// (policy x run), matching the many-runs averaging protocol.
struct EstimatorCurve {
  std::string name;
  std::vector<double> mean_rel_error;    // [episode]
  std::vector<double> stderr_rel_error;  // [episode]
  double mean_within_run_variance = 0.0;
  double variance_ratio_vs_mc = 1.0;
};

struct ComparisonResult {
  std::vector<EstimatorCurve> curves;
  // Per-policy relative-error normalizer: the mean over runs of the
  // on-policy MC absolute error after its first episode, frozen before any
  // curve is normalized. A zero normalizer (deterministic instances) leaves
  // errors unnormalized.
  std::vector<double> normalizers;
  std::vector<double> ground_truth;  // J(pi) per policy, from exact DP
  std::map<std::string, std::int64_t> episodes_to_match;  // vs on_policy_mc at full budget
  int episodes = 0;
  int num_policies = 0;
  int runs_per_policy = 0;
};

// Runs the full estimator comparison described by the config: build or load
// the environment, draw target policies, generate one shared offline log,
// learn each method's artifacts per policy, then evaluate every estimator
// over runs x episodes. Fans out across policies on a thread pool; results
// are merged in policy order, so output is independent of scheduling.
ComparisonResult run_comparison(const ExperimentConfig& config);

// Smallest episode count at which `curve` reaches the reference estimator's
// mean relative error at reference_budget; kEpisodesNotReached if it never
// does within the curve.
std::int64_t episodes_to_accuracy(const EstimatorCurve& curve, const EstimatorCurve& reference,
                                  int reference_budget);

// Writes one CSV per estimator (episode, mean_rel_error, stderr), a summary
// JSON with variance ratios and episode budgets, and a manifest JSON with the
// config hash, seeds, normalizers, and version. Output is byte-deterministic
// for a fixed config and seed.
void write_comparison_outputs(const ComparisonResult& result, const ExperimentConfig& config,
                              const std::string& config_text,
                              const std::filesystem::path& out_dir);

struct TheoremInstanceResult {
  std::uint64_t seed = 0;
  RandomMdpDims dims;
  double max_equality_residual = 0.0;
  double min_inequality_slack = 0.0;
  double min_delta = 0.0;
  double max_lemma4_gap = 0.0;
  double max_unbiasedness_residual = 0.0;
  double max_variance_residual = 0.0;  // recursion vs enumeration-exact variance
  double worst_optimality_margin = 0.0;  // min over challengers of Var(mu,b) - Var(mu*,b*)
  bool variance_ordering_ok = false;
  bool passed = false;
};

struct TheoremSuiteResult {
  int instances = 0;
  int failures = 0;
  double max_equality_residual = 0.0;
  double min_inequality_slack = 0.0;
  double min_delta = 0.0;
  double max_lemma4_gap = 0.0;
  double max_unbiasedness_residual = 0.0;
  double max_variance_residual = 0.0;
  double worst_optimality_margin = 0.0;
  std::vector<TheoremInstanceResult> per_instance;

  bool all_passed() const { return failures == 0; }
};

// Enumeration-backed audit of one instance: the three theorem gap reports,
// per-(t,s) conditional unbiasedness and variance of each estimator family
// against brute-force enumeration, the Lemma 4 cross-check, optimality
// against `challengers` random (mu, b) pairs, and the variance ordering.
TheoremInstanceResult audit_instance(const FiniteMdp& mdp, const TimedPolicy& target,
                                     std::uint64_t seed, int challengers);

// Seeded random instances through every theorem identity plus the exact-DP
// invariants (Lemma 4 equivalence, unbiasedness by enumeration, optimality
// against random challengers, variance ordering).
TheoremSuiteResult run_theorem_suite(int instances, std::uint64_t seed);

std::string theorem_suite_to_json(const TheoremSuiteResult& result);

}  // namespace doptlab
