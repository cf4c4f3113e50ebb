#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "doptlab/exact_dp.hpp"
#include "doptlab/mdp.hpp"

namespace doptlab {

enum class EstimatorKind {
  kOnPolicyMc,
  kPdis,
  kBaselineCorrected,
};

// Which estimator to run and what it needs. Built through the factories so
// the invariants hold: a baseline is present iff kind is baseline-corrected,
// and on-policy MC uses the target itself as behavior.
struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::kOnPolicyMc;
  TimedPolicy behavior;
  std::optional<Baseline> baseline;

  static EstimatorSpec on_policy_mc(const TimedPolicy& target);
  static EstimatorSpec pdis(TimedPolicy behavior);
  static EstimatorSpec baseline_corrected(TimedPolicy behavior, Baseline baseline);
};

// Per-episode estimates with numerically stable running statistics
// (Welford). running_variance is the unbiased sample variance (n - 1).
struct EvalRun {
  std::vector<double> samples;
  double running_mean = 0.0;
  double running_variance = 0.0;
  std::int64_t episodes = 0;

  void add(double sample);

  // Associative, order-insensitive (within rounding) combination of two runs
  // via the pairwise mean/M2 update; sample order is a's then b's.
  static EvalRun merge(const EvalRun& a, const EvalRun& b);

 private:
  double m2_ = 0.0;
};

// G^PDIS(tau_{t:T-1}) = rho_t (R_{t+1} + G^PDIS(tau_{t+1:T-1})), terminal
// rho_t R_{t+1}. The span form evaluates a suffix; the Trajectory form the
// whole episode. Throws CoverageViolation at any visited step with
// pi > 0 and mu = 0.
double pdis_return(std::span<const TrajectoryStep> steps, const TimedPolicy& target,
                   const TimedPolicy& behavior);
double pdis_return(const Trajectory& trajectory, const TimedPolicy& target,
                   const TimedPolicy& behavior);

// G^b(tau_{t:T-1}) = rho_t (R_{t+1} + G^b(tau_{t+1:T-1}) - b_t) + bbar_t,
// terminal rho_t (R_{t+1} - b_t) + bbar_t.
double baseline_return(std::span<const TrajectoryStep> steps, const TimedPolicy& target,
                       const TimedPolicy& behavior, const Baseline& baseline);
double baseline_return(const Trajectory& trajectory, const TimedPolicy& target,
                       const TimedPolicy& behavior, const Baseline& baseline);

// Runs `episodes` independent episodes under spec.behavior (stream split per
// episode) and applies the estimator to each. Coverage violations are
// rethrown with the offending episode index attached.
EvalRun run_evaluation(const FiniteMdp& mdp, const TimedPolicy& target, const EstimatorSpec& spec,
                       std::int64_t episodes, RngSpec rng);

}  // namespace doptlab
