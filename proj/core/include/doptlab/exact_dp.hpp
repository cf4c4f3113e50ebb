#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "doptlab/mdp.hpp"
#include "doptlab/tables.hpp"

namespace doptlab {

inline constexpr double kVarianceTolerance = 1e-9;
inline constexpr std::size_t kDefaultEnumerationCap = 1'000'000;

// q[t][s][a] and v[t][s] for a target policy, from backward DP.
struct QvTables {
  TsaTable q;
  TsTable v;
};

// Bundle of the exact per-timestep tables, as produced by solve/dump.
struct ValueTables {
  TsaTable q;
  TsTable v;
  TsaTable nu;
  TsaTable u;

  friend bool operator==(const ValueTables&, const ValueTables&) = default;
};

// Per-(t,s,a) control-variate function with its pi-average per (t,s).
struct Baseline {
  TsaTable b;
  TsTable b_bar;

  static Baseline zeros(int horizon, int num_states, int num_actions);
  // Builds b_bar[t][s] = sum_a pi_t(a|s) b[t][s][a].
  static Baseline from_table(TsaTable b, const TimedPolicy& target);

  friend bool operator==(const Baseline&, const Baseline&) = default;
};

// Membership of a behavior policy in the coverage sets. Lambda^- is the
// classic constraint (mu = 0 implies pi = 0); Lambda is the enlarged set
// (mu = 0 implies pi * u = 0). Lambda^- membership implies Lambda membership.
struct CoverageReport {
  bool in_lambda_minus = false;
  bool in_lambda = false;
  // Offending (t, s, a) triples for the tightest failed set: Lambda^-
  // violations when only Lambda^- fails, Lambda violations when both fail.
  std::vector<std::array<int, 3>> violations;
};

// Backward recursion: q[T-1] = r, q[t] = r + p . v[t+1], v[t] = pi . q[t].
QvTables compute_q_v(const FiniteMdp& mdp, const TimedPolicy& target);

// J(pi) = sum_s p0(s) v[0][s].
double policy_performance(const FiniteMdp& mdp, const TimedPolicy& target);

// nu[t][s][a] = Var_{S'}(v[t+1][S'] | s, a); zero at t = T-1.
TsaTable compute_nu(const FiniteMdp& mdp, const TimedPolicy& target, const TsTable& v);

struct UComputation {
  TsaTable u;
  // Var(G^b(tau^{mu*}_{t:T-1}) | S_t = s) for the mu* induced by this u,
  // evaluated exactly by the recursive variance identity at each backward
  // step of the alternating sweep.
  TsTable conditional_variance;
};

// General-form u for an arbitrary baseline:
//   u[T-1] = (q - b)^2
//   u[t]   = (q - b)^2 + nu + sum_s' p(s'|s,a) Var(G^b(tau^{mu*}_{t+1}) | s')
// computed in the alternating backward order u[t] -> mu*[t] -> Var[t].
UComputation compute_u(const FiniteMdp& mdp, const TimedPolicy& target, const Baseline& baseline);

// Recursive form specific to b = b*: u[T-1] = 0 and
//   u[t][s][a] = nu[t][s][a]
//              + sum_s' p(s'|s,a) (sum_a' pi[t+1](a'|s') sqrt(u[t+1][s'][a']))^2,
// where the squared pi-weighted root-u sum is the contraction of the
// importance-weighted expectation under mu*[t+1]. Never evaluates a
// trajectory variance.
TsaTable compute_u_bstar_recursive(const FiniteMdp& mdp, const TimedPolicy& target);

// mu*[t](a|s) proportional to pi[t](a|s) sqrt(u[t][s][a]); rows whose weights
// are all zero fall back to the uniform distribution. u is clamped at 0
// before the square root to absorb negative rounding dust.
TimedPolicy derive_mu_star(const TimedPolicy& target, const TsaTable& u);

// b* = q, so b_bar = v.
Baseline derive_b_star(const QvTables& qv);

CoverageReport coverage_check(const TimedPolicy& behavior, const TimedPolicy& target,
                              const TsaTable& u);

struct VarianceTables {
  // Var(G^b(tau^{mu}_{t:T-1}) | S_t = s) per (t, s).
  TsTable per_state;
  // E_{p0}[Var[0][S0]] + Var_{p0}(v[0][S0]) by the law of total variance.
  double aggregate = 0.0;
};

// Exact conditional variance of the baseline-corrected PDIS estimator under
// `behavior`, by the backward variance recursion:
//   Var[T-1](s) = E_mu[rho^2 (q - b)^2] - (v - b_bar)^2
//   Var[t](s)   = E_mu[rho^2 (E_{s'}[Var[t+1](s')] + nu + (q - b)^2)]
//               - (v - b_bar)^2.
// Requires behavior in Lambda for this baseline; throws CoverageViolation
// otherwise (unbiasedness, and hence the recursion, fails outside Lambda).
VarianceTables exact_estimator_variance(const FiniteMdp& mdp, const TimedPolicy& target,
                                        const TimedPolicy& behavior, const Baseline& baseline);

struct MomentTables {
  // E[G^b(tau^{mu}_{t:T-1}) | S_t = s] and its conditional variance, both
  // exact for ANY behavior policy (no coverage requirement): the recursion
  // tracks the conditional mean instead of assuming it equals v. Behaviors
  // outside Lambda yield a biased estimator; mean then differs from v.
  TsTable mean;
  TsTable variance;
  double aggregate_mean = 0.0;
  double aggregate_variance = 0.0;
};

MomentTables exact_estimator_moments(const FiniteMdp& mdp, const TimedPolicy& target,
                                     const TimedPolicy& behavior, const Baseline& baseline);

struct WeightedTrajectory {
  Trajectory trajectory;
  double probability = 0.0;
};

struct WeightedPath {
  std::vector<TrajectoryStep> steps;
  double probability = 0.0;
};

// Every positive-probability episode under `behavior` with its probability.
// Probabilities sum to 1 (within accumulation error). Throws InfeasibleError
// when the enumeration would exceed `cap` entries.
std::vector<WeightedTrajectory> enumerate_trajectories(const FiniteMdp& mdp,
                                                       const TimedPolicy& behavior,
                                                       std::size_t cap = kDefaultEnumerationCap);

// Positive-probability suffixes tau_{t0:T-1} with S_{t0} = s0 fixed;
// probabilities are conditional on S_{t0} = s0 and sum to 1.
std::vector<WeightedPath> enumerate_suffixes(const FiniteMdp& mdp, const TimedPolicy& behavior,
                                             int start_time, int start_state,
                                             std::size_t cap = kDefaultEnumerationCap);

}  // namespace doptlab
