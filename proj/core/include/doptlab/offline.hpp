#pragma once

#include <cstdint>
#include <vector>

#include "doptlab/exact_dp.hpp"
#include "doptlab/mdp.hpp"

namespace doptlab {

struct ModelDims {
  int horizon = 0;
  int num_states = 0;
  int num_actions = 0;
};

// Counts and empirical (p_hat, r_hat) tables aggregated from logged tuples.
// The empirical transition kernel is time-indexed, unlike the generating
// MDP's homogeneous kernel. Unvisited (t, s, a) cells are flagged and never
// silently defaulted.
struct EmpiricalModel {
  ModelDims dims;
  std::vector<std::int64_t> visit_counts;       // [t][s][a]
  std::vector<std::int64_t> transition_counts;  // [t][s][a][s']
  std::vector<double> reward_sums;              // [t][s][a]
  std::vector<double> p_hat;                    // [t][s][a][s'], rows of visited cells sum to 1
  std::vector<double> r_hat;                    // [t][s][a], mean logged reward
  std::vector<std::uint8_t> visited;            // [t][s][a]

  std::size_t sa_index(int t, int s, int a) const {
    return (static_cast<std::size_t>(t) * dims.num_states + s) * dims.num_actions + a;
  }
  std::size_t sas_index(int t, int s, int a, int s_next) const {
    return sa_index(t, s, a) * dims.num_states + s_next;
  }
  bool is_visited(int t, int s, int a) const { return visited[sa_index(t, s, a)] != 0; }
  double p_hat_at(int t, int s, int a, int s_next) const {
    return p_hat[sas_index(t, s, a, s_next)];
  }
  double r_hat_at(int t, int s, int a) const { return r_hat[sa_index(t, s, a)]; }
};

// Aggregates a dataset; rejects out-of-range records naming the record number
// (1-based, matching the JSON-lines line number).
EmpiricalModel build_empirical_model(const TupleDataset& dataset, const ModelDims& dims);

struct FittedQv {
  TsaTable q_hat;
  TsTable v_hat;
};

// Tabular fitted Q-evaluation: the exact backward recursion run on
// (p_hat, r_hat). Unvisited cells get q_hat = 0 (flagged in the model).
FittedQv fitted_q_evaluation(const EmpiricalModel& model, const TimedPolicy& target);

// nu_hat = E_hat[v_hat[t+1](S')^2] - (q_hat - r_hat)^2, clamped at 0; the
// expectation is the visit-weighted mean over logged successors.
TsaTable construct_nu_targets(const EmpiricalModel& model, const TsaTable& q_hat,
                              const TsTable& v_hat);

// Backward fit of u for b = b_hat*: u_hat[T-1] = 0 and
//   u_hat[t](s,a) = nu_hat[t](s,a)
//                 + sum_s' p_hat(s'|s,a) (sum_a' pi[t+1](a'|s') sqrt(u_hat[t+1](s',a')))^2.
// Unvisited cells stay 0.
TsaTable fit_u(const EmpiricalModel& model, const TimedPolicy& target, const TsaTable& nu_hat);

// General-form u on the empirical model with the plain PDIS objective
// (b = 0), via the alternating sweep; used to learn the ODI behavior policy.
TsaTable fit_u_pdis(const EmpiricalModel& model, const TimedPolicy& target, const FittedQv& fit,
                    const TsaTable& nu_hat);

// A fitted behavior row is only as good as the variance statistics behind
// it: with one or two samples the plug-in u can land arbitrarily close to
// zero, and a near-zero mass on an action the target still plays turns the
// importance ratio into a tail amplifier. Rows keep the target policy unless
// every target-supported action carries at least this many logged samples.
inline constexpr std::int64_t kBehaviorTrustVisits = 8;

// mu[t](a|s) proportional to pi[t](a|s) sqrt(u_hat[t][s][a]). A row falls
// back to the target policy's row (not uniform) when its weights are all
// zero, when any target-supported action has fewer than kBehaviorTrustVisits
// samples, or when the row is entirely unlogged: pi is always in Lambda^-,
// so the fallback preserves coverage under estimation error.
TimedPolicy derive_behavior_policy(const TimedPolicy& target, const TsaTable& u_hat,
                                   const EmpiricalModel& model);

struct LearnedDiagnostics {
  std::int64_t num_records = 0;
  double unvisited_fraction = 0.0;    // fraction of (t,s,a) cells never logged
  double nu_clamped_fraction = 0.0;   // fraction of visited cells hit by the >= 0 clamp
  double fallback_row_fraction = 0.0;  // fraction of (t,s) rows using the pi fallback
  double q_residual = 0.0;  // max Bellman residual of q_hat on the empirical model
};

struct LearnedArtifacts {
  TsaTable q_hat;
  TsTable v_hat;
  TsaTable nu_hat;
  TsaTable u_hat;
  TimedPolicy mu_hat_star;
  Baseline b_hat_star;
  LearnedDiagnostics diagnostics;
};

// The full offline pipeline: empirical model -> q_hat -> nu_hat -> u_hat ->
// (mu_hat*, b_hat*), with diagnostics.
LearnedArtifacts learn_dopt(const TupleDataset& dataset, const TimedPolicy& target,
                            const ModelDims& dims);

}  // namespace doptlab
