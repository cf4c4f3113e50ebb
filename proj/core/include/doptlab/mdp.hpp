#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "doptlab/errors.hpp"
#include "doptlab/rng.hpp"
#include "doptlab/tables.hpp"

namespace doptlab {

inline constexpr double kSimplexTolerance = 1e-12;

// Finite-horizon tabular MDP. The transition kernel and rewards are
// time-homogeneous; rewards are deterministic functions of (s, a).
struct FiniteMdp {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;
  std::vector<double> transition;    // [s][a][s'] row-major
  std::vector<double> reward;        // [s][a]
  std::vector<double> initial_dist;  // [s]

  double transition_prob(int s, int a, int s_next) const {
    return transition[(static_cast<std::size_t>(s) * num_actions + a) * num_states + s_next];
  }
  std::span<const double> transition_row(int s, int a) const {
    return {transition.data() + (static_cast<std::size_t>(s) * num_actions + a) * num_states,
            static_cast<std::size_t>(num_states)};
  }
  double reward_at(int s, int a) const {
    return reward[static_cast<std::size_t>(s) * num_actions + a];
  }
  double& reward_ref(int s, int a) {
    return reward[static_cast<std::size_t>(s) * num_actions + a];
  }
  double& transition_ref(int s, int a, int s_next) {
    return transition[(static_cast<std::size_t>(s) * num_actions + a) * num_states + s_next];
  }

  static FiniteMdp zeros(int num_states, int num_actions, int horizon);

  // Throws ValidationError unless every transition row and the initial
  // distribution are simplices within kSimplexTolerance and all rewards are
  // finite.
  void validate() const;

  friend bool operator==(const FiniteMdp&, const FiniteMdp&) = default;
};

// Time-indexed stochastic policy pi[t](a|s); also used for behavior policies.
struct TimedPolicy {
  int horizon = 0;
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> probs;  // [t][s][a] row-major

  double prob(int t, int s, int a) const {
    return probs[(static_cast<std::size_t>(t) * num_states + s) * num_actions + a];
  }
  double& prob_ref(int t, int s, int a) {
    return probs[(static_cast<std::size_t>(t) * num_states + s) * num_actions + a];
  }
  std::span<const double> row(int t, int s) const {
    return {probs.data() + (static_cast<std::size_t>(t) * num_states + s) * num_actions,
            static_cast<std::size_t>(num_actions)};
  }
  std::span<double> row_mut(int t, int s) {
    return {probs.data() + (static_cast<std::size_t>(t) * num_states + s) * num_actions,
            static_cast<std::size_t>(num_actions)};
  }

  static TimedPolicy uniform(int horizon, int num_states, int num_actions);

  bool matches(const FiniteMdp& mdp) const {
    return horizon == mdp.horizon && num_states == mdp.num_states &&
           num_actions == mdp.num_actions;
  }

  // Throws ValidationError if any row is not a simplex within tolerance.
  void validate() const;

  friend bool operator==(const TimedPolicy&, const TimedPolicy&) = default;
};

struct TrajectoryStep {
  int t = 0;
  int state = 0;
  int action = 0;
  double reward = 0.0;
  int next_state = 0;

  friend bool operator==(const TrajectoryStep&, const TrajectoryStep&) = default;
};

// One full episode: exactly `horizon` chained steps with t = 0..T-1.
struct Trajectory {
  std::vector<TrajectoryStep> steps;

  double total_reward() const;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

// One behavior-policy-agnostic logged transition.
struct LoggedTuple {
  int t = 0;
  int s = 0;
  int a = 0;
  double r = 0.0;
  int s_next = 0;

  friend bool operator==(const LoggedTuple&, const LoggedTuple&) = default;
};

struct TupleDataset {
  std::vector<LoggedTuple> records;

  friend bool operator==(const TupleDataset&, const TupleDataset&) = default;
};

// Report-only simplex audit of a policy against an MDP's dimensions.
struct PolicyRowIssue {
  int t = 0;
  int s = 0;
  double sum_residual = 0.0;  // |row sum - 1|
  bool has_negative = false;
  double min_entry = 0.0;
};

struct PolicyValidationReport {
  bool dimension_mismatch = false;
  std::vector<PolicyRowIssue> issues;

  bool ok() const { return !dimension_mismatch && issues.empty(); }
};

PolicyValidationReport validate_policy(const TimedPolicy& policy, const FiniteMdp& mdp);

// Samples one episode: S0 ~ p0, A_t ~ behavior[t](.|S_t),
// R_{t+1} = r(S_t, A_t), S_{t+1} ~ p(.|S_t, A_t). Pure function of (mdp,
// behavior, rng); throws ValidationError on dimension mismatch.
Trajectory sample_trajectory(const FiniteMdp& mdp, const TimedPolicy& behavior, RngSpec rng);

// pi_t(a|s) / mu_t(a|s) with the 0/0 := 0 convention. Throws
// CoverageViolation when pi > 0 and mu = 0 (estimator undefined there).
double importance_ratio(const TimedPolicy& target, const TimedPolicy& behavior, int t, int s,
                        int a);

}  // namespace doptlab
