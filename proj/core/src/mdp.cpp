#include "doptlab/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "doptlab/rng.hpp"

namespace doptlab {

namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kSeedSalt = 0xD1B54A32D192ED03ULL;
constexpr std::uint64_t kStreamSalt = 0x8CB92BA72F3D8DD7ULL;

// SplitMix64 finalizer (Stafford mix13).
std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

bool is_simplex_row(std::span<const double> row, double* residual, double* min_entry) {
  double sum = 0.0;
  double lowest = row.empty() ? 0.0 : row[0];
  for (double p : row) {
    sum += p;
    lowest = std::min(lowest, p);
  }
  *residual = std::abs(sum - 1.0);
  *min_entry = lowest;
  return *residual <= kSimplexTolerance && lowest >= 0.0;
}

}  // namespace

RngSpec RngSpec::derived(std::uint64_t index) const {
  return RngSpec{seed, mix64(stream_id ^ mix64(index + kStreamSalt))};
}

CounterRng::CounterRng(RngSpec spec)
    : key_(mix64(spec.seed + kSeedSalt) ^ mix64(spec.stream_id + kStreamSalt)) {}

std::uint64_t CounterRng::next_u64() {
  counter_ += 1;
  return mix64(key_ + counter_ * kGamma);
}

double CounterRng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double CounterRng::next_exponential() {
  // 1 - U is in (0, 1], so the log is finite.
  return -std::log1p(-next_double());
}

int CounterRng::next_index(std::span<const double> probs) {
  const double u = next_double();
  double cumulative = 0.0;
  int last_positive = -1;
  for (int i = 0; i < static_cast<int>(probs.size()); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = i;
    cumulative += probs[i];
    if (u < cumulative) return i;
  }
  if (last_positive < 0) {
    throw ValidationError("next_index: probability row has no positive entry");
  }
  return last_positive;  // absorbs rounding in the final partial sum
}

FiniteMdp FiniteMdp::zeros(int num_states, int num_actions, int horizon) {
  FiniteMdp mdp;
  mdp.num_states = num_states;
  mdp.num_actions = num_actions;
  mdp.horizon = horizon;
  mdp.transition.assign(
      static_cast<std::size_t>(num_states) * num_actions * num_states, 0.0);
  mdp.reward.assign(static_cast<std::size_t>(num_states) * num_actions, 0.0);
  mdp.initial_dist.assign(static_cast<std::size_t>(num_states), 0.0);
  return mdp;
}

void FiniteMdp::validate() const {
  if (num_states <= 0 || num_actions <= 0 || horizon <= 0) {
    throw ValidationError("FiniteMdp: dimensions must be positive");
  }
  const auto expect = [](std::size_t got, std::size_t want, const char* name) {
    if (got != want) {
      std::ostringstream msg;
      msg << "FiniteMdp: " << name << " has " << got << " entries, expected " << want;
      throw ValidationError(msg.str());
    }
  };
  expect(transition.size(),
         static_cast<std::size_t>(num_states) * num_actions * num_states, "transition");
  expect(reward.size(), static_cast<std::size_t>(num_states) * num_actions, "reward");
  expect(initial_dist.size(), static_cast<std::size_t>(num_states), "initial_dist");

  double residual = 0.0;
  double min_entry = 0.0;
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) {
      if (!is_simplex_row(transition_row(s, a), &residual, &min_entry)) {
        std::ostringstream msg;
        msg << "FiniteMdp: transition row (s=" << s << ", a=" << a
            << ") violates the simplex invariant (residual " << residual << ", min entry "
            << min_entry << ")";
        throw ValidationError(msg.str());
      }
      if (!std::isfinite(reward_at(s, a))) {
        throw ValidationError("FiniteMdp: non-finite reward");
      }
    }
  }
  if (!is_simplex_row(initial_dist, &residual, &min_entry)) {
    std::ostringstream msg;
    msg << "FiniteMdp: initial distribution violates the simplex invariant (residual " << residual
        << ", min entry " << min_entry << ")";
    throw ValidationError(msg.str());
  }
}

TimedPolicy TimedPolicy::uniform(int horizon, int num_states, int num_actions) {
  TimedPolicy policy;
  policy.horizon = horizon;
  policy.num_states = num_states;
  policy.num_actions = num_actions;
  policy.probs.assign(static_cast<std::size_t>(horizon) * num_states * num_actions,
                      1.0 / num_actions);
  return policy;
}

void TimedPolicy::validate() const {
  if (horizon <= 0 || num_states <= 0 || num_actions <= 0) {
    throw ValidationError("TimedPolicy: dimensions must be positive");
  }
  if (probs.size() != static_cast<std::size_t>(horizon) * num_states * num_actions) {
    throw ValidationError("TimedPolicy: probability table size does not match dimensions");
  }
  double residual = 0.0;
  double min_entry = 0.0;
  for (int t = 0; t < horizon; ++t) {
    for (int s = 0; s < num_states; ++s) {
      if (!is_simplex_row(row(t, s), &residual, &min_entry)) {
        std::ostringstream msg;
        msg << "TimedPolicy: row (t=" << t << ", s=" << s
            << ") violates the simplex invariant (residual " << residual << ", min entry "
            << min_entry << ")";
        throw ValidationError(msg.str());
      }
    }
  }
}

double Trajectory::total_reward() const {
  // Accumulated back to front, the same association as the estimator
  // recursions, so the on-policy reduction is bit exact.
  double sum = 0.0;
  for (auto it = steps.rbegin(); it != steps.rend(); ++it) sum += it->reward;
  return sum;
}

PolicyValidationReport validate_policy(const TimedPolicy& policy, const FiniteMdp& mdp) {
  PolicyValidationReport report;
  if (!policy.matches(mdp)) {
    report.dimension_mismatch = true;
    return report;
  }
  for (int t = 0; t < policy.horizon; ++t) {
    for (int s = 0; s < policy.num_states; ++s) {
      double residual = 0.0;
      double min_entry = 0.0;
      if (!is_simplex_row(policy.row(t, s), &residual, &min_entry)) {
        report.issues.push_back(
            PolicyRowIssue{t, s, residual, min_entry < 0.0, min_entry});
      }
    }
  }
  return report;
}

Trajectory sample_trajectory(const FiniteMdp& mdp, const TimedPolicy& behavior, RngSpec rng) {
  if (!behavior.matches(mdp)) {
    throw ValidationError("sample_trajectory: policy dimensions do not match the MDP");
  }
  CounterRng gen(rng);
  Trajectory trajectory;
  trajectory.steps.reserve(static_cast<std::size_t>(mdp.horizon));
  int state = gen.next_index(mdp.initial_dist);
  for (int t = 0; t < mdp.horizon; ++t) {
    const int action = gen.next_index(behavior.row(t, state));
    const double reward = mdp.reward_at(state, action);
    const int next_state = gen.next_index(mdp.transition_row(state, action));
    trajectory.steps.push_back(TrajectoryStep{t, state, action, reward, next_state});
    state = next_state;
  }
  return trajectory;
}

double importance_ratio(const TimedPolicy& target, const TimedPolicy& behavior, int t, int s,
                        int a) {
  const double pi = target.prob(t, s, a);
  const double mu = behavior.prob(t, s, a);
  if (mu > 0.0) return pi / mu;
  if (pi == 0.0) return 0.0;  // 0/0 := 0, never sampled under mu
  std::ostringstream msg;
  msg << "coverage violation at (t=" << t << ", s=" << s << ", a=" << a
      << "): target probability " << pi << " with zero behavior probability";
  throw CoverageViolation(msg.str());
}

double max_abs_diff(const TsaTable& a, const TsaTable& b) {
  if (!a.same_shape(b)) throw ValidationError("max_abs_diff: table shapes differ");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

double max_abs_diff(const TsTable& a, const TsTable& b) {
  if (a.horizon() != b.horizon() || a.num_states() != b.num_states()) {
    throw ValidationError("max_abs_diff: table shapes differ");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

}  // namespace doptlab
