#include "doptlab/exact_dp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace doptlab {

namespace {

double square(double x) { return x * x; }

void require_match(const FiniteMdp& mdp, const TimedPolicy& policy, const char* where) {
  if (!policy.matches(mdp)) {
    std::ostringstream msg;
    msg << where << ": policy dimensions do not match the MDP";
    throw ValidationError(msg.str());
  }
}

// mu* row weights pi * sqrt(max(u, 0)); returns false when all weights are
// zero (caller applies the fallback convention).
bool mu_star_row(std::span<const double> pi_row, const TsaTable& u, int t, int s,
                 std::span<double> out) {
  double total = 0.0;
  for (int a = 0; a < static_cast<int>(pi_row.size()); ++a) {
    const double w = pi_row[a] * std::sqrt(std::max(u(t, s, a), 0.0));
    out[a] = w;
    total += w;
  }
  if (total <= 0.0) return false;
  for (double& w : out) w /= total;
  return true;
}

// E_{A ~ mu}[rho^2 inner(a) | s] at one (t, s); only mu-positive actions
// contribute, matching the expectation's support.
template <typename Inner>
double weighted_second_moment(const TimedPolicy& target, const TimedPolicy& behavior, int t,
                              int s, Inner inner) {
  double total = 0.0;
  for (int a = 0; a < target.num_actions; ++a) {
    const double mu = behavior.prob(t, s, a);
    if (mu <= 0.0) continue;
    const double pi = target.prob(t, s, a);
    if (pi == 0.0) continue;
    total += pi * pi / mu * inner(a);
  }
  return total;
}

}  // namespace

Baseline Baseline::zeros(int horizon, int num_states, int num_actions) {
  return Baseline{TsaTable(horizon, num_states, num_actions), TsTable(horizon, num_states)};
}

Baseline Baseline::from_table(TsaTable b, const TimedPolicy& target) {
  TsTable b_bar(b.horizon(), b.num_states());
  for (int t = 0; t < b.horizon(); ++t) {
    for (int s = 0; s < b.num_states(); ++s) {
      double avg = 0.0;
      for (int a = 0; a < b.num_actions(); ++a) {
        avg += target.prob(t, s, a) * b(t, s, a);
      }
      b_bar(t, s) = avg;
    }
  }
  return Baseline{std::move(b), std::move(b_bar)};
}

QvTables compute_q_v(const FiniteMdp& mdp, const TimedPolicy& target) {
  require_match(mdp, target, "compute_q_v");
  const int T = mdp.horizon;
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  QvTables out{TsaTable(T, S, A), TsTable(T, S)};
  for (int t = T - 1; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        double q = mdp.reward_at(s, a);
        if (t < T - 1) {
          const auto row = mdp.transition_row(s, a);
          double future = 0.0;
          for (int s2 = 0; s2 < S; ++s2) future += row[s2] * out.v(t + 1, s2);
          q += future;
        }
        out.q(t, s, a) = q;
      }
      double v = 0.0;
      for (int a = 0; a < A; ++a) v += target.prob(t, s, a) * out.q(t, s, a);
      out.v(t, s) = v;
    }
  }
  return out;
}

double policy_performance(const FiniteMdp& mdp, const TimedPolicy& target) {
  const QvTables qv = compute_q_v(mdp, target);
  double total = 0.0;
  for (int s = 0; s < mdp.num_states; ++s) {
    total += mdp.initial_dist[s] * qv.v(0, s);
  }
  return total;
}

TsaTable compute_nu(const FiniteMdp& mdp, const TimedPolicy& target, const TsTable& v) {
  require_match(mdp, target, "compute_nu");
  const int T = mdp.horizon;
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  TsaTable nu(T, S, A);
  for (int t = 0; t < T - 1; ++t) {
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const auto row = mdp.transition_row(s, a);
        double first = 0.0;
        double second = 0.0;
        for (int s2 = 0; s2 < S; ++s2) {
          const double vs = v(t + 1, s2);
          first += row[s2] * vs * vs;
          second += row[s2] * vs;
        }
        nu(t, s, a) = first - second * second;
      }
    }
  }
  return nu;  // nu[T-1] stays 0 by definition
}

UComputation compute_u(const FiniteMdp& mdp, const TimedPolicy& target,
                       const Baseline& baseline) {
  require_match(mdp, target, "compute_u");
  const int T = mdp.horizon;
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  const QvTables qv = compute_q_v(mdp, target);
  const TsaTable nu = compute_nu(mdp, target, qv.v);

  UComputation out{TsaTable(T, S, A), TsTable(T, S)};
  std::vector<double> mu_row(static_cast<std::size_t>(A));
  // Backward alternating sweep: u[t], then mu*[t], then Var[t]. The bracket
  // inside the variance recursion at step t is exactly u[t] by construction.
  for (int t = T - 1; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        double value = square(qv.q(t, s, a) - baseline.b(t, s, a));
        if (t < T - 1) {
          value += nu(t, s, a);
          const auto row = mdp.transition_row(s, a);
          double future = 0.0;
          for (int s2 = 0; s2 < S; ++s2) future += row[s2] * out.conditional_variance(t + 1, s2);
          value += future;
        }
        out.u(t, s, a) = value;
      }
      const double centering = square(qv.v(t, s) - baseline.b_bar(t, s));
      if (mu_star_row(target.row(t, s), out.u, t, s, mu_row)) {
        double second_moment = 0.0;
        for (int a = 0; a < A; ++a) {
          if (mu_row[a] <= 0.0) continue;
          const double pi = target.prob(t, s, a);
          second_moment += pi * pi / mu_row[a] * out.u(t, s, a);
        }
        out.conditional_variance(t, s) = second_moment - centering;
      } else {
        // All pi sqrt(u) weights vanish: every pi-supported action has u = 0,
        // so the importance-weighted second moment is zero under any row.
        out.conditional_variance(t, s) = -centering;
      }
    }
  }
  return out;
}

TsaTable compute_u_bstar_recursive(const FiniteMdp& mdp, const TimedPolicy& target) {
  require_match(mdp, target, "compute_u_bstar_recursive");
  const int T = mdp.horizon;
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  const QvTables qv = compute_q_v(mdp, target);
  const TsaTable nu = compute_nu(mdp, target, qv.v);

  TsaTable u(T, S, A);  // u[T-1] = 0
  // Cache per-s' of (sum_a' pi sqrt(u[t+1]))^2 while sweeping backwards.
  std::vector<double> squared_root_sum(static_cast<std::size_t>(S));
  for (int t = T - 2; t >= 0; --t) {
    for (int s2 = 0; s2 < S; ++s2) {
      double root_sum = 0.0;
      for (int a2 = 0; a2 < A; ++a2) {
        root_sum += target.prob(t + 1, s2, a2) * std::sqrt(std::max(u(t + 1, s2, a2), 0.0));
      }
      squared_root_sum[s2] = root_sum * root_sum;
    }
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const auto row = mdp.transition_row(s, a);
        double future = 0.0;
        for (int s2 = 0; s2 < S; ++s2) future += row[s2] * squared_root_sum[s2];
        u(t, s, a) = nu(t, s, a) + future;
      }
    }
  }
  return u;
}

TimedPolicy derive_mu_star(const TimedPolicy& target, const TsaTable& u) {
  TimedPolicy mu = target;  // shape only; every row is overwritten
  std::vector<double> weights(static_cast<std::size_t>(target.num_actions));
  for (int t = 0; t < target.horizon; ++t) {
    for (int s = 0; s < target.num_states; ++s) {
      auto out = mu.row_mut(t, s);
      if (mu_star_row(target.row(t, s), u, t, s, weights)) {
        std::copy(weights.begin(), weights.end(), out.begin());
      } else {
        std::fill(out.begin(), out.end(), 1.0 / target.num_actions);
      }
    }
  }
  return mu;
}

Baseline derive_b_star(const QvTables& qv) {
  return Baseline{qv.q, qv.v};
}

CoverageReport coverage_check(const TimedPolicy& behavior, const TimedPolicy& target,
                              const TsaTable& u) {
  CoverageReport report;
  report.in_lambda_minus = true;
  report.in_lambda = true;
  std::vector<std::array<int, 3>> lambda_minus_violations;
  std::vector<std::array<int, 3>> lambda_violations;
  for (int t = 0; t < target.horizon; ++t) {
    for (int s = 0; s < target.num_states; ++s) {
      for (int a = 0; a < target.num_actions; ++a) {
        if (behavior.prob(t, s, a) != 0.0) continue;
        const double pi = target.prob(t, s, a);
        if (pi == 0.0) continue;
        report.in_lambda_minus = false;
        lambda_minus_violations.push_back({t, s, a});
        if (pi * u(t, s, a) != 0.0) {
          report.in_lambda = false;
          lambda_violations.push_back({t, s, a});
        }
      }
    }
  }
  report.violations =
      report.in_lambda ? std::move(lambda_minus_violations) : std::move(lambda_violations);
  return report;
}

VarianceTables exact_estimator_variance(const FiniteMdp& mdp, const TimedPolicy& target,
                                        const TimedPolicy& behavior, const Baseline& baseline) {
  require_match(mdp, target, "exact_estimator_variance");
  require_match(mdp, behavior, "exact_estimator_variance");

  // Lambda^- membership needs no u and implies Lambda membership; compute u
  // for this baseline only when the cheap check fails.
  {
    bool lambda_minus = true;
    for (std::size_t i = 0; i < behavior.probs.size() && lambda_minus; ++i) {
      if (behavior.probs[i] == 0.0 && target.probs[i] != 0.0) lambda_minus = false;
    }
    if (!lambda_minus) {
      const UComputation uc = compute_u(mdp, target, baseline);
      const CoverageReport coverage = coverage_check(behavior, target, uc.u);
      if (!coverage.in_lambda) {
        std::ostringstream msg;
        msg << "exact_estimator_variance: behavior is outside Lambda for this baseline ("
            << coverage.violations.size() << " violating (t,s,a) triples; first at t="
            << coverage.violations.front()[0] << ", s=" << coverage.violations.front()[1]
            << ", a=" << coverage.violations.front()[2] << ")";
        throw CoverageViolation(msg.str());
      }
    }
  }

  const int T = mdp.horizon;
  const int S = mdp.num_states;
  const QvTables qv = compute_q_v(mdp, target);
  const TsaTable nu = compute_nu(mdp, target, qv.v);

  VarianceTables out{TsTable(T, S), 0.0};
  for (int t = T - 1; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      const double second_moment = weighted_second_moment(
          target, behavior, t, s, [&](int a) {
            double inner = square(qv.q(t, s, a) - baseline.b(t, s, a));
            if (t < T - 1) {
              inner += nu(t, s, a);
              const auto row = mdp.transition_row(s, a);
              double future = 0.0;
              for (int s2 = 0; s2 < S; ++s2) future += row[s2] * out.per_state(t + 1, s2);
              inner += future;
            }
            return inner;
          });
      out.per_state(t, s) = second_moment - square(qv.v(t, s) - baseline.b_bar(t, s));
    }
  }

  double mean_variance = 0.0;
  double v0_mean = 0.0;
  double v0_second = 0.0;
  for (int s = 0; s < S; ++s) {
    const double p0 = mdp.initial_dist[s];
    mean_variance += p0 * out.per_state(0, s);
    v0_mean += p0 * qv.v(0, s);
    v0_second += p0 * square(qv.v(0, s));
  }
  out.aggregate = mean_variance + (v0_second - square(v0_mean));
  return out;
}

MomentTables exact_estimator_moments(const FiniteMdp& mdp, const TimedPolicy& target,
                                     const TimedPolicy& behavior, const Baseline& baseline) {
  require_match(mdp, target, "exact_estimator_moments");
  require_match(mdp, behavior, "exact_estimator_moments");
  const int T = mdp.horizon;
  const int S = mdp.num_states;

  MomentTables out{TsTable(T, S), TsTable(T, S), 0.0, 0.0};
  for (int t = T - 1; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      const double b_bar = baseline.b_bar(t, s);
      double mean = b_bar;
      double second = 0.0;
      for (int a = 0; a < mdp.num_actions; ++a) {
        const double mu = behavior.prob(t, s, a);
        if (mu <= 0.0) continue;
        const double rho = target.prob(t, s, a) / mu;
        const double head = mdp.reward_at(s, a) - baseline.b(t, s, a);
        if (t == T - 1) {
          mean += mu * rho * head;
          second += mu * square(rho * head + b_bar);
        } else {
          const auto row = mdp.transition_row(s, a);
          double mean_contribution = 0.0;
          double second_contribution = 0.0;
          for (int s2 = 0; s2 < S; ++s2) {
            if (row[s2] <= 0.0) continue;
            const double tail_mean = out.mean(t + 1, s2);
            const double centered = rho * (head + tail_mean) + b_bar;
            mean_contribution += row[s2] * (head + tail_mean);
            second_contribution +=
                row[s2] * (square(centered) + rho * rho * out.variance(t + 1, s2));
          }
          mean += mu * rho * mean_contribution;
          second += mu * second_contribution;
        }
      }
      out.mean(t, s) = mean;
      out.variance(t, s) = second - mean * mean;
    }
  }

  double mean0 = 0.0;
  double mean0_second = 0.0;
  double variance0 = 0.0;
  for (int s = 0; s < S; ++s) {
    const double p0 = mdp.initial_dist[s];
    mean0 += p0 * out.mean(0, s);
    mean0_second += p0 * square(out.mean(0, s));
    variance0 += p0 * out.variance(0, s);
  }
  out.aggregate_mean = mean0;
  out.aggregate_variance = variance0 + (mean0_second - square(mean0));
  return out;
}

namespace {

void enumerate_recursive(const FiniteMdp& mdp, const TimedPolicy& behavior, int t, int state,
                         double probability, std::vector<TrajectoryStep>& prefix,
                         std::vector<WeightedPath>& out, std::size_t cap) {
  if (t == mdp.horizon) {
    if (out.size() >= cap) {
      std::ostringstream msg;
      msg << "trajectory enumeration exceeds the cap of " << cap << " entries";
      throw InfeasibleError(msg.str());
    }
    out.push_back(WeightedPath{prefix, probability});
    return;
  }
  for (int a = 0; a < mdp.num_actions; ++a) {
    const double pa = behavior.prob(t, state, a);
    if (pa <= 0.0) continue;
    const double reward = mdp.reward_at(state, a);
    const auto row = mdp.transition_row(state, a);
    for (int s2 = 0; s2 < mdp.num_states; ++s2) {
      if (row[s2] <= 0.0) continue;
      prefix.push_back(TrajectoryStep{t, state, a, reward, s2});
      enumerate_recursive(mdp, behavior, t + 1, s2, probability * pa * row[s2], prefix, out, cap);
      prefix.pop_back();
    }
  }
}

}  // namespace

std::vector<WeightedPath> enumerate_suffixes(const FiniteMdp& mdp, const TimedPolicy& behavior,
                                             int start_time, int start_state, std::size_t cap) {
  require_match(mdp, behavior, "enumerate_suffixes");
  std::vector<WeightedPath> out;
  std::vector<TrajectoryStep> prefix;
  enumerate_recursive(mdp, behavior, start_time, start_state, 1.0, prefix, out, cap);
  return out;
}

std::vector<WeightedTrajectory> enumerate_trajectories(const FiniteMdp& mdp,
                                                       const TimedPolicy& behavior,
                                                       std::size_t cap) {
  require_match(mdp, behavior, "enumerate_trajectories");
  std::vector<WeightedPath> paths;
  std::vector<TrajectoryStep> prefix;
  for (int s0 = 0; s0 < mdp.num_states; ++s0) {
    const double p0 = mdp.initial_dist[s0];
    if (p0 <= 0.0) continue;
    enumerate_recursive(mdp, behavior, 0, s0, p0, prefix, paths, cap);
  }
  std::vector<WeightedTrajectory> out;
  out.reserve(paths.size());
  for (WeightedPath& path : paths) {
    out.push_back(WeightedTrajectory{Trajectory{std::move(path.steps)}, path.probability});
  }
  return out;
}

}  // namespace doptlab
