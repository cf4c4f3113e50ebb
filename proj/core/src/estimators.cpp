#include "doptlab/estimators.hpp"

#include <cmath>
#include <sstream>

namespace doptlab {

EstimatorSpec EstimatorSpec::on_policy_mc(const TimedPolicy& target) {
  return EstimatorSpec{EstimatorKind::kOnPolicyMc, target, std::nullopt};
}

EstimatorSpec EstimatorSpec::pdis(TimedPolicy behavior) {
  return EstimatorSpec{EstimatorKind::kPdis, std::move(behavior), std::nullopt};
}

EstimatorSpec EstimatorSpec::baseline_corrected(TimedPolicy behavior, Baseline baseline) {
  return EstimatorSpec{EstimatorKind::kBaselineCorrected, std::move(behavior),
                       std::move(baseline)};
}

void EvalRun::add(double sample) {
  samples.push_back(sample);
  episodes += 1;
  const double delta = sample - running_mean;
  running_mean += delta / static_cast<double>(episodes);
  m2_ += delta * (sample - running_mean);
  running_variance = episodes > 1 ? m2_ / static_cast<double>(episodes - 1) : 0.0;
}

EvalRun EvalRun::merge(const EvalRun& a, const EvalRun& b) {
  if (a.episodes == 0) return b;
  if (b.episodes == 0) return a;
  EvalRun out;
  out.samples = a.samples;
  out.samples.insert(out.samples.end(), b.samples.begin(), b.samples.end());
  out.episodes = a.episodes + b.episodes;
  const double na = static_cast<double>(a.episodes);
  const double nb = static_cast<double>(b.episodes);
  const double delta = b.running_mean - a.running_mean;
  out.running_mean = a.running_mean + delta * nb / (na + nb);
  out.m2_ = a.m2_ + b.m2_ + delta * delta * na * nb / (na + nb);
  out.running_variance =
      out.episodes > 1 ? out.m2_ / static_cast<double>(out.episodes - 1) : 0.0;
  return out;
}

double pdis_return(std::span<const TrajectoryStep> steps, const TimedPolicy& target,
                   const TimedPolicy& behavior) {
  double value = 0.0;
  for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
    const double rho = importance_ratio(target, behavior, it->t, it->state, it->action);
    value = rho * (it->reward + value);
  }
  return value;
}

double pdis_return(const Trajectory& trajectory, const TimedPolicy& target,
                   const TimedPolicy& behavior) {
  return pdis_return(std::span<const TrajectoryStep>(trajectory.steps), target, behavior);
}

double baseline_return(std::span<const TrajectoryStep> steps, const TimedPolicy& target,
                       const TimedPolicy& behavior, const Baseline& baseline) {
  double value = 0.0;
  for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
    const double rho = importance_ratio(target, behavior, it->t, it->state, it->action);
    value = rho * (it->reward + value - baseline.b(it->t, it->state, it->action)) +
            baseline.b_bar(it->t, it->state);
  }
  return value;
}

double baseline_return(const Trajectory& trajectory, const TimedPolicy& target,
                       const TimedPolicy& behavior, const Baseline& baseline) {
  return baseline_return(std::span<const TrajectoryStep>(trajectory.steps), target, behavior,
                         baseline);
}

EvalRun run_evaluation(const FiniteMdp& mdp, const TimedPolicy& target, const EstimatorSpec& spec,
                       std::int64_t episodes, RngSpec rng) {
  if (episodes < 1) throw ValidationError("run_evaluation: episodes must be >= 1");
  if (spec.kind == EstimatorKind::kBaselineCorrected && !spec.baseline.has_value()) {
    throw ValidationError("run_evaluation: baseline-corrected estimator without a baseline");
  }
  EvalRun run;
  run.samples.reserve(static_cast<std::size_t>(episodes));
  for (std::int64_t episode = 0; episode < episodes; ++episode) {
    const Trajectory trajectory =
        sample_trajectory(mdp, spec.behavior, rng.derived(static_cast<std::uint64_t>(episode)));
    double estimate = 0.0;
    try {
      switch (spec.kind) {
        case EstimatorKind::kOnPolicyMc:
          estimate = trajectory.total_reward();
          break;
        case EstimatorKind::kPdis:
          estimate = pdis_return(trajectory, target, spec.behavior);
          break;
        case EstimatorKind::kBaselineCorrected:
          estimate = baseline_return(trajectory, target, spec.behavior, *spec.baseline);
          break;
      }
    } catch (const CoverageViolation& error) {
      std::ostringstream msg;
      msg << "episode " << episode << ": " << error.what();
      throw CoverageViolation(msg.str());
    }
    run.add(estimate);
  }
  return run;
}

}  // namespace doptlab
