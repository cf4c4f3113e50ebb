#include "doptlab/environments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace doptlab {

namespace {

// Row-stream labels so every generator draws from its own substream.
enum : std::uint64_t {
  kRewardStream = 1,
  kPolicyStream = 2,
  kTransitionStream = 3,
  kLogStream = 4,
  kShuffleStream = 5,
  kDimsStream = 6,
};

void fill_dirichlet_row(CounterRng& gen, std::span<double> row) {
  double total = 0.0;
  for (double& x : row) {
    x = gen.next_exponential();
    total += x;
  }
  for (double& x : row) x /= total;
}

}  // namespace

FiniteMdp build_gridworld(const GridworldSpec& spec) {
  if (spec.n < 2) throw ValidationError("build_gridworld: n must be >= 2");
  if (spec.slip < 0.0 || spec.slip > 1.0) {
    throw ValidationError("build_gridworld: slip must be in [0, 1]");
  }
  const int n = spec.n;
  const int num_states = n * n;
  const int num_actions = 4;
  FiniteMdp mdp = FiniteMdp::zeros(num_states, num_actions, n);

  const int row_delta[4] = {-1, 1, 0, 0};  // up, down, left, right
  const int col_delta[4] = {0, 0, -1, 1};
  const double crumb = spec.slip / 4.0;

  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const int s = r * n + c;
      for (int intended = 0; intended < num_actions; ++intended) {
        const auto destination = [&](int direction) {
          const int r2 = r + row_delta[direction];
          const int c2 = c + col_delta[direction];
          if (r2 < 0 || r2 >= n || c2 < 0 || c2 >= n) return s;  // blocked: stay
          return r2 * n + c2;
        };
        for (int direction = 0; direction < 4; ++direction) {
          mdp.transition_ref(s, intended, destination(direction)) += crumb;
        }
        mdp.transition_ref(s, intended, destination(intended)) += 1.0 - spec.slip;
        // Pin the row sum to exactly 1 by absorbing rounding into the
        // largest entry.
        auto row_span = std::span<double>(
            mdp.transition.data() +
                (static_cast<std::size_t>(s) * num_actions + intended) * num_states,
            static_cast<std::size_t>(num_states));
        for (int pass = 0; pass < 4; ++pass) {
          const double sum = std::accumulate(row_span.begin(), row_span.end(), 0.0);
          if (sum == 1.0) break;
          auto largest = std::max_element(row_span.begin(), row_span.end());
          *largest += 1.0 - sum;
        }
      }
    }
  }

  CounterRng reward_gen(RngSpec{spec.reward_seed, kRewardStream});
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) {
      mdp.reward_ref(s, a) = reward_gen.next_double();
    }
  }

  mdp.initial_dist[0] = 1.0;  // top-left corner
  mdp.validate();
  return mdp;
}

TimedPolicy random_policy(int horizon, int num_states, int num_actions, RngSpec rng) {
  CounterRng gen(rng);
  TimedPolicy policy = TimedPolicy::uniform(horizon, num_states, num_actions);
  for (int t = 0; t < horizon; ++t) {
    for (int s = 0; s < num_states; ++s) {
      fill_dirichlet_row(gen, policy.row_mut(t, s));
    }
  }
  return policy;
}

std::vector<TimedPolicy> random_target_policies(const FiniteMdp& mdp, int count,
                                                std::uint64_t seed) {
  if (count < 1) throw ValidationError("random_target_policies: count must be >= 1");
  std::vector<TimedPolicy> policies;
  policies.reserve(static_cast<std::size_t>(count));
  const RngSpec base{seed, kPolicyStream};
  for (int i = 0; i < count; ++i) {
    policies.push_back(random_policy(mdp.horizon, mdp.num_states, mdp.num_actions,
                                     base.derived(static_cast<std::uint64_t>(i))));
  }
  return policies;
}

TupleDataset generate_offline_log(const FiniteMdp& mdp,
                                  const std::vector<TimedPolicy>& logging_policies, int episodes,
                                  std::uint64_t seed) {
  if (logging_policies.empty()) {
    throw ValidationError("generate_offline_log: need at least one logging policy");
  }
  for (const TimedPolicy& policy : logging_policies) {
    if (!policy.matches(mdp)) {
      throw ValidationError("generate_offline_log: logging policy does not match the MDP");
    }
  }
  TupleDataset dataset;
  dataset.records.reserve(static_cast<std::size_t>(episodes) * mdp.horizon);
  const RngSpec base{seed, kLogStream};
  for (int episode = 0; episode < episodes; ++episode) {
    const TimedPolicy& policy = logging_policies[episode % logging_policies.size()];
    const Trajectory trajectory =
        sample_trajectory(mdp, policy, base.derived(static_cast<std::uint64_t>(episode)));
    for (const TrajectoryStep& step : trajectory.steps) {
      dataset.records.push_back(
          LoggedTuple{step.t, step.state, step.action, step.reward, step.next_state});
    }
  }
  // Order carries no information in the behavior-policy-agnostic setting;
  // shuffle so nothing downstream can rely on it.
  CounterRng shuffle_gen(RngSpec{seed, kShuffleStream});
  for (std::size_t i = dataset.records.size(); i > 1; --i) {
    const std::size_t j = shuffle_gen.next_u64() % i;
    std::swap(dataset.records[i - 1], dataset.records[j]);
  }
  return dataset;
}

RandomInstance random_mdp(const RandomMdpDims& dims, std::uint64_t seed) {
  if (dims.num_states < 1 || dims.num_actions < 1 || dims.horizon < 1) {
    throw ValidationError("random_mdp: dimensions must be positive");
  }
  FiniteMdp mdp = FiniteMdp::zeros(dims.num_states, dims.num_actions, dims.horizon);
  CounterRng gen(RngSpec{seed, kTransitionStream});
  for (int s = 0; s < dims.num_states; ++s) {
    for (int a = 0; a < dims.num_actions; ++a) {
      fill_dirichlet_row(
          gen, std::span<double>(
                   mdp.transition.data() +
                       (static_cast<std::size_t>(s) * dims.num_actions + a) * dims.num_states,
                   static_cast<std::size_t>(dims.num_states)));
      mdp.reward_ref(s, a) = gen.next_double();
    }
  }
  fill_dirichlet_row(gen, mdp.initial_dist);
  mdp.validate();
  TimedPolicy target = random_policy(dims.horizon, dims.num_states, dims.num_actions,
                                     RngSpec{seed, kPolicyStream});
  return RandomInstance{std::move(mdp), std::move(target)};
}

RandomMdpDims random_suite_dims(std::uint64_t seed) {
  CounterRng gen(RngSpec{seed, kDimsStream});
  RandomMdpDims dims;
  dims.horizon = 2 + static_cast<int>(gen.next_u64() % 3);      // {2, 3, 4}
  dims.num_states = 2 + static_cast<int>(gen.next_u64() % 4);   // {2..5}
  dims.num_actions = 2 + static_cast<int>(gen.next_u64() % 2);  // {2, 3}
  return dims;
}

Baseline random_baseline(const TimedPolicy& target, double low, double high, RngSpec rng) {
  CounterRng gen(rng);
  TsaTable b(target.horizon, target.num_states, target.num_actions);
  for (double& x : b.data()) x = low + (high - low) * gen.next_double();
  return Baseline::from_table(std::move(b), target);
}

}  // namespace doptlab
