#pragma once

#include <cstdint>
#include <vector>

#include "doptlab/exact_dp.hpp"
#include "doptlab/mdp.hpp"

namespace doptlab {

// n x n grid with horizon n, four move actions, slip noise, random rewards.
// All generators here are pure functions of their seeds.
struct GridworldSpec {
  int n = 10;
  double slip = 0.1;
  std::uint64_t reward_seed = 0;
  std::uint64_t policy_seed = 0;
};

// Cells are indexed row * n + col. Actions: 0 up, 1 down, 2 left, 3 right.
// The intended move happens with probability 1 - slip; with probability slip
// the agent moves in a direction chosen uniformly from all four. Moves into a
// boundary keep the agent in place. Rewards are iid uniform[0,1) from
// reward_seed; the initial distribution is a point mass at the top-left cell.
FiniteMdp build_gridworld(const GridworldSpec& spec);

// `count` policies with every row drawn Dirichlet(1) (uniform on the
// simplex), hence full support almost surely.
std::vector<TimedPolicy> random_target_policies(const FiniteMdp& mdp, int count,
                                                std::uint64_t seed);

// Flattens `episodes` complete episodes into (t, s, a, r, s') tuples and
// shuffles them; episode e is generated by logging_policies[e % k].
TupleDataset generate_offline_log(const FiniteMdp& mdp,
                                  const std::vector<TimedPolicy>& logging_policies, int episodes,
                                  std::uint64_t seed);

struct RandomMdpDims {
  int num_states = 2;
  int num_actions = 2;
  int horizon = 2;
};

struct RandomInstance {
  FiniteMdp mdp;
  TimedPolicy target;
};

// Property-test instance: Dirichlet(1) transition and policy rows, rewards
// uniform[0,1).
RandomInstance random_mdp(const RandomMdpDims& dims, std::uint64_t seed);

// Dims drawn for the theorem suite: T in {2,3,4}, |S| in {2..5}, |A| in {2,3}.
RandomMdpDims random_suite_dims(std::uint64_t seed);

// One full-support Dirichlet(1) policy (used for behavior policies and
// offline logging).
TimedPolicy random_policy(int horizon, int num_states, int num_actions, RngSpec rng);

// Baseline with entries uniform in [low, high); b_bar built against target.
Baseline random_baseline(const TimedPolicy& target, double low, double high, RngSpec rng);

}  // namespace doptlab
