#include <benchmark/benchmark.h>

#include "doptlab/environments.hpp"
#include "doptlab/estimators.hpp"
#include "doptlab/exact_dp.hpp"
#include "doptlab/offline.hpp"

using namespace doptlab;

namespace {

const FiniteMdp& gridworld10() {
  static const FiniteMdp mdp = build_gridworld(GridworldSpec{10, 0.1, 1, 2});
  return mdp;
}

const TimedPolicy& target10() {
  static const TimedPolicy policy = random_target_policies(gridworld10(), 1, 3).front();
  return policy;
}

void BM_SampleTrajectory(benchmark::State& state) {
  const FiniteMdp& mdp = gridworld10();
  const TimedPolicy& policy = target10();
  std::uint64_t episode = 0;
  const RngSpec base{9, 0};
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample_trajectory(mdp, policy, base.derived(episode++)));
  }
  state.SetItemsProcessed(state.iterations() * mdp.horizon);
}
BENCHMARK(BM_SampleTrajectory);

void BM_ComputeQv(benchmark::State& state) {
  const FiniteMdp& mdp = gridworld10();
  const TimedPolicy& policy = target10();
  for (auto _ : state) {
    benchmark::DoNotOptimize(compute_q_v(mdp, policy));
  }
}
BENCHMARK(BM_ComputeQv);

void BM_ComputeUBstarRecursive(benchmark::State& state) {
  const FiniteMdp& mdp = gridworld10();
  const TimedPolicy& policy = target10();
  for (auto _ : state) {
    benchmark::DoNotOptimize(compute_u_bstar_recursive(mdp, policy));
  }
}
BENCHMARK(BM_ComputeUBstarRecursive);

void BM_ExactEstimatorVariance(benchmark::State& state) {
  const FiniteMdp& mdp = gridworld10();
  const TimedPolicy& policy = target10();
  const QvTables qv = compute_q_v(mdp, policy);
  const Baseline b_star = derive_b_star(qv);
  const TimedPolicy mu_star = derive_mu_star(policy, compute_u_bstar_recursive(mdp, policy));
  for (auto _ : state) {
    benchmark::DoNotOptimize(exact_estimator_variance(mdp, policy, mu_star, b_star));
  }
}
BENCHMARK(BM_ExactEstimatorVariance);

void BM_PdisReturn(benchmark::State& state) {
  const FiniteMdp& mdp = gridworld10();
  const TimedPolicy& policy = target10();
  const TimedPolicy behavior =
      random_policy(mdp.horizon, mdp.num_states, mdp.num_actions, RngSpec{11, 0});
  const Trajectory trajectory = sample_trajectory(mdp, behavior, RngSpec{12, 0});
  for (auto _ : state) {
    benchmark::DoNotOptimize(pdis_return(trajectory, policy, behavior));
  }
}
BENCHMARK(BM_PdisReturn);

void BM_LearnDopt(benchmark::State& state) {
  const FiniteMdp& mdp = gridworld10();
  const TimedPolicy& policy = target10();
  const TimedPolicy logger = TimedPolicy::uniform(mdp.horizon, mdp.num_states, mdp.num_actions);
  const TupleDataset log = generate_offline_log(mdp, {logger}, 1000, 13);
  const ModelDims dims{mdp.horizon, mdp.num_states, mdp.num_actions};
  for (auto _ : state) {
    benchmark::DoNotOptimize(learn_dopt(log, policy, dims));
  }
}
BENCHMARK(BM_LearnDopt);

}  // namespace

BENCHMARK_MAIN();
