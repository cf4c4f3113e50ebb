#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "doctest.h"

#include "doptlab/environments.hpp"
#include "doptlab/estimators.hpp"
#include "doptlab/exact_dp.hpp"

using namespace doptlab;

namespace {

FiniteMdp constant_chain(int horizon) {
  FiniteMdp mdp = FiniteMdp::zeros(1, 1, horizon);
  mdp.transition_ref(0, 0, 0) = 1.0;
  mdp.reward_ref(0, 0) = 1.0;
  mdp.initial_dist[0] = 1.0;
  return mdp;
}

// Two states cycling deterministically with distinct rewards.
FiniteMdp deterministic_cycle(int horizon) {
  FiniteMdp mdp = FiniteMdp::zeros(2, 2, horizon);
  for (int s = 0; s < 2; ++s) {
    mdp.transition_ref(s, 0, 1 - s) = 1.0;  // action 0: switch
    mdp.transition_ref(s, 1, s) = 1.0;      // action 1: stay
    mdp.reward_ref(s, 0) = 0.25 + s;
    mdp.reward_ref(s, 1) = 0.75 + 2.0 * s;
  }
  mdp.initial_dist[0] = 1.0;
  return mdp;
}

TimedPolicy point_mass_policy(int horizon, int num_states, int num_actions, int action) {
  TimedPolicy policy = TimedPolicy::uniform(horizon, num_states, num_actions);
  for (int t = 0; t < horizon; ++t) {
    for (int s = 0; s < num_states; ++s) {
      for (int a = 0; a < num_actions; ++a) {
        policy.prob_ref(t, s, a) = a == action ? 1.0 : 0.0;
      }
    }
  }
  return policy;
}

double enumeration_expectation(const FiniteMdp& mdp, const TimedPolicy& behavior,
                               const TimedPolicy& target, const Baseline& baseline) {
  double expectation = 0.0;
  for (const WeightedTrajectory& wt : enumerate_trajectories(mdp, behavior)) {
    expectation += wt.probability * baseline_return(wt.trajectory, target, behavior, baseline);
  }
  return expectation;
}

}  // namespace

TEST_CASE("q and v on the constant chain") {
  const FiniteMdp mdp = constant_chain(3);
  const TimedPolicy policy = TimedPolicy::uniform(3, 1, 1);
  const QvTables qv = compute_q_v(mdp, policy);
  for (int t = 0; t < 3; ++t) {
    CHECK(qv.q(t, 0, 0) == doctest::Approx(3.0 - t).epsilon(1e-15));
  }
  CHECK(qv.v(0, 0) == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("zero rewards give zero values") {
  RandomInstance instance = random_mdp(RandomMdpDims{3, 2, 3}, 4);
  std::fill(instance.mdp.reward.begin(), instance.mdp.reward.end(), 0.0);
  const QvTables qv = compute_q_v(instance.mdp, instance.target);
  for (double q : qv.q.data()) CHECK(q == 0.0);
  for (double v : qv.v.data()) CHECK(v == 0.0);
  CHECK(policy_performance(instance.mdp, instance.target) == 0.0);
}

TEST_CASE("v[0] matches a Monte Carlo average of on-policy returns") {
  RandomInstance instance = random_mdp(RandomMdpDims{2, 2, 3}, 21);
  // Pin the start state so the MC mean estimates v[0][0] directly.
  instance.mdp.initial_dist = {1.0, 0.0};
  const QvTables qv = compute_q_v(instance.mdp, instance.target);

  const int n = 1000000;
  double sum = 0.0;
  double sum_sq = 0.0;
  const RngSpec base{31, 0};
  for (int episode = 0; episode < n; ++episode) {
    const double value =
        sample_trajectory(instance.mdp, instance.target, base.derived(episode)).total_reward();
    sum += value;
    sum_sq += value * value;
  }
  const double mean = sum / n;
  const double variance = (sum_sq - n * mean * mean) / (n - 1.0);
  const double se = std::sqrt(variance / n);
  CHECK(std::abs(mean - qv.v(0, 0)) <= 3.0 * se);
}

TEST_CASE("policy performance on the constant chain") {
  const FiniteMdp mdp = constant_chain(3);
  CHECK(policy_performance(mdp, TimedPolicy::uniform(3, 1, 1)) ==
        doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("policy performance equals the brute-force trajectory sum") {
  const RandomInstance instance = random_mdp(RandomMdpDims{3, 2, 3}, 9);
  double brute_force = 0.0;
  for (const WeightedTrajectory& wt : enumerate_trajectories(instance.mdp, instance.target)) {
    brute_force += wt.probability * wt.trajectory.total_reward();
  }
  CHECK(std::abs(policy_performance(instance.mdp, instance.target) - brute_force) < 1e-10);
}

TEST_CASE("nu vanishes under deterministic transitions") {
  const FiniteMdp mdp = deterministic_cycle(3);
  const TimedPolicy policy = TimedPolicy::uniform(3, 2, 2);
  const QvTables qv = compute_q_v(mdp, policy);
  const TsaTable nu = compute_nu(mdp, policy, qv.v);
  for (double value : nu.data()) CHECK(value == 0.0);
}

TEST_CASE("nu of a fair Bernoulli successor pair is one") {
  // v[1] values {0, 2} hit with probability 1/2 each.
  FiniteMdp mdp = FiniteMdp::zeros(2, 1, 2);
  mdp.transition_ref(0, 0, 0) = 0.5;
  mdp.transition_ref(0, 0, 1) = 0.5;
  mdp.transition_ref(1, 0, 1) = 1.0;
  mdp.reward_ref(0, 0) = 0.0;
  mdp.reward_ref(1, 0) = 2.0;
  mdp.initial_dist[0] = 1.0;
  const TimedPolicy policy = TimedPolicy::uniform(2, 2, 1);
  const QvTables qv = compute_q_v(mdp, policy);
  REQUIRE(qv.v(1, 0) == 0.0);
  REQUIRE(qv.v(1, 1) == 2.0);
  const TsaTable nu = compute_nu(mdp, policy, qv.v);
  CHECK(nu(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(nu(1, 0, 0) == 0.0);
}

TEST_CASE("nu matches the sample variance of v[t+1][S']") {
  const RandomInstance instance = random_mdp(RandomMdpDims{3, 2, 3}, 13);
  const QvTables qv = compute_q_v(instance.mdp, instance.target);
  const TsaTable nu = compute_nu(instance.mdp, instance.target, qv.v);

  const int t = 0;
  const int s = 1;
  const int a = 0;
  const int n = 1000000;
  CounterRng gen(RngSpec{41, 0});
  const auto row = instance.mdp.transition_row(s, a);
  double sum = 0.0;
  double sum_sq = 0.0;
  std::vector<double> draws;
  draws.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double value = qv.v(t + 1, gen.next_index(row));
    draws.push_back(value);
    sum += value;
    sum_sq += value * value;
  }
  const double mean = sum / n;
  const double sample_variance = (sum_sq - n * mean * mean) / (n - 1.0);
  // se of a sample variance via the fourth central moment.
  double m4 = 0.0;
  for (double value : draws) m4 += std::pow(value - mean, 4);
  m4 /= n;
  const double se =
      std::sqrt(std::max(m4 - sample_variance * sample_variance, 0.0) / n);
  CHECK(std::abs(sample_variance - nu(t, s, a)) <= 3.0 * se);
}

TEST_CASE("u with the optimal baseline at horizon one is zero") {
  const RandomInstance instance = random_mdp(RandomMdpDims{3, 2, 1}, 6);
  const QvTables qv = compute_q_v(instance.mdp, instance.target);
  const UComputation uc = compute_u(instance.mdp, instance.target, derive_b_star(qv));
  for (double value : uc.u.data()) CHECK(value == 0.0);
  for (double value : uc.conditional_variance.data()) CHECK(value == 0.0);
}

TEST_CASE("u with zero baseline on a deterministic instance is q squared") {
  const FiniteMdp mdp = deterministic_cycle(3);
  const TimedPolicy policy = point_mass_policy(3, 2, 2, 0);
  const QvTables qv = compute_q_v(mdp, policy);
  const Baseline zero = Baseline::zeros(3, 2, 2);
  const UComputation uc = compute_u(mdp, policy, zero);
  for (int t = 0; t < 3; ++t) {
    for (int s = 0; s < 2; ++s) {
      for (int a = 0; a < 2; ++a) {
        CHECK(uc.u(t, s, a) ==
              doctest::Approx(qv.q(t, s, a) * qv.q(t, s, a)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("general-form u with b* matches the recursive form") {
  for (std::uint64_t seed : {101, 102, 103, 104, 105}) {
    const RandomInstance instance = random_mdp(RandomMdpDims{3, 2, 3}, seed);
    const QvTables qv = compute_q_v(instance.mdp, instance.target);
    const UComputation general = compute_u(instance.mdp, instance.target, derive_b_star(qv));
    const TsaTable recursive = compute_u_bstar_recursive(instance.mdp, instance.target);
    CHECK(max_abs_diff(general.u, recursive) < 1e-9);
  }
}

TEST_CASE("recursive u at horizon one is the zero table") {
  const RandomInstance instance = random_mdp(RandomMdpDims{4, 3, 1}, 8);
  const TsaTable u = compute_u_bstar_recursive(instance.mdp, instance.target);
  for (double value : u.data()) CHECK(value == 0.0);
}

TEST_CASE("deterministic transitions give zero recursive u and a uniform mu*") {
  const FiniteMdp mdp = deterministic_cycle(3);
  const TimedPolicy policy = TimedPolicy::uniform(3, 2, 2);
  const TsaTable u = compute_u_bstar_recursive(mdp, policy);
  for (double value : u.data()) CHECK(value == 0.0);
  const TimedPolicy mu_star = derive_mu_star(policy, u);
  for (double p : mu_star.probs) CHECK(p == 0.5);
}

TEST_CASE("mu* collapses to pi when u is constant across actions") {
  const RandomInstance instance = random_mdp(RandomMdpDims{2, 3, 2}, 15);
  TsaTable u(2, 2, 3, 0.7);
  const TimedPolicy mu_star = derive_mu_star(instance.target, u);
  for (std::size_t i = 0; i < mu_star.probs.size(); ++i) {
    CHECK(mu_star.probs[i] == doctest::Approx(instance.target.probs[i]).epsilon(1e-12));
  }
}

TEST_CASE("mu* hand normalization") {
  TimedPolicy target = TimedPolicy::uniform(1, 1, 2);
  TsaTable u(1, 1, 2);
  u(0, 0, 0) = 1.0;  // sqrt = 1
  u(0, 0, 1) = 9.0;  // sqrt = 3
  const TimedPolicy mu_star = derive_mu_star(target, u);
  CHECK(mu_star.prob(0, 0, 0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(mu_star.prob(0, 0, 1) == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("b* is q with b_bar equal to v") {
  SUBCASE("constant chain") {
    const FiniteMdp mdp = constant_chain(4);
    const TimedPolicy policy = TimedPolicy::uniform(4, 1, 1);
    const Baseline b_star = derive_b_star(compute_q_v(mdp, policy));
    for (int t = 0; t < 4; ++t) CHECK(b_star.b(t, 0, 0) == doctest::Approx(4.0 - t));
  }
  SUBCASE("random instance") {
    const RandomInstance instance = random_mdp(RandomMdpDims{4, 2, 3}, 33);
    const QvTables qv = compute_q_v(instance.mdp, instance.target);
    const Baseline b_star = derive_b_star(qv);
    CHECK(b_star.b == qv.q);
    CHECK(max_abs_diff(b_star.b_bar, qv.v) == 0.0);
  }
}

TEST_CASE("coverage membership") {
  const RandomInstance instance = random_mdp(RandomMdpDims{2, 2, 2}, 55);
  const TimedPolicy& target = instance.target;

  SUBCASE("behavior equal to target is in both sets") {
    TsaTable u(2, 2, 2, 1.0);
    const CoverageReport report = coverage_check(target, target, u);
    CHECK(report.in_lambda_minus);
    CHECK(report.in_lambda);
    CHECK(report.violations.empty());
  }

  SUBCASE("zeroing an action with u = 0 keeps Lambda but not Lambda^-") {
    TsaTable u(2, 2, 2, 1.0);
    u(1, 0, 0) = 0.0;
    TimedPolicy behavior = target;
    behavior.prob_ref(1, 0, 0) = 0.0;
    behavior.prob_ref(1, 0, 1) = 1.0;
    const CoverageReport report = coverage_check(behavior, target, u);
    CHECK_FALSE(report.in_lambda_minus);
    CHECK(report.in_lambda);
    REQUIRE(report.violations.size() == 1);
    CHECK(report.violations[0] == std::array<int, 3>{1, 0, 0});
  }

  SUBCASE("zeroing an action with positive pi u is in neither") {
    TsaTable u(2, 2, 2, 1.0);
    TimedPolicy behavior = target;
    behavior.prob_ref(0, 1, 1) = 0.0;
    behavior.prob_ref(0, 1, 0) = 1.0;
    const CoverageReport report = coverage_check(behavior, target, u);
    CHECK_FALSE(report.in_lambda_minus);
    CHECK_FALSE(report.in_lambda);
    REQUIRE(report.violations.size() == 1);
    CHECK(report.violations[0] == std::array<int, 3>{0, 1, 1});
  }
}

TEST_CASE("doubly optimal pair has zero variance at the final step") {
  const RandomInstance instance = random_mdp(RandomMdpDims{3, 3, 3}, 71);
  const QvTables qv = compute_q_v(instance.mdp, instance.target);
  const Baseline b_star = derive_b_star(qv);
  const TimedPolicy mu_star =
      derive_mu_star(instance.target, compute_u_bstar_recursive(instance.mdp, instance.target));
  const VarianceTables variance =
      exact_estimator_variance(instance.mdp, instance.target, mu_star, b_star);
  for (int s = 0; s < 3; ++s) {
    CHECK(variance.per_state(2, s) == 0.0);
  }
}

TEST_CASE("on-policy variance of a deterministic instance is zero") {
  const FiniteMdp mdp = deterministic_cycle(3);
  const TimedPolicy policy = point_mass_policy(3, 2, 2, 1);
  const Baseline zero = Baseline::zeros(3, 2, 2);
  const VarianceTables variance = exact_estimator_variance(mdp, policy, policy, zero);
  for (double value : variance.per_state.data()) CHECK(value == 0.0);
  CHECK(variance.aggregate == 0.0);
}

TEST_CASE("variance recursion matches enumeration") {
  const RandomInstance instance = random_mdp(RandomMdpDims{2, 2, 2}, 91);
  const TimedPolicy behavior =
      random_policy(instance.mdp.horizon, 2, 2, RngSpec{92, 1});
  const Baseline baseline = random_baseline(instance.target, -0.5, 1.5, RngSpec{92, 2});
  const VarianceTables exact =
      exact_estimator_variance(instance.mdp, instance.target, behavior, baseline);

  double mean = 0.0;
  double second = 0.0;
  for (const WeightedTrajectory& wt : enumerate_trajectories(instance.mdp, behavior)) {
    const double value = baseline_return(wt.trajectory, instance.target, behavior, baseline);
    mean += wt.probability * value;
    second += wt.probability * value * value;
  }
  CHECK(std::abs(second - mean * mean - exact.aggregate) < 1e-9);
}

TEST_CASE("variance requires Lambda membership") {
  const RandomInstance instance = random_mdp(RandomMdpDims{2, 2, 2}, 95);
  TimedPolicy behavior = instance.target;
  behavior.prob_ref(0, 0, 0) = 0.0;  // pi > 0 and u > 0 here
  behavior.prob_ref(0, 0, 1) = 1.0;
  const Baseline zero = Baseline::zeros(2, 2, 2);
  CHECK_THROWS_AS(
      exact_estimator_variance(instance.mdp, instance.target, behavior, zero),
      CoverageViolation);
}

TEST_CASE("unbiasedness under enumeration for Lambda members") {
  const RandomInstance instance = random_mdp(RandomMdpDims{3, 2, 3}, 97);
  const double j = policy_performance(instance.mdp, instance.target);

  SUBCASE("full-support random behavior, random baseline") {
    const TimedPolicy behavior = random_policy(3, 3, 2, RngSpec{98, 1});
    const Baseline baseline = random_baseline(instance.target, -1.0, 2.0, RngSpec{98, 2});
    CHECK(std::abs(enumeration_expectation(instance.mdp, behavior, instance.target, baseline) -
                   j) < 1e-9);
  }

  SUBCASE("mu* with b*") {
    const QvTables qv = compute_q_v(instance.mdp, instance.target);
    const TimedPolicy mu_star = derive_mu_star(
        instance.target, compute_u_bstar_recursive(instance.mdp, instance.target));
    CHECK(std::abs(enumeration_expectation(instance.mdp, mu_star, instance.target,
                                           derive_b_star(qv)) -
                   j) < 1e-9);
  }
}

TEST_CASE("Bellman residuals vanish on random instances") {
  const RandomInstance instance = random_mdp(RandomMdpDims{4, 3, 4}, 119);
  const QvTables qv = compute_q_v(instance.mdp, instance.target);
  for (int t = 0; t < 4; ++t) {
    for (int s = 0; s < 4; ++s) {
      double v = 0.0;
      for (int a = 0; a < 3; ++a) {
        double q = instance.mdp.reward_at(s, a);
        if (t < 3) {
          for (int s2 = 0; s2 < 4; ++s2) {
            q += instance.mdp.transition_prob(s, a, s2) * qv.v(t + 1, s2);
          }
        }
        CHECK(std::abs(qv.q(t, s, a) - q) < 1e-12);
        v += instance.target.prob(t, s, a) * qv.q(t, s, a);
      }
      CHECK(std::abs(qv.v(t, s) - v) < 1e-12);
    }
  }
}

TEST_CASE("mu* support law: zero probability implies zero pi u") {
  const RandomInstance instance = random_mdp(RandomMdpDims{3, 3, 3}, 131);
  const TsaTable u = compute_u_bstar_recursive(instance.mdp, instance.target);
  const TimedPolicy mu_star = derive_mu_star(instance.target, u);
  for (int t = 0; t < 3; ++t) {
    for (int s = 0; s < 3; ++s) {
      for (int a = 0; a < 3; ++a) {
        if (mu_star.prob(t, s, a) == 0.0) {
          CHECK(instance.target.prob(t, s, a) * u(t, s, a) == 0.0);
        }
      }
    }
  }
}

TEST_CASE("enumeration basics") {
  SUBCASE("single deterministic trajectory") {
    const FiniteMdp mdp = constant_chain(2);
    const auto trajectories = enumerate_trajectories(mdp, TimedPolicy::uniform(2, 1, 1));
    REQUIRE(trajectories.size() == 1);
    CHECK(trajectories[0].probability == 1.0);
    CHECK(trajectories[0].trajectory.steps.size() == 2);
  }

  SUBCASE("two branches with the behavior's probabilities") {
    FiniteMdp mdp = FiniteMdp::zeros(1, 2, 1);
    mdp.transition_ref(0, 0, 0) = 1.0;
    mdp.transition_ref(0, 1, 0) = 1.0;
    mdp.initial_dist[0] = 1.0;
    TimedPolicy behavior = TimedPolicy::uniform(1, 1, 2);
    behavior.prob_ref(0, 0, 0) = 0.3;
    behavior.prob_ref(0, 0, 1) = 0.7;
    const auto trajectories = enumerate_trajectories(mdp, behavior);
    REQUIRE(trajectories.size() == 2);
    CHECK(trajectories[0].probability == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(trajectories[1].probability == doctest::Approx(0.7).epsilon(1e-15));
  }

  SUBCASE("probabilities sum to one") {
    const RandomInstance instance = random_mdp(RandomMdpDims{2, 2, 3}, 137);
    double total = 0.0;
    for (const WeightedTrajectory& wt : enumerate_trajectories(instance.mdp, instance.target)) {
      total += wt.probability;
    }
    CHECK(std::abs(total - 1.0) < 1e-10);
  }

  SUBCASE("cap exceeded is an explicit refusal") {
    const RandomInstance instance = random_mdp(RandomMdpDims{3, 3, 4}, 139);
    CHECK_THROWS_AS(enumerate_trajectories(instance.mdp, instance.target, 10),
                    InfeasibleError);
    try {
      enumerate_trajectories(instance.mdp, instance.target, 10);
    } catch (const InfeasibleError& error) {
      CHECK(std::string(error.what()).find("10") != std::string::npos);
    }
  }
}
