#include "doptlab/theorem_checks.hpp"

#include <algorithm>
#include <cmath>

namespace doptlab {

namespace {

// Var_{A ~ pi}(f(A) | s) for a per-action value f.
template <typename F>
double policy_variance(const TimedPolicy& target, int t, int s, F f) {
  double mean = 0.0;
  double second = 0.0;
  for (int a = 0; a < target.num_actions; ++a) {
    const double pi = target.prob(t, s, a);
    if (pi == 0.0) continue;
    const double value = f(a);
    mean += pi * value;
    second += pi * value * value;
  }
  return second - mean * mean;
}

// E_{A ~ pi, S'}[ next(t+1, S') | s ]: the compounded future-gap expectation
// shared by the on-policy and DR deltas.
double compounded_gap_under_pi(const FiniteMdp& mdp, const TimedPolicy& target, int t, int s,
                               const TsTable& future_gap) {
  double total = 0.0;
  for (int a = 0; a < target.num_actions; ++a) {
    const double pi = target.prob(t, s, a);
    if (pi == 0.0) continue;
    const auto row = mdp.transition_row(s, a);
    double inner = 0.0;
    for (int s2 = 0; s2 < mdp.num_states; ++s2) inner += row[s2] * future_gap(t + 1, s2);
    total += pi * inner;
  }
  return total;
}

struct ExactContext {
  QvTables qv;
  TsaTable u_bstar;
  Baseline b_star;
  TimedPolicy mu_star;
  VarianceTables var_dopt;  // Var(G^{b*} under mu*)
};

ExactContext build_context(const FiniteMdp& mdp, const TimedPolicy& target) {
  ExactContext ctx{compute_q_v(mdp, target), {}, {}, {}, {}};
  ctx.u_bstar = compute_u_bstar_recursive(mdp, target);
  ctx.b_star = derive_b_star(ctx.qv);
  ctx.mu_star = derive_mu_star(target, ctx.u_bstar);
  ctx.var_dopt = exact_estimator_variance(mdp, target, ctx.mu_star, ctx.b_star);
  return ctx;
}

GapReport make_report(GapKind kind, int horizon, int num_states, int num_terms) {
  GapReport report;
  report.kind = kind;
  report.horizon = horizon;
  report.num_states = num_states;
  report.num_terms = num_terms;
  report.cells.assign(static_cast<std::size_t>(horizon) * num_states, GapCell{});
  return report;
}

}  // namespace

double GapReport::max_abs_residual() const {
  double worst = 0.0;
  for (const GapCell& cell : cells) worst = std::max(worst, std::abs(cell.residual));
  return worst;
}

double GapReport::min_residual() const {
  double worst = 0.0;
  for (const GapCell& cell : cells) worst = std::min(worst, cell.residual);
  return worst;
}

double GapReport::min_delta() const {
  double worst = 0.0;
  for (const GapCell& cell : cells) worst = std::min(worst, cell.delta);
  return worst;
}

GapReport gap_vs_on_policy(const FiniteMdp& mdp, const TimedPolicy& target) {
  const ExactContext ctx = build_context(mdp, target);
  const Baseline zero = Baseline::zeros(mdp.horizon, mdp.num_states, mdp.num_actions);
  const VarianceTables var_on = exact_estimator_variance(mdp, target, target, zero);

  TsTable future_gap(mdp.horizon, mdp.num_states);
  for (std::size_t i = 0; i < future_gap.data().size(); ++i) {
    future_gap.data()[i] = var_on.per_state.data()[i] - ctx.var_dopt.per_state.data()[i];
  }

  GapReport report = make_report(GapKind::kOnPolicy, mdp.horizon, mdp.num_states, 3);
  for (int t = 0; t < mdp.horizon; ++t) {
    for (int s = 0; s < mdp.num_states; ++s) {
      GapCell& cell = report.cell(t, s);
      cell.lhs_gap = var_on.per_state(t, s) - ctx.var_dopt.per_state(t, s);
      cell.rhs_terms[0] = policy_variance(target, t, s, [&](int a) {
        return std::sqrt(std::max(ctx.u_bstar(t, s, a), 0.0));
      });
      cell.rhs_terms[1] =
          policy_variance(target, t, s, [&](int a) { return ctx.qv.q(t, s, a); });
      cell.delta = t == mdp.horizon - 1
                       ? 0.0
                       : compounded_gap_under_pi(mdp, target, t, s, future_gap);
      cell.rhs_terms[2] = cell.delta;
      cell.residual =
          cell.lhs_gap - (cell.rhs_terms[0] + cell.rhs_terms[1] + cell.rhs_terms[2]);
    }
  }
  return report;
}

GapReport gap_vs_dr(const FiniteMdp& mdp, const TimedPolicy& target) {
  const ExactContext ctx = build_context(mdp, target);
  const VarianceTables var_dr = exact_estimator_variance(mdp, target, target, ctx.b_star);

  TsTable future_gap(mdp.horizon, mdp.num_states);
  for (std::size_t i = 0; i < future_gap.data().size(); ++i) {
    future_gap.data()[i] = var_dr.per_state.data()[i] - ctx.var_dopt.per_state.data()[i];
  }

  GapReport report = make_report(GapKind::kDr, mdp.horizon, mdp.num_states, 2);
  for (int t = 0; t < mdp.horizon; ++t) {
    for (int s = 0; s < mdp.num_states; ++s) {
      GapCell& cell = report.cell(t, s);
      cell.lhs_gap = var_dr.per_state(t, s) - ctx.var_dopt.per_state(t, s);
      cell.rhs_terms[0] = policy_variance(target, t, s, [&](int a) {
        return std::sqrt(std::max(ctx.u_bstar(t, s, a), 0.0));
      });
      cell.delta = t == mdp.horizon - 1
                       ? 0.0
                       : compounded_gap_under_pi(mdp, target, t, s, future_gap);
      cell.rhs_terms[1] = cell.delta;
      cell.residual = cell.lhs_gap - (cell.rhs_terms[0] + cell.rhs_terms[1]);
    }
  }
  return report;
}

GapReport gap_vs_odi(const FiniteMdp& mdp, const TimedPolicy& target) {
  const ExactContext ctx = build_context(mdp, target);
  const Baseline zero = Baseline::zeros(mdp.horizon, mdp.num_states, mdp.num_actions);
  // mu^{*,PDIS}: the optimal behavior policy for the plain PDIS objective.
  const UComputation u_pdis = compute_u(mdp, target, zero);
  const TimedPolicy mu_pdis = derive_mu_star(target, u_pdis.u);
  const VarianceTables var_odi = exact_estimator_variance(mdp, target, mu_pdis, zero);

  TsTable future_gap(mdp.horizon, mdp.num_states);
  for (std::size_t i = 0; i < future_gap.data().size(); ++i) {
    future_gap.data()[i] = var_odi.per_state.data()[i] - ctx.var_dopt.per_state.data()[i];
  }

  GapReport report = make_report(GapKind::kOdi, mdp.horizon, mdp.num_states, 2);
  for (int t = 0; t < mdp.horizon; ++t) {
    for (int s = 0; s < mdp.num_states; ++s) {
      GapCell& cell = report.cell(t, s);
      cell.lhs_gap = var_odi.per_state(t, s) - ctx.var_dopt.per_state(t, s);

      // Var_{A ~ mu^{*,PDIS}}(rho q | s); only mu-positive actions are in
      // the expectation's support.
      double mean = 0.0;
      double second = 0.0;
      for (int a = 0; a < mdp.num_actions; ++a) {
        const double mu = mu_pdis.prob(t, s, a);
        if (mu <= 0.0) continue;
        const double weighted = target.prob(t, s, a) / mu * ctx.qv.q(t, s, a);
        mean += mu * weighted;
        second += mu * weighted * weighted;
      }
      cell.rhs_terms[0] = second - mean * mean;

      // delta^{ODI}: E_{A ~ mu^{*,PDIS}, S'}[rho^2 (Var_ODI(t+1,S') -
      // Var_DOpt(t+1,S'))]. The rho^2 expectation collapses to
      // sum_a pi^2/mu over the behavior's support.
      double delta = 0.0;
      if (t < mdp.horizon - 1) {
        for (int a = 0; a < mdp.num_actions; ++a) {
          const double mu = mu_pdis.prob(t, s, a);
          if (mu <= 0.0) continue;
          const double pi = target.prob(t, s, a);
          if (pi == 0.0) continue;
          const auto row = mdp.transition_row(s, a);
          double inner = 0.0;
          for (int s2 = 0; s2 < mdp.num_states; ++s2) inner += row[s2] * future_gap(t + 1, s2);
          delta += pi * pi / mu * inner;
        }
      }
      cell.delta = delta;
      cell.rhs_terms[1] = delta;
      cell.residual = cell.lhs_gap - (cell.rhs_terms[0] + cell.rhs_terms[1]);
    }
  }
  return report;
}

bool gap_report_passes(const GapReport& report) {
  if (report.min_delta() < -kDeltaTolerance) return false;
  if (report.kind == GapKind::kOdi) {
    return report.min_residual() >= -kGapEqualityTolerance;
  }
  return report.max_abs_residual() <= kGapEqualityTolerance;
}

VarianceOrdering variance_ordering(const FiniteMdp& mdp, const TimedPolicy& target) {
  const ExactContext ctx = build_context(mdp, target);
  const Baseline zero = Baseline::zeros(mdp.horizon, mdp.num_states, mdp.num_actions);
  const UComputation u_pdis = compute_u(mdp, target, zero);
  const TimedPolicy mu_pdis = derive_mu_star(target, u_pdis.u);

  VarianceOrdering out;
  out.var_dopt = ctx.var_dopt.aggregate;
  out.var_on_policy = exact_estimator_variance(mdp, target, target, zero).aggregate;
  out.var_odi = exact_estimator_variance(mdp, target, mu_pdis, zero).aggregate;
  out.var_dr = exact_estimator_variance(mdp, target, target, ctx.b_star).aggregate;
  out.holds = out.var_dopt <= std::min({out.var_on_policy, out.var_odi, out.var_dr}) +
                                  kVarianceTolerance;
  return out;
}

}  // namespace doptlab
