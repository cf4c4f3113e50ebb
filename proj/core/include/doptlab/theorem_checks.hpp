#pragma once

#include <array>
#include <string>
#include <vector>

#include "doptlab/exact_dp.hpp"
#include "doptlab/mdp.hpp"

namespace doptlab {

inline constexpr double kGapEqualityTolerance = 1e-9;
inline constexpr double kDeltaTolerance = 1e-12;

enum class GapKind {
  kOnPolicy,  // equality with terms Var_pi(sqrt(u*)), Var_pi(q), delta
  kOdi,       // inequality with terms Var_mu(rho q), delta
  kDr,        // equality with terms Var_pi(sqrt(u*)), delta
};

struct GapCell {
  double lhs_gap = 0.0;
  std::array<double, 3> rhs_terms{0.0, 0.0, 0.0};
  double delta = 0.0;     // the compounded future-gap term of this theorem
  double residual = 0.0;  // lhs - sum(rhs); slack for the inequality kind
};

// Both sides of one variance-gap decomposition at every (t, s). The delta
// terms are computed from their own defining expectations, not inferred as
// residuals, so the equality checks are genuine two-sided computations.
struct GapReport {
  GapKind kind = GapKind::kOnPolicy;
  int horizon = 0;
  int num_states = 0;
  int num_terms = 0;
  std::vector<GapCell> cells;  // [t][s]

  const GapCell& cell(int t, int s) const {
    return cells[static_cast<std::size_t>(t) * num_states + s];
  }
  GapCell& cell(int t, int s) {
    return cells[static_cast<std::size_t>(t) * num_states + s];
  }

  double max_abs_residual() const;
  double min_residual() const;  // worst slack for the inequality kind
  double min_delta() const;
};

// Var(G^PDIS under pi) - Var(G^{b*} under mu*) =
//   Var_pi(sqrt(u^{b*})) + Var_pi(q) + delta^{ON}.
GapReport gap_vs_on_policy(const FiniteMdp& mdp, const TimedPolicy& target);

// Var(G^PDIS under mu^{*,PDIS}) - Var(G^{b*} under mu^{*,b*}) >=
//   Var_{mu^{*,PDIS}}(rho q) + delta^{ODI}.
GapReport gap_vs_odi(const FiniteMdp& mdp, const TimedPolicy& target);

// Var(G^{b*} under pi) - Var(G^{b*} under mu*) =
//   Var_pi(sqrt(u^{b*})) + delta^{DR}.
GapReport gap_vs_dr(const FiniteMdp& mdp, const TimedPolicy& target);

// Equality kinds: |residual| <= kGapEqualityTolerance everywhere. Inequality
// kind: residual >= -kGapEqualityTolerance. All kinds: delta >= -kDeltaTolerance.
bool gap_report_passes(const GapReport& report);

// Aggregate (t = 0, over p0) variances of the four estimators, and whether
// the doubly optimal one is at most every other within tolerance.
struct VarianceOrdering {
  double var_dopt = 0.0;
  double var_on_policy = 0.0;
  double var_odi = 0.0;
  double var_dr = 0.0;
  bool holds = false;
};

VarianceOrdering variance_ordering(const FiniteMdp& mdp, const TimedPolicy& target);

}  // namespace doptlab
