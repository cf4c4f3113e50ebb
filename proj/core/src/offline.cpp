#include "doptlab/offline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace doptlab {

namespace {

double square(double x) { return x * x; }

void check_dims(const ModelDims& dims) {
  if (dims.horizon <= 0 || dims.num_states <= 0 || dims.num_actions <= 0) {
    throw ValidationError("offline model dimensions must be positive");
  }
}

void require_policy(const ModelDims& dims, const TimedPolicy& target, const char* where) {
  if (target.horizon != dims.horizon || target.num_states != dims.num_states ||
      target.num_actions != dims.num_actions) {
    std::ostringstream msg;
    msg << where << ": target policy dimensions do not match the model";
    throw ValidationError(msg.str());
  }
}

}  // namespace

EmpiricalModel build_empirical_model(const TupleDataset& dataset, const ModelDims& dims) {
  check_dims(dims);
  EmpiricalModel model;
  model.dims = dims;
  const std::size_t sa_cells =
      static_cast<std::size_t>(dims.horizon) * dims.num_states * dims.num_actions;
  model.visit_counts.assign(sa_cells, 0);
  model.transition_counts.assign(sa_cells * dims.num_states, 0);
  model.reward_sums.assign(sa_cells, 0.0);
  model.p_hat.assign(sa_cells * dims.num_states, 0.0);
  model.r_hat.assign(sa_cells, 0.0);
  model.visited.assign(sa_cells, 0);

  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const LoggedTuple& record = dataset.records[i];
    const bool in_range = record.t >= 0 && record.t < dims.horizon && record.s >= 0 &&
                          record.s < dims.num_states && record.a >= 0 &&
                          record.a < dims.num_actions && record.s_next >= 0 &&
                          record.s_next < dims.num_states && std::isfinite(record.r);
    if (!in_range) {
      std::ostringstream msg;
      msg << "dataset record " << (i + 1) << " is out of range: (t=" << record.t
          << ", s=" << record.s << ", a=" << record.a << ", r=" << record.r
          << ", s_next=" << record.s_next << ")";
      throw ValidationError(msg.str());
    }
    const std::size_t sa = model.sa_index(record.t, record.s, record.a);
    model.visit_counts[sa] += 1;
    model.transition_counts[sa * dims.num_states + record.s_next] += 1;
    model.reward_sums[sa] += record.r;
    model.visited[sa] = 1;
  }

  for (std::size_t sa = 0; sa < sa_cells; ++sa) {
    const std::int64_t visits = model.visit_counts[sa];
    if (visits == 0) continue;
    const double inv = 1.0 / static_cast<double>(visits);
    // Rewards are deterministic, so any sample would do; the mean guards
    // against malformed logs.
    model.r_hat[sa] = model.reward_sums[sa] * inv;
    for (int s_next = 0; s_next < dims.num_states; ++s_next) {
      model.p_hat[sa * dims.num_states + s_next] =
          static_cast<double>(model.transition_counts[sa * dims.num_states + s_next]) * inv;
    }
  }
  return model;
}

FittedQv fitted_q_evaluation(const EmpiricalModel& model, const TimedPolicy& target) {
  require_policy(model.dims, target, "fitted_q_evaluation");
  const int T = model.dims.horizon;
  const int S = model.dims.num_states;
  const int A = model.dims.num_actions;
  FittedQv out{TsaTable(T, S, A), TsTable(T, S)};
  for (int t = T - 1; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        if (!model.is_visited(t, s, a)) continue;  // stays 0, flagged in the model
        double q = model.r_hat_at(t, s, a);
        if (t < T - 1) {
          for (int s2 = 0; s2 < S; ++s2) {
            q += model.p_hat_at(t, s, a, s2) * out.v_hat(t + 1, s2);
          }
        }
        out.q_hat(t, s, a) = q;
      }
      double v = 0.0;
      for (int a = 0; a < A; ++a) v += target.prob(t, s, a) * out.q_hat(t, s, a);
      out.v_hat(t, s) = v;
    }
  }
  return out;
}

TsaTable construct_nu_targets(const EmpiricalModel& model, const TsaTable& /*q_hat*/,
                              const TsTable& v_hat) {
  // q_hat - r_hat equals the first moment of v_hat over logged successors by
  // the tabular fit's construction; the moment form below is that same
  // quantity without the cancellation dust.
  const int T = model.dims.horizon;
  const int S = model.dims.num_states;
  const int A = model.dims.num_actions;
  TsaTable nu_hat(T, S, A);
  for (int t = 0; t < T - 1; ++t) {
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        if (!model.is_visited(t, s, a)) continue;
        // Second and first moments of v_hat[t+1] over the logged successors.
        // For the tabular fit the first moment IS q_hat - r_hat; evaluating
        // it directly keeps deterministic branches at exactly zero instead
        // of leaving cancellation dust under the square root later.
        double second_moment = 0.0;
        double first_moment = 0.0;
        for (int s2 = 0; s2 < S; ++s2) {
          const double p = model.p_hat_at(t, s, a, s2);
          second_moment += p * square(v_hat(t + 1, s2));
          first_moment += p * v_hat(t + 1, s2);
        }
        const double plug_in = second_moment - square(first_moment);
        // The one-sample plug-in can go negative; nu is provably >= 0.
        nu_hat(t, s, a) = std::max(plug_in, 0.0);
      }
    }
  }
  return nu_hat;  // nu_hat[T-1] stays 0
}

TsaTable fit_u(const EmpiricalModel& model, const TimedPolicy& target, const TsaTable& nu_hat) {
  require_policy(model.dims, target, "fit_u");
  const int T = model.dims.horizon;
  const int S = model.dims.num_states;
  const int A = model.dims.num_actions;
  TsaTable u_hat(T, S, A);  // u_hat[T-1] = 0
  std::vector<double> squared_root_sum(static_cast<std::size_t>(S));
  for (int t = T - 2; t >= 0; --t) {
    for (int s2 = 0; s2 < S; ++s2) {
      double root_sum = 0.0;
      for (int a2 = 0; a2 < A; ++a2) {
        root_sum += target.prob(t + 1, s2, a2) * std::sqrt(std::max(u_hat(t + 1, s2, a2), 0.0));
      }
      squared_root_sum[s2] = root_sum * root_sum;
    }
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        if (!model.is_visited(t, s, a)) continue;
        double future = 0.0;
        for (int s2 = 0; s2 < S; ++s2) {
          future += model.p_hat_at(t, s, a, s2) * squared_root_sum[s2];
        }
        u_hat(t, s, a) = nu_hat(t, s, a) + future;
      }
    }
  }
  return u_hat;
}

TsaTable fit_u_pdis(const EmpiricalModel& model, const TimedPolicy& target, const FittedQv& fit,
                    const TsaTable& nu_hat) {
  require_policy(model.dims, target, "fit_u_pdis");
  const int T = model.dims.horizon;
  const int S = model.dims.num_states;
  const int A = model.dims.num_actions;
  TsaTable u(T, S, A);
  TsTable variance(T, S);
  std::vector<double> weights(static_cast<std::size_t>(A));
  // Same alternating sweep as the exact general-form u, on the empirical
  // model with b = 0: u[t] -> mu[t] -> Var[t].
  for (int t = T - 1; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        if (!model.is_visited(t, s, a)) continue;
        double value = square(fit.q_hat(t, s, a));
        if (t < T - 1) {
          value += nu_hat(t, s, a);
          double future = 0.0;
          for (int s2 = 0; s2 < S; ++s2) {
            future += model.p_hat_at(t, s, a, s2) * variance(t + 1, s2);
          }
          value += future;
        }
        u(t, s, a) = value;
      }
      double weight_total = 0.0;
      for (int a = 0; a < A; ++a) {
        weights[a] = target.prob(t, s, a) * std::sqrt(std::max(u(t, s, a), 0.0));
        weight_total += weights[a];
      }
      double second_moment = 0.0;
      if (weight_total > 0.0) {
        for (int a = 0; a < A; ++a) {
          if (weights[a] <= 0.0) continue;
          const double pi = target.prob(t, s, a);
          second_moment += pi * pi / (weights[a] / weight_total) * u(t, s, a);
        }
      }
      variance(t, s) = second_moment - square(fit.v_hat(t, s));
    }
  }
  return u;
}

namespace {

bool row_trusted(const EmpiricalModel& model, const TimedPolicy& target, int t, int s) {
  for (int a = 0; a < target.num_actions; ++a) {
    if (target.prob(t, s, a) > 0.0 &&
        model.visit_counts[model.sa_index(t, s, a)] < kBehaviorTrustVisits) {
      return false;
    }
  }
  return true;
}

}  // namespace

TimedPolicy derive_behavior_policy(const TimedPolicy& target, const TsaTable& u_hat,
                                   const EmpiricalModel& model) {
  TimedPolicy mu = target;
  std::vector<double> weights(static_cast<std::size_t>(target.num_actions));
  for (int t = 0; t < target.horizon; ++t) {
    for (int s = 0; s < target.num_states; ++s) {
      if (!row_trusted(model, target, t, s)) continue;  // keep the target's row
      double total = 0.0;
      for (int a = 0; a < target.num_actions; ++a) {
        weights[a] = target.prob(t, s, a) * std::sqrt(std::max(u_hat(t, s, a), 0.0));
        total += weights[a];
      }
      if (total > 0.0) {
        auto row = mu.row_mut(t, s);
        for (int a = 0; a < target.num_actions; ++a) row[a] = weights[a] / total;
      }
      // else: keep the target's row (pi fallback).
    }
  }
  return mu;
}

LearnedArtifacts learn_dopt(const TupleDataset& dataset, const TimedPolicy& target,
                            const ModelDims& dims) {
  require_policy(dims, target, "learn_dopt");
  const EmpiricalModel model = build_empirical_model(dataset, dims);
  FittedQv fit = fitted_q_evaluation(model, target);
  TsaTable nu_hat = construct_nu_targets(model, fit.q_hat, fit.v_hat);
  TsaTable u_hat = fit_u(model, target, nu_hat);
  TimedPolicy mu_hat_star = derive_behavior_policy(target, u_hat, model);
  Baseline b_hat_star{fit.q_hat, fit.v_hat};

  LearnedDiagnostics diagnostics;
  diagnostics.num_records = static_cast<std::int64_t>(dataset.records.size());
  const std::size_t sa_cells = model.visited.size();
  std::size_t unvisited = 0;
  for (std::uint8_t flag : model.visited) unvisited += flag == 0 ? 1 : 0;
  diagnostics.unvisited_fraction =
      static_cast<double>(unvisited) / static_cast<double>(sa_cells);

  std::size_t clamped = 0;
  std::size_t visited_nonterminal = 0;
  for (int t = 0; t < dims.horizon - 1; ++t) {
    for (int s = 0; s < dims.num_states; ++s) {
      for (int a = 0; a < dims.num_actions; ++a) {
        if (!model.is_visited(t, s, a)) continue;
        visited_nonterminal += 1;
        double second_moment = 0.0;
        double first_moment = 0.0;
        for (int s2 = 0; s2 < dims.num_states; ++s2) {
          const double p = model.p_hat_at(t, s, a, s2);
          second_moment += p * square(fit.v_hat(t + 1, s2));
          first_moment += p * fit.v_hat(t + 1, s2);
        }
        if (second_moment - square(first_moment) < 0.0) clamped += 1;
      }
    }
  }
  diagnostics.nu_clamped_fraction =
      visited_nonterminal == 0
          ? 0.0
          : static_cast<double>(clamped) / static_cast<double>(visited_nonterminal);

  std::size_t fallback_rows = 0;
  for (int t = 0; t < dims.horizon; ++t) {
    for (int s = 0; s < dims.num_states; ++s) {
      double total = 0.0;
      for (int a = 0; a < dims.num_actions; ++a) {
        total += target.prob(t, s, a) * std::sqrt(std::max(u_hat(t, s, a), 0.0));
      }
      if (total <= 0.0 || !row_trusted(model, target, t, s)) fallback_rows += 1;
    }
  }
  diagnostics.fallback_row_fraction =
      static_cast<double>(fallback_rows) /
      static_cast<double>(static_cast<std::size_t>(dims.horizon) * dims.num_states);

  // Bellman residual of q_hat on the empirical model (zero by construction
  // for the tabular fit; nonzero values would indicate a broken sweep).
  double q_residual = 0.0;
  for (int t = 0; t < dims.horizon; ++t) {
    for (int s = 0; s < dims.num_states; ++s) {
      for (int a = 0; a < dims.num_actions; ++a) {
        if (!model.is_visited(t, s, a)) continue;
        double expected = model.r_hat_at(t, s, a);
        if (t < dims.horizon - 1) {
          for (int s2 = 0; s2 < dims.num_states; ++s2) {
            expected += model.p_hat_at(t, s, a, s2) * fit.v_hat(t + 1, s2);
          }
        }
        q_residual = std::max(q_residual, std::abs(fit.q_hat(t, s, a) - expected));
      }
    }
  }
  diagnostics.q_residual = q_residual;

  return LearnedArtifacts{std::move(fit.q_hat), std::move(fit.v_hat), std::move(nu_hat),
                          std::move(u_hat),     std::move(mu_hat_star), std::move(b_hat_star),
                          diagnostics};
}

}  // namespace doptlab
