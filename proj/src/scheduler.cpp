#include "tes/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tes/errors.hpp"

namespace tes {

OperatingMode classify_mode(const ModeFlags& f) {
  if (!f.d_e_sec && !f.d_tes_sec) {
    throw InvariantError("mode flags: evaporator and discharge both inactive");
  }
  if (f.d_tes && f.d_tes_sec) throw InvariantError("mode flags: charge and discharge both active");
  if (!f.d_e_sec) {
    if (f.d_tes) throw InvariantError("mode flags: charging without the evaporator");
    return OperatingMode::mode4;
  }
  if (f.d_tes) return OperatingMode::mode2;
  if (f.d_tes_sec) return OperatingMode::mode3;
  return OperatingMode::mode1;
}

void SchedulerConfig::validate() const {
  if (horizon < 1) throw ConfigError("scheduler: horizon must be at least 1");
  if (!(dt > 0.0)) throw ConfigError("scheduler: dt must be positive");
  if (!(gamma_min > 0.0 && gamma_min < gamma_max && gamma_max < 1.0)) {
    throw ConfigError("scheduler: need 0 < gamma_min < gamma_max < 1");
  }
  if (limit_iterations < 1) throw ConfigError("scheduler: limit_iterations must be at least 1");
  if (!(limit_tolerance >= 0.0)) throw ConfigError("scheduler: limit_tolerance must be >= 0");
  if (!(resim_tolerance >= 0.0)) throw ConfigError("scheduler: resim_tolerance must be >= 0");
  if (n_sub < 1) throw ConfigError("scheduler: n_sub must be at least 1");
  limits.validate();
}

namespace {

void check_forecast(const HorizonForecast& fc, std::size_t ph) {
  if (fc.demand.size() != ph || fc.price.size() != ph || fc.t_surr.size() != ph) {
    throw ConfigError("scheduler: forecasts must cover exactly " + std::to_string(ph) + " steps");
  }
  for (std::size_t k = 0; k < ph; ++k) {
    if (!(fc.demand[k] >= 0.0)) throw ConfigError("scheduler: negative demand at step " + std::to_string(k));
    if (!(fc.price[k] >= 0.0)) throw ConfigError("scheduler: negative price at step " + std::to_string(k));
  }
}

std::string step_name(const char* what, std::size_t k) { return std::string(what) + "_" + std::to_string(k); }

}  // namespace

milp::MixedIntegerProgram build_problem(const HorizonForecast& fc, const LinearPrediction& lp,
                                        const std::vector<PowerLimits>& limits,
                                        const SchedulerConfig& cfg) {
  const std::size_t ph = cfg.horizon;
  check_forecast(fc, ph);
  if (lp.horizon() != ph) throw ConfigError("scheduler: prediction horizon does not match");
  if (limits.size() != ph) throw ConfigError("scheduler: need one set of limits per step");

  using milp::kInf;
  milp::MixedIntegerProgram mip;
  auto& p = mip.lp;
  for (std::size_t k = 0; k < ph; ++k) {
    const double w = energy_weight(fc.price[k], cfg.dt);
    const PowerLimits& l = limits[k];
    p.objective_offset += w * fc.demand[k];
    p.add_col(w, 0.0, l.q_tes_max, step_name("q_tes", k));
    p.add_col(-w, 0.0, std::min(l.q_tes_sec_max, fc.demand[k]), step_name("q_tes_sec", k));
    p.add_col(0.0, 0.0, 1.0, step_name("d_tes", k));
    p.add_col(0.0, 0.0, 1.0, step_name("d_tes_sec", k));
  }
  for (std::size_t k = 0; k < ph; ++k) p.add_col(0.0, 0.0, 1.0, step_name("d_e_sec", k));

  for (std::size_t k = 0; k < ph; ++k) {
    const PowerLimits& l = limits[k];
    const double d = fc.demand[k];
    const std::size_t qt = col_q_tes(k), qs = col_q_tes_sec(k);
    const std::size_t dt = col_d_tes(k), ds = col_d_tes_sec(k), de = col_d_e_sec(ph, k);
    // q_e = d - q_s must lie in [d_e q_e_min, d_e q_e_max].
    p.add_row({{qs, 1.0}, {de, l.q_e_max}}, d, kInf, step_name("evap_max", k));
    p.add_row({{qs, 1.0}, {de, l.q_e_min}}, -kInf, d, step_name("evap_min", k));
    p.add_row({{qt, 1.0}, {dt, -l.q_tes_max}}, -kInf, 0.0, step_name("charge_max", k));
    p.add_row({{qt, 1.0}, {dt, -l.q_tes_min}}, 0.0, kInf, step_name("charge_min", k));
    p.add_row({{qs, 1.0}, {ds, -l.q_tes_sec_max}}, -kInf, 0.0, step_name("discharge_max", k));
    p.add_row({{qs, 1.0}, {ds, -l.q_tes_sec_min}}, 0.0, kInf, step_name("discharge_min", k));
  }

  // Charge band on the post-step ratio: gamma_free(k) + sum_{i<=k} G_gamma(i) u.
  const auto n_in = static_cast<Eigen::Index>(2 * ph);
  Eigen::RowVectorXd cum = Eigen::RowVectorXd::Zero(n_in);
  for (std::size_t k = 0; k < ph; ++k) {
    cum += lp.g.row(static_cast<Eigen::Index>(2 * k));
    std::vector<std::pair<std::size_t, double>> coeffs;
    for (Eigen::Index c = 0; c < n_in; ++c) {
      if (cum[c] == 0.0) continue;
      const auto step = static_cast<std::size_t>(c / 2);
      coeffs.emplace_back(c % 2 == 0 ? col_q_tes(step) : col_q_tes_sec(step), cum[c]);
    }
    const double g_free = lp.y_free.gamma[k];
    p.add_row(coeffs, cfg.gamma_min - g_free, cfg.gamma_max - g_free, step_name("charge_band", k));
  }

  for (std::size_t k = 0; k < ph; ++k) {
    mip.binaries.push_back(col_d_tes(k));
    mip.binaries.push_back(col_d_tes_sec(k));
  }
  for (std::size_t k = 0; k < ph; ++k) mip.binaries.push_back(col_d_e_sec(ph, k));
  for (std::size_t k = 0; k < ph; ++k) {
    mip.clauses.push_back({milp::ClauseKind::at_least_one, {col_d_e_sec(ph, k), col_d_tes_sec(k)}});
    mip.clauses.push_back({milp::ClauseKind::at_most_one, {col_d_tes(k), col_d_tes_sec(k)}});
  }
  return mip;
}

std::vector<PowerLimits> limits_along(const TesState& x0, const LinearPrediction& lp,
                                      const InputTrajectory& u, const TankModel& m,
                                      const LimitConfig& cfg) {
  const std::size_t ph = lp.horizon();
  const OutputTrajectory y = predict(lp, u);
  std::vector<PowerLimits> out(ph);
  TesState s = x0;
  PowerLimits before = power_limits(s, m, cfg);
  for (std::size_t k = 0; k < ph; ++k) {
    s = apply_cold_energy(s, y.d_gamma[k] * m.cylinder_capacity(), m).state;
    const PowerLimits after = power_limits(s, m, cfg);
    PowerLimits& l = out[k];
    l = after;
    l.q_tes_min = std::min(before.q_tes_min, l.q_tes_max);
    l.q_tes_sec_min = std::min(before.q_tes_sec_min, l.q_tes_sec_max);
    before = after;
  }
  return out;
}

Schedule decode_solution(const std::vector<double>& x, const HorizonForecast& fc,
                         const LinearPrediction& lp, const std::vector<PowerLimits>& limits) {
  const std::size_t ph = lp.horizon();
  Schedule s;
  s.steps.resize(ph);
  InputTrajectory u = InputTrajectory::zeros(ph);
  for (std::size_t k = 0; k < ph; ++k) {
    StepPlan& st = s.steps[k];
    st.decision.d_tes = x[col_d_tes(k)] > 0.5;
    st.decision.d_tes_sec = x[col_d_tes_sec(k)] > 0.5;
    st.d_e_sec = x[col_d_e_sec(ph, k)] > 0.5;
    st.decision.q_tes_ref = st.decision.d_tes ? std::max(0.0, x[col_q_tes(k)]) : 0.0;
    st.decision.q_tes_sec_ref =
        st.decision.d_tes_sec ? std::clamp(x[col_q_tes_sec(k)], 0.0, fc.demand[k]) : 0.0;
    st.q_e_sec_ref = derive_evaporator_power(fc.demand[k], st.decision.q_tes_sec_ref);
    st.mode = classify_mode(st.flags());
    st.limits = limits[k];
    u.q_tes[k] = st.decision.q_tes_ref;
    u.q_tes_sec[k] = st.decision.q_tes_sec_ref;
  }
  const OutputTrajectory y = predict(lp, u);
  for (std::size_t k = 0; k < ph; ++k) {
    s.steps[k].gamma = y.gamma[k];
    s.steps[k].t_int = y.t_int[k];
  }
  return s;
}

namespace {

// Power of two bringing v into [0.5, 1).
double power_of_two_scale(double v) {
  if (!(v > 0.0) || !std::isfinite(v)) return 1.0;
  int exponent = 0;
  std::frexp(v, &exponent);
  return std::ldexp(1.0, -exponent);
}

milp::MixedIntegerProgram scaled_costs(milp::MixedIntegerProgram mip, double scale) {
  for (double& c : mip.lp.cost) c *= scale;
  mip.lp.objective_offset *= scale;
  return mip;
}

// Largest violation of the given limits by the active powers of a schedule,
// relative to the respective maximum.
double limit_violation(const Schedule& sched, const std::vector<PowerLimits>& limits) {
  double worst = 0.0;
  const auto check = [&](double q, double lo, double hi) {
    const double scale = std::max(hi, 1e-300);
    worst = std::max({worst, (q - hi) / scale, (lo - q) / scale});
  };
  for (std::size_t k = 0; k < limits.size(); ++k) {
    const PartialDecision& d = sched.steps[k].decision;
    if (d.d_tes) check(d.q_tes_ref, limits[k].q_tes_min, limits[k].q_tes_max);
    if (d.d_tes_sec) check(d.q_tes_sec_ref, limits[k].q_tes_sec_min, limits[k].q_tes_sec_max);
  }
  return worst;
}

bool step_has_mode(double d, const PowerLimits& l) {
  const double qs_hi = std::min(l.q_tes_sec_max, d);
  const bool evap_only = d >= l.q_e_min && d <= l.q_e_max;
  const bool with_discharge = std::max({l.q_tes_sec_min, d - l.q_e_max, 0.0}) <=
                              std::min(qs_hi, d - l.q_e_min) && qs_hi > 0.0;
  const bool discharge_only = d > 0.0 && d >= l.q_tes_sec_min && d <= l.q_tes_sec_max;
  return evap_only || with_discharge || discharge_only;
}

[[noreturn]] void diagnose_infeasible(const HorizonForecast& fc, const LinearPrediction& lp,
                                      const std::vector<PowerLimits>& limits,
                                      const SchedulerConfig& cfg) {
  const std::size_t ph = cfg.horizon;
  for (std::size_t k = 0; k < ph; ++k) {
    if (!step_has_mode(fc.demand[k], limits[k])) {
      throw SchedulingInfeasible("no operating mode can meet the demand at step " +
                                     std::to_string(k),
                                 k, "demand");
    }
  }
  // Tighten the charge band one step at a time to find the first conflict.
  milp::MixedIntegerProgram mip = build_problem(fc, lp, limits, cfg);
  const std::size_t first_band = mip.lp.num_rows() - ph;
  std::vector<double> lo(mip.lp.row_lower.begin() + static_cast<std::ptrdiff_t>(first_band), mip.lp.row_lower.end());
  std::vector<double> hi(mip.lp.row_upper.begin() + static_cast<std::ptrdiff_t>(first_band), mip.lp.row_upper.end());
  for (std::size_t k = 0; k < ph; ++k) {
    mip.lp.row_lower[first_band + k] = -milp::kInf;
    mip.lp.row_upper[first_band + k] = milp::kInf;
  }
  for (std::size_t k = 0; k < ph; ++k) {
    mip.lp.row_lower[first_band + k] = lo[k];
    mip.lp.row_upper[first_band + k] = hi[k];
    if (milp::branch_and_bound(mip, cfg.bnb).status == milp::Status::infeasible) {
      throw SchedulingInfeasible("charge ratio band cannot be kept at step " + std::to_string(k),
                                 k, "charge_band");
    }
  }
  throw SchedulingInfeasible("scheduling problem infeasible", 0, "unknown");
}

}  // namespace

Schedule solve_schedule(const TesState& x_est, const HorizonForecast& fc, const TankModel& m,
                        const SchedulerConfig& cfg) {
  cfg.validate();
  check_forecast(fc, cfg.horizon);
  const RolloutOptions ro{cfg.dt, cfg.n_sub};
  JacobianOptions jo;
  jo.eps = cfg.jacobian_eps > 0.0 ? cfg.jacobian_eps : default_perturbation(m, cfg.limits);
  jo.threads = cfg.threads;

  milp::BnbOptions bnb = cfg.bnb;
  bnb.threads = cfg.threads;

  // The first solve linearizes about zero input with the fronts predicted
  // for it. If that is infeasible, the fronts are placed at the cylinder
  // edge (the most permissive position) once. Later solves linearize about
  // the incumbent and follow its fronts.
  InputTrajectory u = InputTrajectory::zeros(cfg.horizon);
  LinearPrediction lp = jacobian(x_est, fc.t_surr, m, ro, jo);
  std::vector<PowerLimits> limits = limits_along(x_est, lp, u, m, cfg.limits);
  bool edge_tried = false;
  Schedule best;
  InputTrajectory best_u = u;
  bool have = false;
  ScheduleDiagnostics diag;

  // The objective is solved in units where the largest weight is of order
  // one, so solver tolerances do not depend on the price level.
  double max_weight = 0.0;
  for (const double p : fc.price) max_weight = std::max(max_weight, std::abs(energy_weight(p, cfg.dt)));
  const double scale = power_of_two_scale(max_weight);

  for (int it = 0; it < cfg.limit_iterations; ++it) {
    milp::MixedIntegerProgram mip = build_problem(fc, lp, limits, cfg);
    milp::Solution sol = milp::branch_and_bound(scaled_costs(mip, scale), bnb);
    sol.objective /= scale;
    diag.limit_iterations = it + 1;
    diag.nodes += sol.nodes;
    diag.lp_iterations += sol.iterations;
    if (sol.status == milp::Status::infeasible && !have && !edge_tried) {
      edge_tried = true;
      limits.assign(cfg.horizon, power_limits(x_est, m, cfg.limits, true));
      continue;
    }
    if (sol.status != milp::Status::optimal) {
      if (!have) {
        if (sol.status == milp::Status::infeasible) diagnose_infeasible(fc, lp, limits, cfg);
        throw NumericError(std::string("scheduler: branch and bound ended with status ") +
                           milp::to_string(sol.status));
      }
      break;
    }
    best = decode_solution(sol.x, fc, lp, limits);
    best.objective = sol.objective;
    best.problem = std::move(mip);
    have = true;

    for (std::size_t k = 0; k < cfg.horizon; ++k) {
      u.q_tes[k] = best.steps[k].decision.q_tes_ref;
      u.q_tes_sec[k] = best.steps[k].decision.q_tes_sec_ref;
    }
    best_u = u;
    const OutputTrajectory nl = rollout(x_est, u, fc.t_surr, m, ro);
    double gap = 0.0;
    for (std::size_t k = 0; k < cfg.horizon; ++k) {
      gap = std::max(gap, std::abs(nl.gamma[k] - best.steps[k].gamma));
    }
    lp = jacobian(x_est, fc.t_surr, m, ro, jo, u);
    std::vector<PowerLimits> next = limits_along(x_est, lp, u, m, cfg.limits);
    diag.limit_violation = limit_violation(best, next);
    if (diag.limit_violation <= cfg.limit_tolerance && gap <= cfg.resim_tolerance) {
      diag.converged = true;
      break;
    }
    // Maximum limits only tighten between passes, so the sequence settles.
    for (std::size_t k = 0; k < cfg.horizon; ++k) {
      next[k].q_tes_max = std::min(next[k].q_tes_max, limits[k].q_tes_max);
      next[k].q_tes_sec_max = std::min(next[k].q_tes_sec_max, limits[k].q_tes_sec_max);
      next[k].q_tes_min = std::min(next[k].q_tes_min, next[k].q_tes_max);
      next[k].q_tes_sec_min = std::min(next[k].q_tes_sec_min, next[k].q_tes_sec_max);
    }
    limits = std::move(next);
  }

  const OutputTrajectory nl = rollout(x_est, best_u, fc.t_surr, m, ro);
  for (std::size_t k = 0; k < cfg.horizon; ++k) {
    diag.resim_gamma_error = std::max(diag.resim_gamma_error, std::abs(nl.gamma[k] - best.steps[k].gamma));
  }
  best.diagnostics = diag;
  return best;
}

StepPlan step_receding_horizon(const Schedule& s) {
  if (s.steps.empty()) throw ConfigError("empty schedule");
  return s.steps.front();
}

}  // namespace tes
