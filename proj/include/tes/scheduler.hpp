#pragma once

// Mixed-integer receding-horizon scheduler.
//
// Decision variables per horizon step k (column index 4k + offset):
//   0 q_tes      charging power, W
//   1 q_tes_sec  discharging power towards the secondary fluid, W
//   2 d_tes      charging active
//   3 d_tes_sec  discharging active
// followed by one evaporator binary d_e_sec per step (index 4 ph + k).
// The evaporator power is eliminated: q_e_sec = demand - q_tes_sec.

#include <cstddef>
#include <string>
#include <vector>

#include "tes/milp.hpp"
#include "tes/pnmpc.hpp"
#include "tes/tes_core.hpp"

namespace tes {

struct ModeFlags {
  bool d_e_sec = false;
  bool d_tes = false;
  bool d_tes_sec = false;
};

enum class OperatingMode { mode1 = 1, mode2 = 2, mode3 = 3, mode4 = 4 };

/// Mode 1 evaporator only, 2 evaporator plus charging, 3 evaporator plus
/// discharging, 4 discharging only. Throws InvariantError for other flags.
OperatingMode classify_mode(const ModeFlags& flags);
inline int mode_number(OperatingMode m) { return static_cast<int>(m); }

/// Evaporator power needed so that evaporator plus tank meet the demand.
/// May be negative; callers treat that as infeasible.
inline double derive_evaporator_power(double demand, double q_tes_sec_ref) {
  return demand - q_tes_sec_ref;
}

struct PartialDecision {
  double q_tes_ref = 0.0;
  double q_tes_sec_ref = 0.0;
  bool d_tes = false;
  bool d_tes_sec = false;
};

struct StepPlan {
  PartialDecision decision;
  bool d_e_sec = false;
  double q_e_sec_ref = 0.0;
  OperatingMode mode = OperatingMode::mode1;
  double gamma = 0.0;   // predicted charge ratio after the step
  double t_int = 0.0;   // predicted fluid temperature after the step, K
  PowerLimits limits;   // limits the step was solved with

  ModeFlags flags() const { return {d_e_sec, decision.d_tes, decision.d_tes_sec}; }
};

struct ScheduleDiagnostics {
  int limit_iterations = 0;
  bool converged = false;
  double limit_violation = 0.0;   // last solution against its recomputed limits, relative
  std::size_t nodes = 0;          // branch-and-bound nodes, all iterations
  std::size_t lp_iterations = 0;  // simplex pivots, all iterations
  double resim_gamma_error = 0.0; // max |gamma| gap between prediction and nonlinear rollout
};

struct Schedule {
  std::vector<StepPlan> steps;
  double objective = 0.0;  // EUR over the horizon
  ScheduleDiagnostics diagnostics;
  milp::MixedIntegerProgram problem;  // last problem solved

  std::size_t size() const { return steps.size(); }
};

struct SchedulerConfig {
  std::size_t horizon = 12;
  double dt = 3600.0;  // s
  double gamma_min = 0.05;
  double gamma_max = 0.95;
  int limit_iterations = 5;
  double limit_tolerance = 0.01;  // accepted limit violation, relative to the maximum power
  double resim_tolerance = 0.02;  // accepted gap between predicted and re-simulated gamma
  int n_sub = 120;
  double jacobian_eps = 0.0;  // W; <= 0 uses default_perturbation
  unsigned threads = 1;
  LimitConfig limits;
  milp::BnbOptions bnb;

  void validate() const;
};

/// Forecasts over the horizon: demand in W, price in EUR/kWh, ambient in K.
struct HorizonForecast {
  std::vector<double> demand;
  std::vector<double> price;
  std::vector<double> t_surr;
};

/// EUR per W held over one step.
inline double energy_weight(double price_eur_kwh, double dt) {
  return price_eur_kwh * dt / 3.6e6;
}

/// Assembles the mixed-integer program for fixed per-step power limits.
milp::MixedIntegerProgram build_problem(const HorizonForecast& fc, const LinearPrediction& lp,
                                        const std::vector<PowerLimits>& limits,
                                        const SchedulerConfig& cfg);

/// Column helpers for the layout above.
inline std::size_t col_q_tes(std::size_t k) { return 4 * k; }
inline std::size_t col_q_tes_sec(std::size_t k) { return 4 * k + 1; }
inline std::size_t col_d_tes(std::size_t k) { return 4 * k + 2; }
inline std::size_t col_d_tes_sec(std::size_t k) { return 4 * k + 3; }
inline std::size_t col_d_e_sec(std::size_t ph, std::size_t k) { return 4 * ph + k; }

/// Per-step limits along a predicted input trajectory: the maximum from the
/// front position after the step, the minimum from the position before it.
std::vector<PowerLimits> limits_along(const TesState& x0, const LinearPrediction& lp,
                                      const InputTrajectory& u, const TankModel& m,
                                      const LimitConfig& cfg);

/// Solves the scheduling problem by successive linearization: each pass
/// relinearizes the tank about the incumbent inputs and recomputes the power
/// limits along it. Throws SchedulingInfeasible when no schedule exists.
Schedule solve_schedule(const TesState& x_est, const HorizonForecast& fc, const TankModel& m,
                        const SchedulerConfig& cfg);

/// Converts a MIP solution into a schedule (binaries rounded, inactive
/// powers zeroed, q_e_sec derived from the demand).
Schedule decode_solution(const std::vector<double>& x, const HorizonForecast& fc,
                         const LinearPrediction& lp, const std::vector<PowerLimits>& limits);

/// First-step references of a schedule.
StepPlan step_receding_horizon(const Schedule& s);

}  // namespace tes
