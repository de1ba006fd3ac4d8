#include "tes/estimator.hpp"

#include <cmath>

#include "tes/errors.hpp"

namespace tes {

double tustin_losses(double t_int_prev, double t_int_now, double t_surr, double dt,
                     const TankGeometry& geom) {
  if (!(dt > 0.0)) throw ConfigError("tustin_losses: dt must be positive");
  return geom.alpha_surr * tank_surface_area(geom) * (t_surr - 0.5 * (t_int_prev + t_int_now)) * dt;
}

double estimate_transferred_energy(const Measurement& now, const Measurement& prev,
                                   double q_tes_prev, double q_tes_sec_prev, double dt,
                                   const TankModel& m) {
  // Fluid balance: what the fluid lost beyond the external flows went into the PCM.
  const double fluid = m.fluid_heat_capacity() * (now.t_int - prev.t_int);
  const double flows = (q_tes_prev - q_tes_sec_prev) * dt;
  // The ambient temperature is taken as constant over the period.
  const double losses = tustin_losses(prev.t_int, now.t_int, prev.t_surr, dt, m.geom);
  return fluid + flows - losses;
}

EstimatedState initial_estimate(double gamma0, const Measurement& m0, const TankModel& m) {
  if (!(gamma0 >= 0.0 && gamma0 <= 1.0)) throw ConfigError("initial estimate: gamma0 outside [0, 1]");
  EstimatedState e;
  e.state = m.uniform_state(gamma0, m0.t_int);
  e.gamma = charge_ratio(e.state, m);
  return e;
}

EstimatedState update_state(const EstimatedState& prev, double du_tes, const Measurement& now,
                            const TankModel& m) {
  if (!std::isfinite(du_tes) || !std::isfinite(now.t_int)) {
    throw NumericError("estimator: non-finite input");
  }
  const ColdEnergyResult r = apply_cold_energy(prev.state, cold_energy_per_cylinder(du_tes, m), m);
  EstimatedState e;
  e.state = r.state;
  e.state.t_int = now.t_int;
  e.gamma = charge_ratio(e.state, m);
  e.du_tes = du_tes;
  e.residual = r.residual;
  e.saturated = r.saturated;
  return e;
}

}  // namespace tes
