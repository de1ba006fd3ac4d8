#pragma once

// Reconstruction of the layer enthalpies from the measured fluid temperature
// and the powers applied over the last sampling period.

#include "tes/tes_core.hpp"

namespace tes {

struct Measurement {
  double t_int = 0.0;   // K
  double t_surr = 0.0;  // K
  double time = 0.0;    // s
};

struct EstimatedState {
  TesState state;       // estimated layers, measured t_int
  double gamma = 0.0;
  double du_tes = 0.0;  // J, last whole-tank transferred-energy estimate
  double residual = 0.0;  // J per cylinder left unplaced by the last update
  bool saturated = false;
};

/// Heat gained from the surroundings over dt with the fluid temperature
/// averaged by the trapezoidal rule, J.
double tustin_losses(double t_int_prev, double t_int_now, double t_surr, double dt,
                     const TankGeometry& geom);

/// Energy the PCM took from the fluid over the period, J for the whole tank.
/// Positive while the tank charges.
double estimate_transferred_energy(const Measurement& now, const Measurement& prev,
                                   double q_tes_prev, double q_tes_sec_prev, double dt,
                                   const TankModel& m);

/// Per-cylinder cold energy for the layer update.
inline double cold_energy_per_cylinder(double du_tes, const TankModel& m) {
  return du_tes / m.geom.n_pcm;
}

/// Uniform latent start: every layer at (1 - gamma0) h_lat_plus.
EstimatedState initial_estimate(double gamma0, const Measurement& m0, const TankModel& m);

/// One estimator step: layers advanced by the transferred energy, fluid
/// temperature overwritten by the measurement.
EstimatedState update_state(const EstimatedState& prev, double du_tes, const Measurement& now,
                            const TankModel& m);

}  // namespace tes
