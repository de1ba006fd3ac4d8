#pragma once

// Layered enthalpy model of a PCM cold-storage tank.
//
// Every PCM cylinder is split into n_lay concentric layers of equal mass.
// Layer index 0 is the innermost, index n_lay - 1 the outermost. All
// cylinders are assumed to behave identically, so per-cylinder energies are
// multiplied by n_pcm to obtain tank quantities.
//
// Cold-energy sign convention: a positive cold energy means the PCM is being
// charged (frozen), i.e. layer enthalpies decrease.

#include <cstddef>
#include <optional>
#include <vector>

namespace tes {

inline constexpr double kCelsiusToKelvin = 273.15;

struct PcmProperties {
  double cp_sensible = 3690.0;   // J/(kg K)
  double h_lat = 222000.0;       // J/kg
  double t_lat = -29.0 + kCelsiusToKelvin;  // K
  double kappa = 0.64;           // W/(m K)
  double rho = 1420.0;           // kg/m^3
  double h_lat_minus = 0.0;      // J/kg, fully frozen band edge
  double h_lat_plus = 222000.0;  // J/kg, fully melted band edge

  void validate() const;
};

struct TankGeometry {
  double l_tank = 1.4;   // m
  double d_tank = 0.4;   // m
  double e_tank = 0.005; // m
  int n_pcm = 17;
  double d_pcm = 0.0445;  // m, outer diameter including coating
  double e_pcm = 0.001;   // m, coating thickness
  double kappa_coat = 16.3;  // W/(m K)
  double v_int = 0.109;      // m^3
  double alpha_surr = 0.1;   // W/(m^2 K)
  int n_lay = 20;
  double l_pcm = 1.4;        // m
  double r_film = 0.0;       // K/W per cylinder, convective film on the coating

  double pcm_radius() const { return (d_pcm - 2.0 * e_pcm) / 2.0; }
  void validate() const;
};

struct IntermediateFluidProperties {
  double cp = 3000.0;  // J/(kg K)
  double rho = 1100.0; // kg/m^3

  void validate() const;
};

/// Sensible-zone bounds on layer enthalpy, J/kg.
struct SensibleBounds {
  double h_min = 0.0;
  double h_max = 0.0;

  /// 50 K of subcooling below the frozen edge, 80 K of superheat above the
  /// melted edge.
  static SensibleBounds defaults_for(const PcmProperties& p) {
    return {p.h_lat_minus - 50.0 * p.cp_sensible, p.h_lat_plus + 80.0 * p.cp_sensible};
  }
};

struct LayerGeometry {
  std::vector<double> r_inner;  // m
  std::vector<double> r_outer;  // m
  std::vector<double> volume;   // m^3
  std::vector<double> mass;     // kg
  double cylinder_mass = 0.0;   // kg
  double radius = 0.0;          // m, PCM radius (outer radius of the last layer)

  std::size_t size() const { return mass.size(); }
  /// Mass of one layer; all layers share it.
  double layer_mass() const { return mass.front(); }
};

struct TesState {
  std::vector<double> h;  // J/kg per layer, innermost first
  double t_int = 0.0;     // K

  bool operator==(const TesState&) const = default;
};

struct PowerLimits {
  double q_e_min = 0.0;
  double q_e_max = 0.0;
  double q_tes_min = 0.0;
  double q_tes_max = 0.0;
  double q_tes_sec_min = 0.0;
  double q_tes_sec_max = 0.0;
};

struct LimitConfig {
  double dt_charge = 10.0;     // K, driving difference while charging
  double dt_discharge = 10.0;  // K, driving difference while discharging
  double q_e_min = 150.0;      // W
  double q_e_max = 1500.0;     // W
  double min_fraction = 0.05;  // TES minimum power as a fraction of the maximum

  void validate() const;
};

enum class HeatFlow { charging, discharging };

/// Everything needed to evaluate the tank: properties, geometry and the
/// derived layer discretization. Construct once; all functions are pure.
struct TankModel {
  PcmProperties pcm;
  TankGeometry geom;
  IntermediateFluidProperties fluid;
  SensibleBounds bounds;
  LayerGeometry layers;
  /// When set, the PCM-to-fluid resistance is this constant (K/W, whole
  /// tank) instead of the front-dependent shell resistance.
  std::optional<double> fixed_resistance;

  TankModel() : TankModel(PcmProperties{}, TankGeometry{}, IntermediateFluidProperties{}) {}
  TankModel(PcmProperties pcm, TankGeometry geom, IntermediateFluidProperties fluid,
            std::optional<SensibleBounds> bounds = std::nullopt);

  std::size_t n_lay() const { return layers.size(); }
  /// Latent capacity of one cylinder, U_max - U_min, J.
  double cylinder_capacity() const;
  /// Latent capacity of the whole tank, J.
  double tank_capacity() const { return cylinder_capacity() * geom.n_pcm; }
  /// Heat capacity of the intermediate fluid, J/K.
  double fluid_heat_capacity() const { return fluid.cp * fluid.rho * geom.v_int; }
  /// Innermost radius used for a fully sensible cylinder.
  double radius_floor() const { return layers.r_outer.front() / 2.0; }

  /// Uniform latent state for a given charge ratio with the fluid at t_int.
  TesState uniform_state(double gamma, double t_int) const;
  /// Tank energy relative to 0 J/kg and 0 K: fluid plus all PCM.
  double total_energy(const TesState& s) const;
  void check_state(const TesState& s) const;
};

LayerGeometry layer_geometry(const TankGeometry& geom, const PcmProperties& props);

double charge_ratio(const TesState& state, const LayerGeometry& lg,
                    const PcmProperties& props);
inline double charge_ratio(const TesState& state, const TankModel& m) {
  return charge_ratio(state, m.layers, m.pcm);
}

/// Largest index whose enthalpy lies strictly inside the latency band.
std::optional<std::size_t> find_outermost_latent_layer(const TesState& state,
                                                       const PcmProperties& props);

/// Outermost layer that can still take energy in the given direction: for
/// charging the outermost layer above h_lat_minus, for discharging the
/// outermost layer below h_lat_plus. Coincides with the outermost latent
/// layer while a single charge or discharge process is under way, and sits
/// at the cylinder edge right after the direction reverses.
std::optional<std::size_t> front_layer(const TesState& state, const PcmProperties& props,
                                       HeatFlow flow);

/// Radius of the phase front inside the active layer, interpolated by the
/// latent fraction already processed (equal-area within the layer).
double front_radius(const TesState& state, const TankModel& m, HeatFlow flow);

struct ColdEnergyResult {
  TesState state;
  double residual = 0.0;  // J per cylinder that could not be placed
  bool saturated = false;
};

/// Distributes cold energy (J per cylinder, > 0 charges) over the layers,
/// outermost unfinished layer first, then uniformly as sensible change once
/// the latent capacity in that direction is exhausted.
ColdEnergyResult apply_cold_energy(const TesState& state, double du_cold,
                                   const LayerGeometry& lg, const PcmProperties& props,
                                   const SensibleBounds& bounds);
inline ColdEnergyResult apply_cold_energy(const TesState& state, double du_cold,
                                          const TankModel& m) {
  return apply_cold_energy(state, du_cold, m.layers, m.pcm, m.bounds);
}

/// Whole-tank resistance (K/W) between the intermediate fluid and a phase
/// front sitting at radius r_front.
double shell_resistance_at_radius(double r_front, const LayerGeometry& lg,
                                  const TankGeometry& geom, const PcmProperties& props);

/// Whole-tank resistance with the front at the outer radius of layer
/// j_boundary; nullopt means a fully sensible cylinder.
double sensible_shell_resistance(std::optional<std::size_t> j_boundary,
                                 const LayerGeometry& lg, const TankGeometry& geom,
                                 const PcmProperties& props);

/// Achievable powers for the current enthalpy distribution. With
/// reset_front the TES fronts are taken at the cylinder edge, as after a
/// charge/discharge reversal.
PowerLimits power_limits(const TesState& state, const TankModel& m, const LimitConfig& cfg,
                         bool reset_front = false);

double tank_surface_area(const TankGeometry& geom);

/// Heat gained from the surroundings, W (positive when T_surr > T_int).
double thermal_losses(double t_int, double t_surr, const TankGeometry& geom);

struct StepResult {
  TesState state;
  double e_surr = 0.0;   // J gained from the surroundings over the step
  double e_pcm = 0.0;    // J transferred from fluid into the PCM (all cylinders)
  double residual = 0.0; // J per cylinder left unplaced by the layer update
  bool saturated = false;
};

/// Advances the tank by dt seconds under constant charging power q_tes and
/// discharging power q_tes_sec, using n_sub substeps. Within a substep the
/// front resistance is frozen and the fluid temperature is integrated
/// exactly.
StepResult simulate_step(const TesState& state, double q_tes, double q_tes_sec,
                         double t_surr, double dt, int n_sub, const TankModel& m);

}  // namespace tes
