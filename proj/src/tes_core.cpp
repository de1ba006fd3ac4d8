#include "tes/tes_core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "tes/errors.hpp"

namespace tes {

namespace {

constexpr double kPi = std::numbers::pi;

void require(bool ok, const char* what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

void PcmProperties::validate() const {
  require(cp_sensible > 0.0, "pcm: cp_sensible must be positive");
  require(rho > 0.0, "pcm: rho must be positive");
  require(kappa > 0.0, "pcm: kappa must be positive");
  require(h_lat > 0.0, "pcm: h_lat must be positive");
  require(std::abs((h_lat_plus - h_lat_minus) - h_lat) <= 1e-9 * h_lat,
          "pcm: h_lat_plus - h_lat_minus must equal h_lat");
}

void TankGeometry::validate() const {
  require(l_tank > 0.0 && d_tank > 0.0, "geometry: tank dimensions must be positive");
  require(n_pcm >= 1, "geometry: n_pcm must be at least 1");
  require(n_lay >= 2, "geometry: n_lay must be at least 2");
  require(pcm_radius() > 0.0, "geometry: d_pcm - 2 e_pcm must be positive");
  require(kappa_coat > 0.0, "geometry: kappa_coat must be positive");
  require(v_int > 0.0, "geometry: v_int must be positive");
  require(alpha_surr >= 0.0, "geometry: alpha_surr must be non-negative");
  require(l_pcm > 0.0, "geometry: l_pcm must be positive");
  require(r_film >= 0.0, "geometry: r_film must be non-negative");
}

void IntermediateFluidProperties::validate() const {
  require(cp > 0.0, "fluid: cp must be positive");
  require(rho > 0.0, "fluid: rho must be positive");
}

void LimitConfig::validate() const {
  require(dt_charge > 0.0 && dt_discharge > 0.0, "limits: driving temperature differences must be positive");
  require(q_e_min >= 0.0 && q_e_min <= q_e_max, "limits: need 0 <= q_e_min <= q_e_max");
  require(min_fraction >= 0.0 && min_fraction <= 1.0, "limits: min_fraction must be in [0, 1]");
}

LayerGeometry layer_geometry(const TankGeometry& geom, const PcmProperties& props) {
  const double radius = geom.pcm_radius();
  if (!(radius > 0.0)) throw ConfigError("geometry: non-positive PCM radius");
  if (geom.n_lay < 1) throw ConfigError("geometry: n_lay must be positive");

  const auto n = static_cast<std::size_t>(geom.n_lay);
  LayerGeometry lg;
  lg.radius = radius;
  lg.r_inner.resize(n);
  lg.r_outer.resize(n);
  lg.volume.resize(n);
  lg.mass.resize(n);

  // Equal mass at constant density means equal cross-section area.
  const double total_volume = kPi * radius * radius * geom.l_pcm;
  for (std::size_t j = 0; j < n; ++j) {
    lg.r_inner[j] = j == 0 ? 0.0 : lg.r_outer[j - 1];
    lg.r_outer[j] = j + 1 == n ? radius
                               : radius * std::sqrt(static_cast<double>(j + 1) / geom.n_lay);
    lg.volume[j] = total_volume / geom.n_lay;
    lg.mass[j] = lg.volume[j] * props.rho;
  }
  lg.cylinder_mass = total_volume * props.rho;
  return lg;
}

TankModel::TankModel(PcmProperties pcm_, TankGeometry geom_, IntermediateFluidProperties fluid_,
                     std::optional<SensibleBounds> bounds_)
    : pcm(pcm_), geom(geom_), fluid(fluid_) {
  pcm.validate();
  geom.validate();
  fluid.validate();
  bounds = bounds_.value_or(SensibleBounds::defaults_for(pcm));
  require(bounds.h_min <= pcm.h_lat_minus && bounds.h_max >= pcm.h_lat_plus,
          "sensible bounds must enclose the latency band");
  layers = layer_geometry(geom, pcm);
}

double TankModel::cylinder_capacity() const {
  return layers.cylinder_mass * (pcm.h_lat_plus - pcm.h_lat_minus);
}

TesState TankModel::uniform_state(double gamma, double t_int) const {
  const double h = pcm.h_lat_plus - gamma * (pcm.h_lat_plus - pcm.h_lat_minus);
  return TesState{std::vector<double>(n_lay(), h), t_int};
}

double TankModel::total_energy(const TesState& s) const {
  const double h_sum = std::accumulate(s.h.begin(), s.h.end(), 0.0);
  return fluid_heat_capacity() * s.t_int + geom.n_pcm * layers.layer_mass() * h_sum;
}

void TankModel::check_state(const TesState& s) const {
  if (s.h.size() != n_lay()) {
    throw InvariantError("state has " + std::to_string(s.h.size()) + " layers, model has " +
                         std::to_string(n_lay()));
  }
  if (!std::isfinite(s.t_int)) throw NumericError("state: non-finite fluid temperature");
  for (double h : s.h) {
    if (!std::isfinite(h)) throw NumericError("state: non-finite layer enthalpy");
  }
}

double charge_ratio(const TesState& state, const LayerGeometry& lg, const PcmProperties& props) {
  const double u_max = lg.cylinder_mass * props.h_lat_plus;
  const double u_min = lg.cylinder_mass * props.h_lat_minus;
  const double u = lg.layer_mass() * std::accumulate(state.h.begin(), state.h.end(), 0.0);
  return (u_max - u) / (u_max - u_min);
}

std::optional<std::size_t> find_outermost_latent_layer(const TesState& state,
                                                       const PcmProperties& props) {
  for (std::size_t j = state.h.size(); j-- > 0;) {
    if (state.h[j] > props.h_lat_minus && state.h[j] < props.h_lat_plus) return j;
  }
  return std::nullopt;
}

std::optional<std::size_t> front_layer(const TesState& state, const PcmProperties& props,
                                       HeatFlow flow) {
  for (std::size_t j = state.h.size(); j-- > 0;) {
    const bool open = flow == HeatFlow::charging ? state.h[j] > props.h_lat_minus
                                                 : state.h[j] < props.h_lat_plus;
    if (open) return j;
  }
  return std::nullopt;
}

double front_radius(const TesState& state, const TankModel& m, HeatFlow flow) {
  const auto j = front_layer(state, m.pcm, flow);
  if (!j) return m.radius_floor();
  const double h = state.h[*j];
  const double done = flow == HeatFlow::charging ? (m.pcm.h_lat_plus - h) / m.pcm.h_lat
                                                 : (h - m.pcm.h_lat_minus) / m.pcm.h_lat;
  const double phi = std::clamp(done, 0.0, 1.0);
  const double ro = m.layers.r_outer[*j];
  const double ri = m.layers.r_inner[*j];
  const double r = std::sqrt(ro * ro - phi * (ro * ro - ri * ri));
  return std::max(r, m.radius_floor());
}

ColdEnergyResult apply_cold_energy(const TesState& state, double du_cold, const LayerGeometry& lg,
                                   const PcmProperties& props, const SensibleBounds& bounds) {
  ColdEnergyResult out{state, 0.0, false};
  if (du_cold == 0.0) return out;
  if (!std::isfinite(du_cold)) throw NumericError("apply_cold_energy: non-finite energy");

  auto& h = out.state.h;
  const double m = lg.layer_mass();
  const bool charging = du_cold > 0.0;
  const HeatFlow flow = charging ? HeatFlow::charging : HeatFlow::discharging;

  // Peel the latent capacity from the outside in. Positive energy lowers h.
  double remaining = du_cold;
  while (remaining != 0.0) {
    const auto j = front_layer(out.state, props, flow);
    if (!j) break;
    if (charging) {
      const double capacity = (h[*j] - props.h_lat_minus) * m;
      if (remaining < capacity) {
        h[*j] -= remaining / m;
        remaining = 0.0;
      } else {
        h[*j] = props.h_lat_minus;
        remaining -= capacity;
      }
    } else {
      const double capacity = (props.h_lat_plus - h[*j]) * m;
      if (-remaining < capacity) {
        h[*j] -= remaining / m;
        remaining = 0.0;
      } else {
        h[*j] = props.h_lat_plus;
        remaining += capacity;
      }
    }
  }
  if (remaining == 0.0) return out;

  // No latent capacity left in this direction: uniform sensible change.
  const double dh = -remaining / (m * static_cast<double>(h.size()));
  double placed = 0.0;
  bool clamped = false;
  for (double& hj : h) {
    const double target = hj + dh;
    const double next = std::clamp(target, bounds.h_min, bounds.h_max);
    clamped = clamped || next != target;
    placed += (hj - next) * m;
    hj = next;
  }
  if (clamped) {
    out.residual = remaining - placed;
    out.saturated = true;
  }
  return out;
}

double shell_resistance_at_radius(double r_front, const LayerGeometry& lg,
                                  const TankGeometry& geom, const PcmProperties& props) {
  const double r_pcm = lg.radius;
  const double r_coat = geom.d_pcm / 2.0;
  const double pcm_term =
      r_front >= r_pcm ? 0.0 : std::log(r_pcm / r_front) / (2.0 * kPi * props.kappa * geom.l_pcm);
  const double coat_term = std::log(r_coat / r_pcm) / (2.0 * kPi * geom.kappa_coat * geom.l_pcm);
  return (pcm_term + coat_term + geom.r_film) / geom.n_pcm;
}

double sensible_shell_resistance(std::optional<std::size_t> j_boundary, const LayerGeometry& lg,
                                 const TankGeometry& geom, const PcmProperties& props) {
  const double r = j_boundary ? lg.r_outer.at(*j_boundary) : lg.r_outer.front() / 2.0;
  return shell_resistance_at_radius(r, lg, geom, props);
}

PowerLimits power_limits(const TesState& state, const TankModel& m, const LimitConfig& cfg,
                         bool reset_front) {
  const auto resistance = [&](HeatFlow flow) {
    if (m.fixed_resistance) return *m.fixed_resistance;
    const auto j = reset_front ? std::optional<std::size_t>(m.n_lay() - 1)
                               : front_layer(state, m.pcm, flow);
    return sensible_shell_resistance(j, m.layers, m.geom, m.pcm);
  };

  PowerLimits lim;
  lim.q_e_min = cfg.q_e_min;
  lim.q_e_max = cfg.q_e_max;
  lim.q_tes_max = cfg.dt_charge / resistance(HeatFlow::charging);
  lim.q_tes_min = cfg.min_fraction * lim.q_tes_max;
  lim.q_tes_sec_max = cfg.dt_discharge / resistance(HeatFlow::discharging);
  lim.q_tes_sec_min = cfg.min_fraction * lim.q_tes_sec_max;
  return lim;
}

double tank_surface_area(const TankGeometry& geom) {
  const double r = geom.d_tank / 2.0;
  return kPi * geom.d_tank * geom.l_tank + 2.0 * kPi * r * r;
}

double thermal_losses(double t_int, double t_surr, const TankGeometry& geom) {
  return geom.alpha_surr * tank_surface_area(geom) * (t_surr - t_int);
}

StepResult simulate_step(const TesState& state, double q_tes, double q_tes_sec, double t_surr,
                         double dt, int n_sub, const TankModel& m) {
  if (!(q_tes >= 0.0) || !(q_tes_sec >= 0.0)) {
    throw ConfigError("simulate_step: powers must be non-negative");
  }
  if (!(dt > 0.0) || n_sub < 1) throw ConfigError("simulate_step: need dt > 0 and n_sub >= 1");
  m.check_state(state);

  StepResult res{state, 0.0, 0.0, 0.0, false};
  TesState& s = res.state;
  const double h_sub = dt / n_sub;
  const double cap = m.fluid_heat_capacity();
  const double g_loss = m.geom.alpha_surr * tank_surface_area(m.geom);
  const double p_ext = q_tes_sec - q_tes;

  for (int k = 0; k < n_sub; ++k) {
    // Flux direction follows the fluid temperature relative to the phase change.
    const HeatFlow flow = s.t_int >= m.pcm.t_lat ? HeatFlow::discharging : HeatFlow::charging;
    double t_eff = m.pcm.t_lat;
    double r_front = m.radius_floor();
    if (front_layer(s, m.pcm, flow)) {
      r_front = front_radius(s, m, flow);
    } else {
      const double h_mean = std::accumulate(s.h.begin(), s.h.end(), 0.0) / s.h.size();
      const double edge = flow == HeatFlow::discharging ? m.pcm.h_lat_plus : m.pcm.h_lat_minus;
      t_eff = m.pcm.t_lat + (h_mean - edge) / m.pcm.cp_sensible;
    }
    const double resistance =
        m.fixed_resistance ? *m.fixed_resistance
                           : shell_resistance_at_radius(r_front, m.layers, m.geom, m.pcm);
    const double g_pcm = 1.0 / resistance;

    // C dT/dt = p_ext + g_loss (T_surr - T) - g_pcm (T - t_eff), solved exactly.
    const double g = g_loss + g_pcm;
    const double rate = g / cap;
    const double t_inf = (p_ext + g_loss * t_surr + g_pcm * t_eff) / g;
    const double t0 = s.t_int;
    const double decay = -std::expm1(-rate * h_sub);  // 1 - exp(-rate h)
    const double t1 = t_inf + (t0 - t_inf) * (1.0 - decay);
    const double t_integral = t_inf * h_sub + (t0 - t_inf) * decay / rate;
    const double e_surr = g_loss * (t_surr * h_sub - t_integral);
    // Closing the fluid balance keeps the step conservative to round-off.
    const double e_pcm = p_ext * h_sub + e_surr - cap * (t1 - t0);
    if (!std::isfinite(t1) || !std::isfinite(e_pcm)) {
      throw NumericError("simulate_step: non-finite fluid temperature");
    }

    auto upd = apply_cold_energy(s, -e_pcm / m.geom.n_pcm, m);
    s.h = std::move(upd.state.h);
    s.t_int = t1;
    res.e_surr += e_surr;
    res.e_pcm += e_pcm;
    res.residual += upd.residual;
    res.saturated = res.saturated || upd.saturated;
  }
  return res;
}

}  // namespace tes
