#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tes/errors.hpp"
#include "tes/tes_core.hpp"
#include "test_support.hpp"

namespace tes {
namespace {

// Reference values from tests/oracles/derive_constants.py.
constexpr double kCylinderMass = 2.82022736008164;
constexpr double kTankArea = 2.01061929829747;
constexpr double kLosses50K = 10.0530964914873;
constexpr double kResistanceInnermost = 0.0156696534951749;
constexpr double kResistanceEdge = 1.88656959351363e-05;
constexpr double kChargeLimitHalfDepth = 2747.1644368853;

TEST(LayerGeometry, EqualMassLayersFillTheCylinder) {
  const TankModel m;
  const auto& lg = m.layers;
  ASSERT_EQ(lg.size(), 20u);
  EXPECT_NEAR(lg.cylinder_mass, kCylinderMass, 1e-12 * kCylinderMass);
  double volume = 0.0;
  for (std::size_t j = 0; j < lg.size(); ++j) {
    EXPECT_DOUBLE_EQ(lg.mass[j], lg.mass.front());
    EXPECT_LT(lg.r_inner[j], lg.r_outer[j]);
    if (j > 0) EXPECT_DOUBLE_EQ(lg.r_inner[j], lg.r_outer[j - 1]);
    volume += lg.volume[j];
  }
  const double r = m.geom.pcm_radius();
  EXPECT_NEAR(volume, M_PI * r * r * m.geom.l_pcm, 1e-15);
  EXPECT_DOUBLE_EQ(lg.r_outer.back(), r);
}

TEST(ChargeRatio, BandEdgesAndMidpoint) {
  const TankModel m;
  EXPECT_NEAR(charge_ratio(m.uniform_state(0.0, 250.0), m), 0.0, 1e-15);
  EXPECT_NEAR(charge_ratio(m.uniform_state(1.0, 250.0), m), 1.0, 1e-15);
  EXPECT_NEAR(charge_ratio(m.uniform_state(0.37, 250.0), m), 0.37, 1e-14);
}

TEST(ChargeRatio, StaysInUnitIntervalInsideTheBand) {
  const TankModel m;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> h(m.pcm.h_lat_minus, m.pcm.h_lat_plus);
  for (int trial = 0; trial < 200; ++trial) {
    TesState s{std::vector<double>(m.n_lay()), 250.0};
    for (auto& v : s.h) v = h(rng);
    const double g = charge_ratio(s, m);
    EXPECT_GE(g, 0.0);
    EXPECT_LE(g, 1.0);
  }
}

TEST(FrontLayer, OutermostLatentAndReversal) {
  const TankModel m;
  TesState s = m.uniform_state(0.5, 250.0);
  EXPECT_EQ(find_outermost_latent_layer(s, m.pcm), m.n_lay() - 1);
  // Outer three layers frozen: charging continues inside, discharging
  // starts again at the edge.
  for (std::size_t j = m.n_lay() - 3; j < m.n_lay(); ++j) s.h[j] = m.pcm.h_lat_minus;
  EXPECT_EQ(find_outermost_latent_layer(s, m.pcm), m.n_lay() - 4);
  EXPECT_EQ(front_layer(s, m.pcm, HeatFlow::charging), m.n_lay() - 4);
  EXPECT_EQ(front_layer(s, m.pcm, HeatFlow::discharging), m.n_lay() - 1);
  for (auto& h : s.h) h = m.pcm.h_lat_minus;
  EXPECT_FALSE(find_outermost_latent_layer(s, m.pcm).has_value());
  EXPECT_FALSE(front_layer(s, m.pcm, HeatFlow::charging).has_value());
}

TEST(ApplyColdEnergy, ZeroEnergyIsIdentity) {
  const TankModel m;
  const TesState s = m.uniform_state(0.3, 250.0);
  const auto r = apply_cold_energy(s, 0.0, m);
  EXPECT_EQ(r.state, s);
  EXPECT_EQ(r.residual, 0.0);
}

TEST(ApplyColdEnergy, TwoLayersQuarterCapacity) {
  TankGeometry g;
  g.n_lay = 2;
  const TankModel m(PcmProperties{}, g, IntermediateFluidProperties{});
  const double mid = 0.5 * (m.pcm.h_lat_minus + m.pcm.h_lat_plus);
  const TesState s{{mid, mid}, 250.0};
  const double gamma0 = charge_ratio(s, m);
  const auto r = apply_cold_energy(s, 0.25 * m.cylinder_capacity(), m);
  EXPECT_NEAR(r.state.h[1], mid - 0.5 * m.pcm.h_lat, 1e-9);
  EXPECT_EQ(r.state.h[0], mid);
  EXPECT_NEAR(charge_ratio(r.state, m) - gamma0, 0.25, 1e-12);
}

TEST(ApplyColdEnergy, OverflowMovesToTheNextLayer) {
  const TankModel m;
  TesState s = m.uniform_state(0.2, 250.0);
  const std::size_t edge = m.n_lay() - 1;
  s.h[edge] = m.pcm.h_lat_minus + 10.0;
  const double mass = m.layers.layer_mass();
  const double eps = 5.0;
  const auto r = apply_cold_energy(s, 10.0 * mass + eps, m);
  EXPECT_EQ(r.state.h[edge], m.pcm.h_lat_minus);
  EXPECT_NEAR(r.state.h[edge - 1], s.h[edge - 1] - eps / mass, 1e-9);
}

TEST(ApplyColdEnergy, SensibleOnceLatentIsExhausted) {
  const TankModel m;
  const TesState s = m.uniform_state(1.0, 240.0);
  const double du = 1000.0;
  const auto r = apply_cold_energy(s, du, m);
  const double dh = du / m.layers.cylinder_mass;
  for (double h : r.state.h) EXPECT_NEAR(h, m.pcm.h_lat_minus - dh, 1e-9);
  EXPECT_FALSE(r.saturated);
}

TEST(ApplyColdEnergy, SaturatesAtTheSensibleBound) {
  const TankModel m;
  const TesState s = m.uniform_state(1.0, 240.0);
  const double room = (m.pcm.h_lat_minus - m.bounds.h_min) * m.layers.cylinder_mass;
  const auto r = apply_cold_energy(s, room + 123.0, m);
  EXPECT_TRUE(r.saturated);
  EXPECT_NEAR(r.residual, 123.0, 1e-6);
  for (double h : r.state.h) EXPECT_DOUBLE_EQ(h, m.bounds.h_min);
}

TEST(ApplyColdEnergy, EnergyExactOnRandomStates) {
  const TankModel m;
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const TesState s = test::random_state(m, rng);
    std::uniform_real_distribution<double> du(-0.6, 0.6);
    const double e = du(rng) * m.cylinder_capacity();
    const auto r = apply_cold_energy(s, e, m);
    double moved = 0.0;
    for (std::size_t j = 0; j < s.h.size(); ++j) moved += (s.h[j] - r.state.h[j]) * m.layers.layer_mass();
    EXPECT_NEAR(moved, e - r.residual, 1e-9 * m.cylinder_capacity());
  }
}

TEST(ApplyColdEnergy, MatchesMicroIncrementOracle) {
  const TankModel m;
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const TesState s = test::random_state(m, rng);
    std::uniform_real_distribution<double> du(-0.4, 0.4);
    const double e = du(rng) * m.cylinder_capacity();
    const TesState fast = apply_cold_energy(s, e, m).state;
    const TesState slow = test::micro_increment_oracle(s, e, m, 10000);
    for (std::size_t j = 0; j < s.h.size(); ++j) {
      EXPECT_NEAR(fast.h[j], slow.h[j], 1e-6 * m.pcm.h_lat) << "layer " << j;
    }
  }
}

TEST(Resistance, PinnedValues) {
  const TankModel m;
  const auto& lg = m.layers;
  EXPECT_NEAR(sensible_shell_resistance(0, lg, m.geom, m.pcm), kResistanceInnermost,
              1e-12 * kResistanceInnermost);
  EXPECT_NEAR(sensible_shell_resistance(m.n_lay() - 1, lg, m.geom, m.pcm), kResistanceEdge,
              1e-12 * kResistanceEdge);
  LimitConfig cfg;
  cfg.dt_charge = 10.0;
  TesState s = m.uniform_state(0.5, 250.0);
  for (std::size_t j = 10; j < m.n_lay(); ++j) s.h[j] = m.pcm.h_lat_minus;
  s.h[9] = m.pcm.h_lat_minus + 1.0;
  const PowerLimits lim = power_limits(s, m, cfg);
  EXPECT_NEAR(lim.q_tes_max, kChargeLimitHalfDepth, 1e-9 * kChargeLimitHalfDepth);
  EXPECT_NEAR(lim.q_tes_min, 0.05 * lim.q_tes_max, 1e-12);
}

TEST(Resistance, EdgeHasNoShellTerm) {
  const TankModel m;
  const double r_coat = m.geom.d_pcm / 2.0;
  const double coat = std::log(r_coat / m.geom.pcm_radius()) /
                      (2.0 * M_PI * m.geom.kappa_coat * m.geom.l_pcm);
  EXPECT_NEAR(sensible_shell_resistance(m.n_lay() - 1, m.layers, m.geom, m.pcm),
              coat / m.geom.n_pcm, 1e-18);
}

TEST(Resistance, FourLayerSubstitution) {
  TankGeometry g;
  g.n_lay = 4;
  g.d_pcm = 0.042;
  g.e_pcm = 0.001;  // R = 0.02 m
  const TankModel m(PcmProperties{}, g, IntermediateFluidProperties{});
  const double with_shell = sensible_shell_resistance(1, m.layers, g, m.pcm);
  const double edge = sensible_shell_resistance(3, m.layers, g, m.pcm);
  const double expected = std::log(0.02 / (0.02 * std::sqrt(0.5))) / (2.0 * M_PI * 0.64 * 1.4);
  EXPECT_NEAR((with_shell - edge) * g.n_pcm, expected, 1e-12);
}

TEST(Resistance, NonIncreasingTowardsTheEdge) {
  const TankModel m;
  double prev = sensible_shell_resistance(std::nullopt, m.layers, m.geom, m.pcm);
  for (std::size_t j = 0; j < m.n_lay(); ++j) {
    const double r = sensible_shell_resistance(j, m.layers, m.geom, m.pcm);
    EXPECT_LE(r, prev);
    prev = r;
  }
}

TEST(PowerLimits, ResetFrontUsesTheEdge) {
  const TankModel m;
  TesState s = m.uniform_state(0.5, 250.0);
  for (std::size_t j = 5; j < m.n_lay(); ++j) s.h[j] = m.pcm.h_lat_minus;
  LimitConfig cfg;
  const PowerLimits deep = power_limits(s, m, cfg);
  const PowerLimits edge = power_limits(s, m, cfg, true);
  EXPECT_LT(deep.q_tes_max, edge.q_tes_max);
  EXPECT_DOUBLE_EQ(edge.q_tes_max,
                   cfg.dt_charge / sensible_shell_resistance(m.n_lay() - 1, m.layers, m.geom, m.pcm));
  EXPECT_EQ(deep.q_e_max, cfg.q_e_max);
  EXPECT_EQ(deep.q_e_min, cfg.q_e_min);
}

TEST(ThermalLosses, PinnedArea) {
  const TankGeometry g;
  EXPECT_NEAR(tank_surface_area(g), kTankArea, 1e-13);
  EXPECT_NEAR(thermal_losses(250.0, 300.0, g), kLosses50K, 1e-12);
  EXPECT_NEAR(thermal_losses(300.0, 250.0, g), -kLosses50K, 1e-12);
}

TEST(SimulateStep, EquilibriumIsAFixedPoint) {
  TankGeometry g;
  const TankModel m(PcmProperties{}, g, IntermediateFluidProperties{});
  const TesState s = m.uniform_state(0.4, m.pcm.t_lat);
  const auto r = simulate_step(s, 0.0, 0.0, m.pcm.t_lat, 3600.0, 60, m);
  EXPECT_NEAR(r.state.t_int, s.t_int, 1e-9);
  for (std::size_t j = 0; j < s.h.size(); ++j) EXPECT_NEAR(r.state.h[j], s.h[j], 1e-9);
}

TEST(SimulateStep, ChargingCoolsAndRaisesGamma) {
  const TankModel m = test::case_study_model();
  const TesState s = m.uniform_state(0.1, m.pcm.t_lat);
  const auto r = simulate_step(s, 800.0, 0.0, 290.0, 3600.0, 120, m);
  EXPECT_LT(r.state.t_int, s.t_int);
  EXPECT_GT(charge_ratio(r.state, m), charge_ratio(s, m));
}

TEST(SimulateStep, ConservesEnergy) {
  const TankModel m = test::case_study_model();
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = test::random_step_case(m, rng);
    const auto r = simulate_step(c.state, c.q_tes, c.q_tes_sec, c.t_surr, 3600.0, 60, m);
    const double delta = m.total_energy(r.state) - m.total_energy(c.state);
    const double expected = (c.q_tes_sec - c.q_tes) * 3600.0 + r.e_surr +
                            r.residual * m.geom.n_pcm;
    EXPECT_NEAR(delta, expected, 1e-6 * m.tank_capacity());
  }
}

TEST(SimulateStep, ChargingWithoutLossesIsMonotone) {
  TankGeometry g = test::case_study_model().geom;
  g.alpha_surr = 0.0;
  const TankModel m(PcmProperties{}, g, IntermediateFluidProperties{});
  TesState s = m.uniform_state(0.05, m.pcm.t_lat);
  double prev = charge_ratio(s, m);
  for (int k = 0; k < 8; ++k) {
    s = simulate_step(s, 600.0, 0.0, 300.0, 3600.0, 60, m).state;
    const double g_now = charge_ratio(s, m);
    EXPECT_GE(g_now, prev - 1e-12);
    prev = g_now;
  }
}

TEST(SimulateStep, SubstepSelfConvergence) {
  const TankModel m = test::case_study_model();
  const TesState s0 = m.uniform_state(0.1, m.pcm.t_lat);
  TesState fine = s0;
  TesState coarse = s0;
  for (int k = 0; k < 3; ++k) {
    fine = simulate_step(fine, 700.0, 0.0, 293.0, 3600.0, 3600, m).state;
    coarse = simulate_step(coarse, 700.0, 0.0, 293.0, 3600.0, 36, m).state;
  }
  EXPECT_NEAR(charge_ratio(fine, m), charge_ratio(coarse, m), 1e-3);
}

TEST(SimulateStep, RejectsBadArguments) {
  const TankModel m;
  const TesState s = m.uniform_state(0.5, 250.0);
  EXPECT_THROW(simulate_step(s, -1.0, 0.0, 290.0, 3600.0, 10, m), ConfigError);
  EXPECT_THROW(simulate_step(s, 0.0, 0.0, 290.0, 0.0, 10, m), ConfigError);
  EXPECT_THROW(simulate_step(s, 0.0, 0.0, 290.0, 3600.0, 0, m), ConfigError);
  TesState bad = s;
  bad.h.pop_back();
  EXPECT_THROW(simulate_step(bad, 0.0, 0.0, 290.0, 3600.0, 10, m), InvariantError);
}

TEST(Validation, RejectsInconsistentInputs) {
  TankGeometry g;
  g.n_lay = 1;
  EXPECT_THROW(TankModel(PcmProperties{}, g, IntermediateFluidProperties{}), ConfigError);
  PcmProperties p;
  p.h_lat_plus = 1000.0;
  EXPECT_THROW(TankModel(p, TankGeometry{}, IntermediateFluidProperties{}), ConfigError);
  IntermediateFluidProperties f;
  f.cp = 0.0;
  EXPECT_THROW(TankModel(PcmProperties{}, TankGeometry{}, f), ConfigError);
}

}  // namespace
}  // namespace tes
