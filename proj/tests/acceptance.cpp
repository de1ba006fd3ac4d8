// Acceptance run: one PASS/FAIL line per criterion.
//
// Usage: tes_acceptance [--data DIR] [--expect-fail N,...]
// The exit status is 0 when exactly the listed criteria fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "milp_oracles.hpp"
#include "tes/errors.hpp"
#include "tes/harness.hpp"
#include "tes/milp.hpp"
#include "tes/pnmpc.hpp"
#include "tes/scheduler.hpp"
#include "test_support.hpp"

namespace {

using namespace tes;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Outcome energy_conservation() {
  const auto t0 = Clock::now();
  const TankModel m = test::case_study_model();
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto c = test::random_step_case(m, rng);
    const auto r = simulate_step(c.state, c.q_tes, c.q_tes_sec, c.t_surr, 3600.0, 120, m);
    const double delta = m.total_energy(r.state) - m.total_energy(c.state);
    const double expected = (c.q_tes_sec - c.q_tes) * 3600.0 + r.e_surr + r.residual * m.geom.n_pcm;
    const double gross = (c.q_tes + c.q_tes_sec) * 3600.0 + std::abs(r.e_surr) + std::abs(r.e_pcm);
    worst = std::max(worst, std::abs(delta - expected) / gross);
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-6 && t < 10.0, fmt("max relative error %.2e over 1000 steps, %.1f s", worst, t)};
}

Outcome cold_energy_oracle() {
  const auto t0 = Clock::now();
  const TankModel m = test::case_study_model();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> du(-0.5, 0.5);
  double worst = 0.0;
  int crossings = 0;
  for (int i = 0; i < 200; ++i) {
    const TesState s = test::random_state(m, rng);
    const double e = du(rng) * m.cylinder_capacity();
    const TesState fast = apply_cold_energy(s, e, m).state;
    const TesState slow = test::micro_increment_oracle(s, e, m, 10000);
    bool crossed = false;
    for (std::size_t j = 0; j < s.h.size(); ++j) {
      worst = std::max(worst, std::abs(fast.h[j] - slow.h[j]) / m.pcm.h_lat);
      const auto in_band = [&](double h) { return h > m.pcm.h_lat_minus && h < m.pcm.h_lat_plus; };
      crossed = crossed || in_band(s.h[j]) != in_band(fast.h[j]);
    }
    crossings += crossed ? 1 : 0;
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-6 && crossings > 0 && t < 30.0,
          fmt("max error %.2e of h_lat, %g band-crossing cases of 200, %.1f s", worst, crossings, t)};
}

Outcome pnmpc_checks() {
  const TankModel m = test::case_study_model();
  const RolloutOptions ro{3600.0, 60};
  const std::size_t ph = 6;

  // Forward-difference order under eps halving, one flow regime per state.
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double min_order = 1e300;
  for (int i = 0; i < 20; ++i) {
    const bool melting = i % 2 == 0;
    const double offset = 0.5 + 2.5 * unit(rng);
    const TesState x0 = test::layered_state(m, 0.2 + 0.6 * unit(rng), melting,
                                            m.pcm.t_lat + (melting ? offset : -offset));
    const std::vector<double> t_surr(ph, melting ? 293.15 : 233.15);
    const auto g_at = [&](double eps) { return jacobian(x0, t_surr, m, ro, JacobianOptions{eps, 1}).g; };
    const Eigen::MatrixXd g1 = g_at(2.0), g2 = g_at(1.0), g4 = g_at(0.5);
    min_order = std::min(min_order, std::log2((g1 - g2).norm() / (g2 - g4).norm()));
  }

  // Exact zeros above the block diagonal.
  const std::vector<double> ambient(ph, 293.15);
  const LinearPrediction lp = jacobian(m.uniform_state(0.4, m.pcm.t_lat - 1.0), ambient, m, ro,
                                       JacobianOptions{20.0, 1});
  bool triangular = true;
  for (std::size_t k = 0; k < ph; ++k) {
    for (std::size_t c = 2 * (k + 1); c < 2 * ph; ++c) {
      triangular = triangular && lp.g(2 * k, c) == 0.0 && lp.g(2 * k + 1, c) == 0.0;
    }
  }

  // Constant-resistance surrogate: the model is affine in the inputs.
  TankModel sur = m;
  sur.fixed_resistance = 0.004;
  const TesState xs = sur.uniform_state(0.5, sur.pcm.t_lat);
  const LinearPrediction lps = jacobian(xs, ambient, sur, ro, JacobianOptions{20.0, 1});
  InputTrajectory u = InputTrajectory::zeros(ph);
  for (std::size_t k = 0; k < ph; ++k) (k < ph / 2 ? u.q_tes : u.q_tes_sec)[k] = 300.0;
  const OutputTrajectory lin = predict(lps, u);
  const OutputTrajectory nl = rollout(xs, u, ambient, sur, ro);
  double gap = 0.0;
  for (std::size_t k = 0; k < ph; ++k) gap = std::max(gap, std::abs(lin.gamma[k] - nl.gamma[k]));

  return {min_order >= 1.0 - 1e-3 && triangular && gap <= 1e-9,
          fmt("min FD order %.4f, ", min_order) + (triangular ? "G lower block triangular" : "G NOT triangular") +
              fmt(", surrogate gap %.1e", gap)};
}

Outcome milp_oracles() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(4);
  milp::BnbOptions opt;
  opt.tol = 1e-9;
  int mip_bad = 0, lp_bad = 0;
  for (int i = 0; i < 100; ++i) {
    const auto mip = test::random_mip(rng, 1 + i % 8, 2, 4);
    const auto ref = test::exhaustive_mip(mip);
    const milp::Solution s = milp::branch_and_bound(mip, opt);
    const bool ok = ref ? s.status == milp::Status::optimal &&
                              std::abs(s.objective - ref->objective) <= 1e-8 * (1.0 + std::abs(ref->objective))
                        : s.status == milp::Status::infeasible;
    mip_bad += ok ? 0 : 1;
  }
  for (int i = 0; i < 100; ++i) {
    const auto lp = test::random_standard_lp(rng, 6, 10);
    const auto ref = test::vertex_enumeration(lp);
    const milp::Solution s = milp::solve_lp(lp);
    const bool ok = ref ? s.status == milp::Status::optimal &&
                              std::abs(s.objective - ref->objective) <= 1e-8 * (1.0 + std::abs(ref->objective))
                        : s.status == milp::Status::infeasible;
    lp_bad += ok ? 0 : 1;
  }
  const double t = seconds_since(t0);
  return {mip_bad == 0 && lp_bad == 0 && t < 60.0,
          fmt("MIP mismatches %g/100, 6x10 LP mismatches %g/100, %.1f s", mip_bad, lp_bad, t)};
}

// Minimum over the 2^8 TES flag patterns of a four-step problem, the
// evaporator flags and the powers of each pattern left to an LP per choice.
std::optional<double> brute_force(const milp::MixedIntegerProgram& mip, std::size_t ph) {
  std::optional<double> best;
  for (std::size_t pattern = 0; pattern < (std::size_t{1} << (2 * ph)); ++pattern) {
    for (std::size_t evap = 0; evap < (std::size_t{1} << ph); ++evap) {
      milp::LinearProgram lp = mip.lp;
      bool ok = true;
      for (std::size_t k = 0; k < ph; ++k) {
        const double dt = static_cast<double>((pattern >> (2 * k)) & 1u);
        const double ds = static_cast<double>((pattern >> (2 * k + 1)) & 1u);
        const double de = static_cast<double>((evap >> k) & 1u);
        ok = ok && dt + ds <= 1.0 && de + ds >= 1.0;
        lp.col_lower[col_d_tes(k)] = lp.col_upper[col_d_tes(k)] = dt;
        lp.col_lower[col_d_tes_sec(k)] = lp.col_upper[col_d_tes_sec(k)] = ds;
        lp.col_lower[col_d_e_sec(ph, k)] = lp.col_upper[col_d_e_sec(ph, k)] = de;
      }
      if (!ok) continue;
      const milp::Solution s = milp::solve_lp(lp);
      if (s.status == milp::Status::optimal && (!best || s.objective < *best)) best = s.objective;
    }
  }
  return best;
}

Outcome scheduler_brute_force() {
  const auto t0 = Clock::now();
  const TankModel m = test::case_study_model();
  SchedulerConfig cfg;
  cfg.horizon = 4;
  cfg.limits.dt_charge = 3.0;
  cfg.limits.dt_discharge = 3.0;
  struct Case {
    std::vector<double> demand, price;
    double gamma0;
  };
  std::vector<Case> cases = {
      {{800, 800, 800, 800}, {0.1, 0.1, 0.1, 0.1}, 0.5},
      {{800, 900, 1900, 900}, {0.1, 0.1, 0.1, 0.1}, 0.8},
      {{600, 600, 900, 1800}, {0.04, 0.04, 0.15, 0.2}, 0.05},
  };
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 5; ++i) {
    Case c{std::vector<double>(4), std::vector<double>(4), 0.2 + 0.6 * unit(rng)};
    for (std::size_t k = 0; k < 4; ++k) {
      c.demand[k] = 400.0 + 1000.0 * unit(rng);
      c.price[k] = 0.03 + 0.2 * unit(rng);
    }
    c.demand[1 + i % 3] = 1600.0 + 300.0 * unit(rng);
    cases.push_back(c);
  }
  double worst = 0.0;
  int solved = 0, failed = 0;
  for (const Case& c : cases) {
    HorizonForecast fc{c.demand, c.price, std::vector<double>(4, 293.15)};
    try {
      const Schedule s = solve_schedule(m.uniform_state(c.gamma0, m.pcm.t_lat), fc, m, cfg);
      const auto ref = brute_force(s.problem, 4);
      if (!ref) {
        ++failed;
        continue;
      }
      worst = std::max(worst, std::abs(s.objective - *ref) / std::abs(*ref));
      ++solved;
    } catch (const SchedulingInfeasible&) {
      // Covered by the unit tests; not an optimality case.
    }
  }
  const double t = seconds_since(t0);
  return {failed == 0 && solved >= 6 && worst <= 1e-6 && t < 60.0,
          fmt("%g scenarios, max relative gap %.2e, %.1f s", solved, worst, t)};
}

struct BundledRun {
  RunConfig cfg;
  ScenarioProfiles profiles;
  std::optional<RunReport> report;
  std::string error;
  double seconds = 0.0;
};

BundledRun run_bundled(const std::string& data, const std::function<void(RunConfig&, ScenarioProfiles&)>& edit) {
  BundledRun b;
  const auto t0 = Clock::now();
  try {
    b.cfg = load_config(data + "/case_study.conf");
    b.cfg.scheduler.horizon = 12;
    b.cfg.scheduler.dt = 3600.0;
    b.cfg.scheduler.gamma_min = 0.05;
    b.cfg.scheduler.gamma_max = 0.95;
    b.profiles = load_profiles(data + "/peak_day.csv");
    if (edit) edit(b.cfg, b.profiles);
    b.report = run_closed_loop(b.profiles, b.cfg);
  } catch (const std::exception& e) {
    b.error = e.what();
  }
  b.seconds = seconds_since(t0);
  return b;
}

std::string mode_string(const RunReport& r) {
  std::string s;
  for (const auto& st : r.steps) s += static_cast<char>('0' + mode_number(st.mode));
  return s;
}

Outcome case_study(const BundledRun& b) {
  if (!b.report) return {false, "run failed: " + b.error};
  const RunReport& r = *b.report;
  const std::string modes = mode_string(r);
  const auto peak = static_cast<std::size_t>(
      std::max_element(b.profiles.demand.begin(), b.profiles.demand.end()) - b.profiles.demand.begin());

  const bool a = modes.find('4') == std::string::npos;
  bool charged = false;
  bool b_ok = true;
  for (std::size_t t = 0; t < modes.size(); ++t) {
    if (modes[t] != '2') continue;
    charged = true;
    b_ok = b_ok && t < peak;
  }
  b_ok = b_ok && charged;
  const bool c = peak == 7 && modes.size() > 7 && modes[7] == '3';
  // A Mode1 step after the last charging step before the peak and before
  // the first discharging step that follows it.
  bool d = false;
  const auto last_charge = modes.substr(0, peak).find_last_of('2');
  if (last_charge != std::string::npos) {
    const auto next_discharge = modes.find('3', last_charge);
    const auto stop = next_discharge == std::string::npos ? modes.size() : next_discharge;
    d = modes.find('1', last_charge) < stop;
  }
  bool e = true;
  double g_lo = 1.0, g_hi = 0.0;
  for (const auto& s : r.steps) {
    e = e && std::abs(s.q_e_sec + s.q_tes_sec - s.demand) <= 1e-9 * s.demand;
    g_lo = std::min({g_lo, s.gamma_plant, s.gamma_next});
    g_hi = std::max({g_hi, s.gamma_plant, s.gamma_next});
  }
  const bool f = g_lo >= 0.03 && g_hi <= 0.97;
  const bool time_ok = b.seconds < 300.0;
  std::ostringstream os;
  os << "modes " << modes << " (a)" << (a ? "ok" : "FAIL") << " (b)" << (b_ok ? "ok" : "FAIL")
     << " (c)" << (c ? "ok" : "FAIL") << " (d)" << (d ? "ok" : "FAIL") << " (e)" << (e ? "ok" : "FAIL")
     << " (f)" << (f ? "ok" : "FAIL") << fmt(" gamma [%.3f, %.3f], %.1f s", g_lo, g_hi, b.seconds);
  return {a && b_ok && c && d && e && f && time_ok, os.str()};
}

Outcome estimator_tracking(const BundledRun& b) {
  if (!b.report) return {false, "run failed: " + b.error};
  const RunReport& r = *b.report;
  double worst = std::abs(r.final_gamma_est - r.final_gamma_plant);
  for (const auto& s : r.steps) worst = std::max(worst, std::abs(s.gamma_est - s.gamma_plant));
  return {r.steps.size() == 12 && worst <= 0.01, fmt("max |gamma_est - gamma_plant| %.2e over 12 steps", worst)};
}

std::string render(const BundledRun& b) {
  std::ostringstream os;
  write_steps_csv(*b.report, os);
  os << summary_json(*b.report, b.cfg);
  return os.str();
}

Outcome determinism(const BundledRun& base, const std::string& data) {
  if (!base.report) return {false, "run failed: " + base.error};
  const BundledRun again = run_bundled(data, nullptr);
  const BundledRun threaded = run_bundled(data, [](RunConfig& c, ScenarioProfiles&) { c.scheduler.threads = 4; });
  if (!again.report || !threaded.report) return {false, "repeat run failed"};
  const std::string ref = render(base);
  const bool same = ref == render(again);
  const bool same_threaded = ref == render(threaded);
  return {same && same_threaded, std::string("repeat ") + (same ? "identical" : "DIFFERS") + ", 4 threads " +
                                     (same_threaded ? "identical" : "DIFFERS") +
                                     fmt(" (%g bytes)", static_cast<double>(ref.size()))};
}

Outcome price_scaling(const BundledRun& base, const std::string& data) {
  if (!base.report) return {false, "run failed: " + base.error};
  const BundledRun scaled = run_bundled(data, [](RunConfig&, ScenarioProfiles& p) {
    for (double& v : p.price) v *= 3.7;
  });
  if (!scaled.report) return {false, "scaled run failed: " + scaled.error};
  const RunReport& a = *base.report;
  const RunReport& b = *scaled.report;
  bool modes = mode_string(a) == mode_string(b);
  double worst = 0.0;
  for (std::size_t t = 0; t < a.steps.size(); ++t) {
    const auto rel = [](double x, double y) { return std::abs(x - y) / std::max(1.0, std::abs(x)); };
    worst = std::max({worst, rel(a.steps[t].q_e_sec, b.steps[t].q_e_sec), rel(a.steps[t].q_tes, b.steps[t].q_tes),
                      rel(a.steps[t].q_tes_sec, b.steps[t].q_tes_sec)});
  }
  return {modes && worst <= 1e-9, std::string("modes ") + (modes ? "unchanged" : "CHANGED") +
                                      fmt(", max relative reference change %.1e", worst)};
}

}  // namespace

int main(int argc, char** argv) {
  std::string data = TES_DATA_DIR;
  std::set<int> expected_fail;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--data" && i + 1 < argc) {
      data = argv[++i];
    } else if (arg == "--expect-fail" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) expected_fail.insert(std::stoi(item));
    } else {
      std::fprintf(stderr, "usage: tes_acceptance [--data DIR] [--expect-fail N,...]\n");
      return 1;
    }
  }

  std::vector<std::pair<int, Outcome>> results;
  const auto report = [&](int id, const char* name, Outcome o) {
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
    results.emplace_back(id, std::move(o));
  };
  report(1, "energy conservation", energy_conservation());
  report(2, "cold energy placement", cold_energy_oracle());
  report(3, "linear prediction", pnmpc_checks());
  report(4, "LP and MILP oracles", milp_oracles());
  report(5, "scheduler optimality", scheduler_brute_force());
  const BundledRun base = run_bundled(data, nullptr);
  report(6, "case study pattern", case_study(base));
  report(7, "estimator tracking", estimator_tracking(base));
  report(8, "deterministic reports", determinism(base, data));
  report(9, "price scaling", price_scaling(base, data));

  bool as_expected = true;
  for (const auto& [id, o] : results) as_expected = as_expected && o.pass != (expected_fail.count(id) > 0);
  return as_expected ? 0 : 1;
}
