#include "tes/harness.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tes/errors.hpp"

namespace tes {

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* first = t.data();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, t.data() + t.size(), out);
  return res.ec == std::errc{} && res.ptr == t.data() + t.size() && std::isfinite(out);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  return in;
}

}  // namespace

void ScenarioProfiles::validate() const {
  const std::size_t n = demand.size();
  if (hour.size() != n || price.size() != n || t_surr.size() != n) {
    throw ConfigError("profiles: column lengths differ");
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (!(demand[k] > 0.0)) throw ConfigError("profiles: demand must be positive at step " + std::to_string(k));
    if (!(price[k] >= 0.0)) throw ConfigError("profiles: price must be non-negative at step " + std::to_string(k));
  }
}

ScenarioProfiles parse_profiles(std::istream& in) {
  static const std::array<std::string, 4> kColumns = {"hour", "demand_w", "price_eur_kwh", "t_surr_c"};
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> index;
  std::size_t n_cols = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto header = split_csv(trim(line));
    n_cols = header.size();
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (std::find(kColumns.begin(), kColumns.end(), header[c]) == kColumns.end()) {
        throw ParseError("unknown column '" + header[c] + "'", line_no);
      }
      if (!index.emplace(header[c], c).second) throw ParseError("duplicate column '" + header[c] + "'", line_no);
    }
    for (const auto& name : kColumns) {
      if (!index.count(name)) throw ParseError("missing column '" + name + "'", line_no);
    }
    break;
  }
  if (index.empty()) throw ParseError("empty scenario file", line_no);

  ScenarioProfiles p;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(trim(line));
    if (cells.size() != n_cols) {
      throw ParseError("expected " + std::to_string(n_cols) + " fields, got " + std::to_string(cells.size()),
                       line_no);
    }
    std::array<double, 4> v{};
    for (std::size_t c = 0; c < kColumns.size(); ++c) {
      if (!parse_number(cells[index[kColumns[c]]], v[c])) {
        throw ParseError("bad number in column '" + kColumns[c] + "'", line_no);
      }
    }
    if (!(v[1] > 0.0)) throw ParseError("demand_w must be positive", line_no);
    if (v[2] < 0.0) throw ParseError("price_eur_kwh must be non-negative", line_no);
    p.hour.push_back(v[0]);
    p.demand.push_back(v[1]);
    p.price.push_back(v[2]);
    p.t_surr.push_back(v[3] + kCelsiusToKelvin);
  }
  if (p.n_steps() == 0) throw ParseError("scenario has no data rows", line_no);
  return p;
}

ScenarioProfiles load_profiles(const std::filesystem::path& path) {
  auto in = open_input(path);
  try {
    return parse_profiles(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ":" + std::to_string(e.line()) + ": " + e.what(), e.line());
  }
}

void write_profiles(const ScenarioProfiles& p, std::ostream& out) {
  out << "hour,demand_w,price_eur_kwh,t_surr_c\n";
  for (std::size_t k = 0; k < p.n_steps(); ++k) {
    out << format_double(p.hour[k]) << ',' << format_double(p.demand[k]) << ','
        << format_double(p.price[k]) << ',' << format_double(p.t_surr[k] - kCelsiusToKelvin) << '\n';
  }
}

void RunConfig::validate() const {
  pcm.validate();
  geom.validate();
  fluid.validate();
  scheduler.validate();
  if (!(gamma0 >= 0.0 && gamma0 <= 1.0)) throw ConfigError("config: gamma0 must be in [0, 1]");
  if (plant_n_sub < 1) throw ConfigError("config: plant_n_sub must be at least 1");
}

namespace {

struct KeySpec {
  const char* name;
  bool integer;
  std::function<void(RunConfig&, double)> set;
};

const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs = {
      {"l_tank_m", false, [](RunConfig& c, double v) { c.geom.l_tank = v; }},
      {"d_tank_m", false, [](RunConfig& c, double v) { c.geom.d_tank = v; }},
      {"e_tank_m", false, [](RunConfig& c, double v) { c.geom.e_tank = v; }},
      {"n_pcm", true, [](RunConfig& c, double v) { c.geom.n_pcm = static_cast<int>(v); }},
      {"d_pcm_m", false, [](RunConfig& c, double v) { c.geom.d_pcm = v; }},
      {"e_pcm_m", false, [](RunConfig& c, double v) { c.geom.e_pcm = v; }},
      {"l_pcm_m", false, [](RunConfig& c, double v) { c.geom.l_pcm = v; }},
      {"kappa_coat", false, [](RunConfig& c, double v) { c.geom.kappa_coat = v; }},
      {"v_int_m3", false, [](RunConfig& c, double v) { c.geom.v_int = v; }},
      {"alpha_surr_w_m2k", false, [](RunConfig& c, double v) { c.geom.alpha_surr = v; }},
      {"r_film_k_w", false, [](RunConfig& c, double v) { c.geom.r_film = v; }},
      {"n_lay", true, [](RunConfig& c, double v) { c.geom.n_lay = static_cast<int>(v); }},
      {"cp_pcm", false, [](RunConfig& c, double v) { c.pcm.cp_sensible = v; }},
      {"h_lat_j_kg", false,
       [](RunConfig& c, double v) {
         c.pcm.h_lat = v;
         c.pcm.h_lat_plus = c.pcm.h_lat_minus + v;
       }},
      {"t_lat_c", false, [](RunConfig& c, double v) { c.pcm.t_lat = v + kCelsiusToKelvin; }},
      {"kappa_pcm", false, [](RunConfig& c, double v) { c.pcm.kappa = v; }},
      {"rho_pcm", false, [](RunConfig& c, double v) { c.pcm.rho = v; }},
      {"cp_int", false, [](RunConfig& c, double v) { c.fluid.cp = v; }},
      {"rho_int", false, [](RunConfig& c, double v) { c.fluid.rho = v; }},
      {"q_e_min_w", false, [](RunConfig& c, double v) { c.scheduler.limits.q_e_min = v; }},
      {"q_e_max_w", false, [](RunConfig& c, double v) { c.scheduler.limits.q_e_max = v; }},
      {"dt_charge_k", false, [](RunConfig& c, double v) { c.scheduler.limits.dt_charge = v; }},
      {"dt_discharge_k", false, [](RunConfig& c, double v) { c.scheduler.limits.dt_discharge = v; }},
      {"min_fraction", false, [](RunConfig& c, double v) { c.scheduler.limits.min_fraction = v; }},
      {"horizon", true, [](RunConfig& c, double v) { c.scheduler.horizon = static_cast<std::size_t>(v); }},
      {"dt_s", false, [](RunConfig& c, double v) { c.scheduler.dt = v; }},
      {"gamma_min", false, [](RunConfig& c, double v) { c.scheduler.gamma_min = v; }},
      {"gamma_max", false, [](RunConfig& c, double v) { c.scheduler.gamma_max = v; }},
      {"limit_iterations", true, [](RunConfig& c, double v) { c.scheduler.limit_iterations = static_cast<int>(v); }},
      {"limit_tolerance", false, [](RunConfig& c, double v) { c.scheduler.limit_tolerance = v; }},
      {"resim_tolerance", false, [](RunConfig& c, double v) { c.scheduler.resim_tolerance = v; }},
      {"n_sub", true,
       [](RunConfig& c, double v) {
         c.scheduler.n_sub = static_cast<int>(v);
         c.plant_n_sub = static_cast<int>(v);
       }},
      {"jacobian_eps_w", false, [](RunConfig& c, double v) { c.scheduler.jacobian_eps = v; }},
      {"threads", true, [](RunConfig& c, double v) { c.scheduler.threads = static_cast<unsigned>(v); }},
      {"node_limit", true, [](RunConfig& c, double v) { c.scheduler.bnb.node_limit = static_cast<std::size_t>(v); }},
      {"bnb_batch", true, [](RunConfig& c, double v) { c.scheduler.bnb.batch = static_cast<std::size_t>(v); }},
      {"gamma0", false, [](RunConfig& c, double v) { c.gamma0 = v; }},
      {"t_int0_c", false, [](RunConfig& c, double v) { c.t_int0 = v + kCelsiusToKelvin; }},
  };
  return specs;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : key_specs()) out.emplace_back(k.name);
  return out;
}

RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line_no);
    const std::string key = trim(line.substr(0, eq));
    const auto& specs = key_specs();
    const auto it = std::find_if(specs.begin(), specs.end(), [&](const KeySpec& s) { return key == s.name; });
    if (it == specs.end()) throw ParseError("unknown key '" + key + "'", line_no);
    if (!seen.insert(key).second) throw ParseError("repeated key '" + key + "'", line_no);
    double v = 0.0;
    if (!parse_number(line.substr(eq + 1), v)) throw ParseError("bad value for '" + key + "'", line_no);
    if (it->integer && (v != std::floor(v) || v < 0.0)) {
      throw ParseError("'" + key + "' must be a non-negative integer", line_no);
    }
    it->set(cfg, v);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  auto in = open_input(path);
  try {
    return parse_config(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ":" + std::to_string(e.line()) + ": " + e.what(), e.line());
  }
}

namespace {

HorizonForecast forecast_window(const ScenarioProfiles& p, std::size_t start, std::size_t ph) {
  HorizonForecast fc;
  const std::size_t last = p.n_steps() - 1;
  for (std::size_t k = 0; k < ph; ++k) {
    const std::size_t i = std::min(start + k, last);
    fc.demand.push_back(p.demand[i]);
    fc.price.push_back(p.price[i]);
    // The ambient temperature is held at its current value.
    fc.t_surr.push_back(p.t_surr[start]);
  }
  return fc;
}

}  // namespace

RunReport run_closed_loop(const ScenarioProfiles& p, const RunConfig& cfg) {
  cfg.validate();
  p.validate();
  const TankModel m = cfg.model();
  const double dt = cfg.scheduler.dt;

  TesState plant = m.uniform_state(cfg.gamma0, cfg.t_int0);
  Measurement prev_meas{plant.t_int, p.t_surr.front(), 0.0};
  EstimatedState est = initial_estimate(cfg.gamma0, prev_meas, m);
  double applied_q_tes = 0.0;
  double applied_q_tes_sec = 0.0;

  RunReport report;
  for (std::size_t t = 0; t < p.n_steps(); ++t) {
    const Measurement meas{plant.t_int, p.t_surr[t], static_cast<double>(t) * dt};
    if (t > 0) {
      const double du = estimate_transferred_energy(meas, prev_meas, applied_q_tes, applied_q_tes_sec, dt, m);
      est = update_state(est, du, meas, m);
    }

    Schedule sched;
    try {
      sched = solve_schedule(est.state, forecast_window(p, t, cfg.scheduler.horizon), m, cfg.scheduler);
    } catch (const SchedulingInfeasible& e) {
      throw SchedulingInfeasible("step " + std::to_string(t) + " (hour " + format_double(p.hour[t]) +
                                     "): " + e.what() + " [" + e.family() + "]",
                                 t, e.family());
    }
    const StepPlan plan = step_receding_horizon(sched);

    StepRecord r;
    r.step = t;
    r.hour = p.hour[t];
    r.demand = p.demand[t];
    r.price = p.price[t];
    r.mode = plan.mode;
    r.flags = plan.flags();
    r.q_e_sec = plan.q_e_sec_ref;
    r.q_tes = plan.decision.q_tes_ref;
    r.q_tes_sec = plan.decision.q_tes_sec_ref;
    r.gamma_est = est.gamma;
    r.gamma_plant = charge_ratio(plant, m);
    r.t_int = plant.t_int;
    r.objective = sched.objective;
    r.limit_iterations = sched.diagnostics.limit_iterations;
    r.converged = sched.diagnostics.converged;
    r.nodes = sched.diagnostics.nodes;
    r.lp_iterations = sched.diagnostics.lp_iterations;
    r.resim_gamma_error = sched.diagnostics.resim_gamma_error;

    plant = simulate_step(plant, r.q_tes, r.q_tes_sec, p.t_surr[t], dt, cfg.plant_n_sub, m).state;
    r.gamma_next = charge_ratio(plant, m);
    r.t_int_next = plant.t_int;
    r.cost = energy_weight(r.price, dt) * (r.q_e_sec + r.q_tes);
    report.total_cost += r.cost;
    report.steps.push_back(r);

    prev_meas = meas;
    applied_q_tes = r.q_tes;
    applied_q_tes_sec = r.q_tes_sec;
  }

  const Measurement last{plant.t_int, p.t_surr.back(), static_cast<double>(p.n_steps()) * dt};
  est = update_state(est, estimate_transferred_energy(last, prev_meas, applied_q_tes, applied_q_tes_sec, dt, m),
                     last, m);
  report.final_gamma_est = est.gamma;
  report.final_gamma_plant = charge_ratio(plant, m);
  return report;
}

std::vector<double> replay_plant(const RunReport& r, const RunConfig& cfg, const ScenarioProfiles& p) {
  const TankModel m = cfg.model();
  TesState plant = m.uniform_state(cfg.gamma0, cfg.t_int0);
  std::vector<double> out;
  for (const auto& s : r.steps) {
    plant = simulate_step(plant, s.q_tes, s.q_tes_sec, p.t_surr[s.step], cfg.scheduler.dt, cfg.plant_n_sub, m).state;
    out.push_back(charge_ratio(plant, m));
  }
  return out;
}

void write_steps_csv(const RunReport& r, std::ostream& out) {
  out << "step,hour,demand_w,price_eur_kwh,mode,d_e_sec,d_tes,d_tes_sec,q_e_sec_w,q_tes_w,q_tes_sec_w,"
         "gamma_est,gamma_plant,gamma_next,t_int_c,t_int_next_c,cost_eur,objective_eur,"
         "limit_iterations,converged,nodes,lp_iterations,resim_gamma_error\n";
  for (const auto& s : r.steps) {
    out << s.step << ',' << format_double(s.hour) << ',' << format_double(s.demand) << ','
        << format_double(s.price) << ',' << mode_number(s.mode) << ',' << int(s.flags.d_e_sec) << ','
        << int(s.flags.d_tes) << ',' << int(s.flags.d_tes_sec) << ',' << format_double(s.q_e_sec) << ','
        << format_double(s.q_tes) << ',' << format_double(s.q_tes_sec) << ',' << format_double(s.gamma_est)
        << ',' << format_double(s.gamma_plant) << ',' << format_double(s.gamma_next) << ','
        << format_double(s.t_int - kCelsiusToKelvin) << ',' << format_double(s.t_int_next - kCelsiusToKelvin)
        << ',' << format_double(s.cost) << ',' << format_double(s.objective) << ',' << s.limit_iterations
        << ',' << int(s.converged) << ',' << s.nodes << ',' << s.lp_iterations << ','
        << format_double(s.resim_gamma_error) << '\n';
  }
}

std::string summary_json(const RunReport& r, const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["steps"] = r.steps.size();
  j["total_cost_eur"] = r.total_cost;
  nlohmann::ordered_json hist;
  for (int mode = 1; mode <= 4; ++mode) {
    hist[std::to_string(mode)] = std::count_if(r.steps.begin(), r.steps.end(),
                                               [&](const StepRecord& s) { return mode_number(s.mode) == mode; });
  }
  j["mode_histogram"] = hist;

  double g_lo = r.steps.empty() ? 0.0 : r.steps.front().gamma_plant;
  double g_hi = g_lo;
  double est_err = std::abs(r.final_gamma_est - r.final_gamma_plant);
  std::size_t nodes = 0, pivots = 0, non_converged = 0;
  int max_iter = 0;
  double resim = 0.0;
  for (const auto& s : r.steps) {
    g_lo = std::min({g_lo, s.gamma_plant, s.gamma_next});
    g_hi = std::max({g_hi, s.gamma_plant, s.gamma_next});
    est_err = std::max(est_err, std::abs(s.gamma_est - s.gamma_plant));
    nodes += s.nodes;
    pivots += s.lp_iterations;
    max_iter = std::max(max_iter, s.limit_iterations);
    non_converged += s.converged ? 0 : 1;
    resim = std::max(resim, s.resim_gamma_error);
  }
  j["gamma_plant_min"] = g_lo;
  j["gamma_plant_max"] = g_hi;
  j["final_gamma_plant"] = r.final_gamma_plant;
  j["final_gamma_est"] = r.final_gamma_est;
  j["max_estimator_error"] = est_err;
  j["estimator_cold_energy_per_cylinder"] = "+du_tes/n_pcm (du_tes > 0 charges)";
  j["solver"] = {{"nodes", nodes},
                 {"lp_iterations", pivots},
                 {"max_limit_iterations", max_iter},
                 {"non_converged_steps", non_converged},
                 {"max_resim_gamma_error", resim}};
  j["config"] = {{"horizon", cfg.scheduler.horizon},
                 {"dt_s", cfg.scheduler.dt},
                 {"gamma_min", cfg.scheduler.gamma_min},
                 {"gamma_max", cfg.scheduler.gamma_max},
                 {"gamma0", cfg.gamma0}};
  return j.dump(2) + "\n";
}

void emit_report(const RunReport& r, const RunConfig& cfg, const std::filesystem::path& dir,
                 ReportFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create " + dir.string() + ": " + ec.message());
  const auto write = [](const std::filesystem::path& path, const std::function<void(std::ostream&)>& f) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    f(out);
    out.flush();
    if (!out) throw ConfigError("write failed for " + path.string());
  };
  if (format == ReportFormat::csv) {
    write(dir / "steps.csv", [&](std::ostream& o) { write_steps_csv(r, o); });
  }
  write(dir / "summary.json", [&](std::ostream& o) { o << summary_json(r, cfg); });
}

}  // namespace tes
