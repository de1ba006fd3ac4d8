#pragma once

// Closed-loop driver: plant, estimator and scheduler over a scenario, plus
// config and scenario file handling.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tes/estimator.hpp"
#include "tes/scheduler.hpp"
#include "tes/tes_core.hpp"

namespace tes {

struct ScenarioProfiles {
  std::vector<double> hour;
  std::vector<double> demand;  // W
  std::vector<double> price;   // EUR/kWh
  std::vector<double> t_surr;  // K

  std::size_t n_steps() const { return demand.size(); }
  void validate() const;
};

/// Reads a CSV with the columns hour, demand_w, price_eur_kwh, t_surr_c
/// (any order, extra columns rejected). Throws ParseError with the line.
ScenarioProfiles load_profiles(const std::filesystem::path& path);
ScenarioProfiles parse_profiles(std::istream& in);
void write_profiles(const ScenarioProfiles& p, std::ostream& out);

struct RunConfig {
  PcmProperties pcm;
  TankGeometry geom;
  IntermediateFluidProperties fluid;
  SchedulerConfig scheduler;
  double gamma0 = 0.1;
  double t_int0 = -29.0 + kCelsiusToKelvin;  // K
  int plant_n_sub = 120;

  TankModel model() const { return TankModel(pcm, geom, fluid); }
  void validate() const;
};

/// Flat "key = value" text, '#' starts a comment. Unknown or repeated keys
/// are errors. Temperatures are given in degrees Celsius.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(std::istream& in);
/// Keys accepted by parse_config.
std::vector<std::string> config_keys();

struct StepRecord {
  std::size_t step = 0;
  double hour = 0.0;
  double demand = 0.0;
  double price = 0.0;
  OperatingMode mode = OperatingMode::mode1;
  ModeFlags flags;
  double q_e_sec = 0.0;
  double q_tes = 0.0;
  double q_tes_sec = 0.0;
  double gamma_est = 0.0;     // estimate at the start of the step
  double gamma_plant = 0.0;   // plant at the start of the step
  double gamma_next = 0.0;    // plant at the end of the step
  double t_int = 0.0;         // K, start of the step
  double t_int_next = 0.0;    // K, end of the step
  double cost = 0.0;          // EUR
  double objective = 0.0;     // EUR, horizon objective of the schedule
  int limit_iterations = 0;
  bool converged = false;
  std::size_t nodes = 0;
  std::size_t lp_iterations = 0;
  double resim_gamma_error = 0.0;
};

struct RunReport {
  std::vector<StepRecord> steps;
  double total_cost = 0.0;
  double final_gamma_est = 0.0;
  double final_gamma_plant = 0.0;
};

/// Runs the receding-horizon loop over every step of the scenario. Forecasts
/// past the end hold the last value. Throws SchedulingInfeasible with the
/// closed-loop step index when a step cannot be scheduled.
RunReport run_closed_loop(const ScenarioProfiles& p, const RunConfig& cfg);

/// Plant charge ratio after each step when the logged references are
/// replayed on a fresh plant.
std::vector<double> replay_plant(const RunReport& r, const RunConfig& cfg,
                                 const ScenarioProfiles& p);

enum class ReportFormat { csv, summary };

/// Per-step table, comma separated.
void write_steps_csv(const RunReport& r, std::ostream& out);
/// Summary document (JSON).
std::string summary_json(const RunReport& r, const RunConfig& cfg);
/// csv writes steps.csv and summary.json into dir, summary only the latter.
void emit_report(const RunReport& r, const RunConfig& cfg, const std::filesystem::path& dir,
                 ReportFormat format);

/// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace tes
