// tes-sched: closed-loop scheduling of a PCM cold-storage tank over a
// demand/price scenario.

#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "tes/errors.hpp"
#include "tes/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitInfeasible = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Receding-horizon scheduler for a PCM thermal storage tank"};
  app.require_subcommand(1);

  std::string config_path;
  std::string scenario_path;
  std::string out_dir;
  std::optional<std::size_t> horizon;
  std::optional<double> dt_seconds;
  std::optional<double> gamma_min;
  std::optional<double> gamma_max;
  std::string format = "csv";

  auto* run = app.add_subcommand("run", "run the closed loop over a scenario");
  run->add_option("--config", config_path, "key = value tank and scheduler configuration")->required();
  run->add_option("--scenario", scenario_path, "CSV with hour,demand_w,price_eur_kwh,t_surr_c")->required();
  run->add_option("--out", out_dir, "output directory")->required();
  run->add_option("--horizon", horizon, "prediction horizon in steps");
  run->add_option("--dt-seconds", dt_seconds, "sampling time in seconds");
  run->add_option("--gamma-min", gamma_min, "lower charge-ratio limit");
  run->add_option("--gamma-max", gamma_max, "upper charge-ratio limit");
  run->add_option("--format", format, "csv (table and summary) or summary")
      ->check(CLI::IsMember({"csv", "summary"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    tes::RunConfig cfg = tes::load_config(config_path);
    if (horizon) cfg.scheduler.horizon = *horizon;
    if (dt_seconds) cfg.scheduler.dt = *dt_seconds;
    if (gamma_min) cfg.scheduler.gamma_min = *gamma_min;
    if (gamma_max) cfg.scheduler.gamma_max = *gamma_max;
    cfg.validate();

    const tes::ScenarioProfiles profiles = tes::load_profiles(scenario_path);
    const tes::RunReport report = tes::run_closed_loop(profiles, cfg);
    const auto fmt = format == "summary" ? tes::ReportFormat::summary : tes::ReportFormat::csv;
    tes::emit_report(report, cfg, out_dir, fmt);
    std::cout << tes::summary_json(report, cfg);
    return kExitOk;
  } catch (const tes::SchedulingInfeasible& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const tes::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const tes::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
}
