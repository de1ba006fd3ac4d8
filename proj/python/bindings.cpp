// Python module: tank model, scheduler and closed-loop runs.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "tes/errors.hpp"
#include "tes/harness.hpp"

namespace py = pybind11;
using namespace tes;

namespace {

RunConfig config_from_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

ScenarioProfiles profiles_from_string(const std::string& text) {
  std::istringstream in(text);
  return parse_profiles(in);
}

std::string steps_csv(const RunReport& r) {
  std::ostringstream os;
  write_steps_csv(r, os);
  return os.str();
}

}  // namespace

PYBIND11_MODULE(tes_sched, mod) {
  mod.doc() = "Receding-horizon scheduling of a PCM cold-storage tank";

  py::register_exception<ConfigError>(mod, "ConfigError", PyExc_ValueError);
  py::register_exception<ParseError>(mod, "ParseError", PyExc_ValueError);
  py::register_exception<NumericError>(mod, "NumericError", PyExc_ArithmeticError);
  py::register_exception<InvariantError>(mod, "InvariantError", PyExc_RuntimeError);
  py::register_exception<SchedulingInfeasible>(mod, "SchedulingInfeasible", PyExc_RuntimeError);

  mod.attr("CELSIUS_TO_KELVIN") = kCelsiusToKelvin;

  py::class_<TesState>(mod, "TesState")
      .def(py::init<>())
      .def_readwrite("h", &TesState::h)
      .def_readwrite("t_int", &TesState::t_int)
      .def("__eq__", [](const TesState& a, const TesState& b) { return a == b; });

  py::class_<PowerLimits>(mod, "PowerLimits")
      .def_readonly("q_e_min", &PowerLimits::q_e_min)
      .def_readonly("q_e_max", &PowerLimits::q_e_max)
      .def_readonly("q_tes_min", &PowerLimits::q_tes_min)
      .def_readonly("q_tes_max", &PowerLimits::q_tes_max)
      .def_readonly("q_tes_sec_min", &PowerLimits::q_tes_sec_min)
      .def_readonly("q_tes_sec_max", &PowerLimits::q_tes_sec_max);

  py::class_<LimitConfig>(mod, "LimitConfig")
      .def(py::init<>())
      .def_readwrite("dt_charge", &LimitConfig::dt_charge)
      .def_readwrite("dt_discharge", &LimitConfig::dt_discharge)
      .def_readwrite("q_e_min", &LimitConfig::q_e_min)
      .def_readwrite("q_e_max", &LimitConfig::q_e_max)
      .def_readwrite("min_fraction", &LimitConfig::min_fraction);

  py::class_<TankModel>(mod, "TankModel")
      .def(py::init<>())
      .def_property_readonly("n_lay", &TankModel::n_lay)
      .def_property_readonly("n_pcm", [](const TankModel& m) { return m.geom.n_pcm; })
      .def_property_readonly("t_lat", [](const TankModel& m) { return m.pcm.t_lat; })
      .def("cylinder_capacity", &TankModel::cylinder_capacity)
      .def("tank_capacity", &TankModel::tank_capacity)
      .def("fluid_heat_capacity", &TankModel::fluid_heat_capacity)
      .def("uniform_state", &TankModel::uniform_state, py::arg("gamma"), py::arg("t_int"))
      .def("total_energy", &TankModel::total_energy);

  py::class_<StepResult>(mod, "StepResult")
      .def_readonly("state", &StepResult::state)
      .def_readonly("e_surr", &StepResult::e_surr)
      .def_readonly("e_pcm", &StepResult::e_pcm)
      .def_readonly("residual", &StepResult::residual)
      .def_readonly("saturated", &StepResult::saturated);

  py::class_<ColdEnergyResult>(mod, "ColdEnergyResult")
      .def_readonly("state", &ColdEnergyResult::state)
      .def_readonly("residual", &ColdEnergyResult::residual)
      .def_readonly("saturated", &ColdEnergyResult::saturated);

  mod.def("charge_ratio", py::overload_cast<const TesState&, const TankModel&>(&charge_ratio),
          py::arg("state"), py::arg("model"));
  mod.def("apply_cold_energy",
          py::overload_cast<const TesState&, double, const TankModel&>(&apply_cold_energy),
          py::arg("state"), py::arg("du_cold"), py::arg("model"));
  mod.def("simulate_step", &simulate_step, py::arg("state"), py::arg("q_tes"), py::arg("q_tes_sec"),
          py::arg("t_surr"), py::arg("dt"), py::arg("n_sub"), py::arg("model"));
  mod.def("power_limits", &power_limits, py::arg("state"), py::arg("model"), py::arg("limits"),
          py::arg("reset_front") = false);

  py::enum_<OperatingMode>(mod, "OperatingMode")
      .value("MODE1", OperatingMode::mode1)
      .value("MODE2", OperatingMode::mode2)
      .value("MODE3", OperatingMode::mode3)
      .value("MODE4", OperatingMode::mode4);

  py::class_<ModeFlags>(mod, "ModeFlags")
      .def(py::init([](bool d_e_sec, bool d_tes, bool d_tes_sec) { return ModeFlags{d_e_sec, d_tes, d_tes_sec}; }),
           py::arg("d_e_sec"), py::arg("d_tes"), py::arg("d_tes_sec"))
      .def_readwrite("d_e_sec", &ModeFlags::d_e_sec)
      .def_readwrite("d_tes", &ModeFlags::d_tes)
      .def_readwrite("d_tes_sec", &ModeFlags::d_tes_sec);
  mod.def("classify_mode", &classify_mode);

  py::class_<SchedulerConfig>(mod, "SchedulerConfig")
      .def(py::init<>())
      .def_readwrite("horizon", &SchedulerConfig::horizon)
      .def_readwrite("dt", &SchedulerConfig::dt)
      .def_readwrite("gamma_min", &SchedulerConfig::gamma_min)
      .def_readwrite("gamma_max", &SchedulerConfig::gamma_max)
      .def_readwrite("limit_iterations", &SchedulerConfig::limit_iterations)
      .def_readwrite("limit_tolerance", &SchedulerConfig::limit_tolerance)
      .def_readwrite("resim_tolerance", &SchedulerConfig::resim_tolerance)
      .def_readwrite("n_sub", &SchedulerConfig::n_sub)
      .def_readwrite("threads", &SchedulerConfig::threads)
      .def_readwrite("limits", &SchedulerConfig::limits);

  py::class_<HorizonForecast>(mod, "HorizonForecast")
      .def(py::init([](std::vector<double> demand, std::vector<double> price, std::vector<double> t_surr) {
             return HorizonForecast{std::move(demand), std::move(price), std::move(t_surr)};
           }),
           py::arg("demand"), py::arg("price"), py::arg("t_surr"))
      .def_readwrite("demand", &HorizonForecast::demand)
      .def_readwrite("price", &HorizonForecast::price)
      .def_readwrite("t_surr", &HorizonForecast::t_surr);

  py::class_<StepPlan>(mod, "StepPlan")
      .def_property_readonly("q_tes_ref", [](const StepPlan& s) { return s.decision.q_tes_ref; })
      .def_property_readonly("q_tes_sec_ref", [](const StepPlan& s) { return s.decision.q_tes_sec_ref; })
      .def_readonly("q_e_sec_ref", &StepPlan::q_e_sec_ref)
      .def_readonly("mode", &StepPlan::mode)
      .def_readonly("gamma", &StepPlan::gamma)
      .def_readonly("t_int", &StepPlan::t_int)
      .def_property_readonly("flags", &StepPlan::flags);

  py::class_<Schedule>(mod, "Schedule")
      .def_readonly("steps", &Schedule::steps)
      .def_readonly("objective", &Schedule::objective)
      .def_property_readonly("converged", [](const Schedule& s) { return s.diagnostics.converged; })
      .def_property_readonly("resim_gamma_error", [](const Schedule& s) { return s.diagnostics.resim_gamma_error; })
      .def("__len__", &Schedule::size);

  mod.def("solve_schedule", &solve_schedule, py::arg("state"), py::arg("forecast"), py::arg("model"),
          py::arg("config"), py::call_guard<py::gil_scoped_release>());

  py::class_<RunConfig>(mod, "RunConfig")
      .def(py::init<>())
      .def_readwrite("scheduler", &RunConfig::scheduler)
      .def_readwrite("gamma0", &RunConfig::gamma0)
      .def_readwrite("t_int0", &RunConfig::t_int0)
      .def_readwrite("plant_n_sub", &RunConfig::plant_n_sub)
      .def("model", &RunConfig::model)
      .def("validate", &RunConfig::validate);
  mod.def("load_config", &load_config, py::arg("path"));
  mod.def("parse_config", &config_from_string, py::arg("text"));
  mod.def("config_keys", &config_keys);

  py::class_<ScenarioProfiles>(mod, "ScenarioProfiles")
      .def(py::init<>())
      .def_readwrite("hour", &ScenarioProfiles::hour)
      .def_readwrite("demand", &ScenarioProfiles::demand)
      .def_readwrite("price", &ScenarioProfiles::price)
      .def_readwrite("t_surr", &ScenarioProfiles::t_surr)
      .def("__len__", &ScenarioProfiles::n_steps)
      .def("validate", &ScenarioProfiles::validate);
  mod.def("load_profiles", &load_profiles, py::arg("path"));
  mod.def("parse_profiles", &profiles_from_string, py::arg("text"));

  py::class_<StepRecord>(mod, "StepRecord")
      .def_readonly("step", &StepRecord::step)
      .def_readonly("hour", &StepRecord::hour)
      .def_readonly("demand", &StepRecord::demand)
      .def_readonly("price", &StepRecord::price)
      .def_readonly("mode", &StepRecord::mode)
      .def_readonly("q_e_sec", &StepRecord::q_e_sec)
      .def_readonly("q_tes", &StepRecord::q_tes)
      .def_readonly("q_tes_sec", &StepRecord::q_tes_sec)
      .def_readonly("gamma_est", &StepRecord::gamma_est)
      .def_readonly("gamma_plant", &StepRecord::gamma_plant)
      .def_readonly("gamma_next", &StepRecord::gamma_next)
      .def_readonly("cost", &StepRecord::cost)
      .def_readonly("converged", &StepRecord::converged)
      .def_readonly("resim_gamma_error", &StepRecord::resim_gamma_error);

  py::class_<RunReport>(mod, "RunReport")
      .def_readonly("steps", &RunReport::steps)
      .def_readonly("total_cost", &RunReport::total_cost)
      .def_readonly("final_gamma_est", &RunReport::final_gamma_est)
      .def_readonly("final_gamma_plant", &RunReport::final_gamma_plant)
      .def("steps_csv", &steps_csv)
      .def("summary_json", [](const RunReport& r, const RunConfig& cfg) { return summary_json(r, cfg); });

  mod.def("run_closed_loop", &run_closed_loop, py::arg("profiles"), py::arg("config"),
          py::call_guard<py::gil_scoped_release>());
  mod.def(
      "emit_report",
      [](const RunReport& r, const RunConfig& cfg, const std::filesystem::path& dir, const std::string& format) {
        if (format != "csv" && format != "summary") throw ConfigError("format must be csv or summary");
        emit_report(r, cfg, dir, format == "csv" ? ReportFormat::csv : ReportFormat::summary);
      },
      py::arg("report"), py::arg("config"), py::arg("out_dir"), py::arg("format") = "csv");
}
