#include "tes/pnmpc.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>
#include <thread>

#include "tes/errors.hpp"

namespace tes {

Eigen::VectorXd InputTrajectory::stacked() const {
  Eigen::VectorXd u(2 * size());
  for (std::size_t k = 0; k < size(); ++k) {
    u[2 * k] = q_tes[k];
    u[2 * k + 1] = q_tes_sec[k];
  }
  return u;
}

InputTrajectory InputTrajectory::from_stacked(const Eigen::VectorXd& u) {
  const auto ph = static_cast<std::size_t>(u.size() / 2);
  InputTrajectory out = zeros(ph);
  for (std::size_t k = 0; k < ph; ++k) {
    out.q_tes[k] = u[2 * k];
    out.q_tes_sec[k] = u[2 * k + 1];
  }
  return out;
}

Eigen::VectorXd OutputTrajectory::stacked() const {
  Eigen::VectorXd y(2 * size());
  for (std::size_t k = 0; k < size(); ++k) {
    y[2 * k] = d_gamma[k];
    y[2 * k + 1] = d_t_int[k];
  }
  return y;
}

void OutputTrajectory::accumulate() {
  gamma.resize(size());
  t_int.resize(size());
  double g = gamma0;
  double t = t_int0;
  for (std::size_t k = 0; k < size(); ++k) {
    g += d_gamma[k];
    t += d_t_int[k];
    gamma[k] = g;
    t_int[k] = t;
  }
}

namespace {

void check_forecast(std::size_t ph, const std::vector<double>& t_surr) {
  if (ph == 0) throw ConfigError("prediction horizon must be at least 1");
  if (t_surr.size() < ph) throw ConfigError("ambient forecast shorter than the horizon");
}

// Rolls the plant from x_start over steps [first, ph) and writes the per-step
// increments into out; states[k] receives the state before step k when given.
void roll(const TesState& x_start, std::size_t first, const InputTrajectory& u,
          const std::vector<double>& t_surr, const TankModel& m, const RolloutOptions& opt,
          OutputTrajectory& out, std::vector<TesState>* states) {
  TesState x = x_start;
  double gamma = charge_ratio(x, m);
  for (std::size_t k = first; k < u.size(); ++k) {
    if (states) (*states)[k] = x;
    auto step = simulate_step(x, u.q_tes[k], u.q_tes_sec[k], t_surr[k], opt.dt, opt.n_sub, m);
    const double next_gamma = charge_ratio(step.state, m);
    out.d_gamma[k] = next_gamma - gamma;
    out.d_t_int[k] = step.state.t_int - x.t_int;
    gamma = next_gamma;
    x = std::move(step.state);
  }
}

OutputTrajectory empty_output(const TesState& x0, std::size_t ph, const TankModel& m) {
  OutputTrajectory out;
  out.gamma0 = charge_ratio(x0, m);
  out.t_int0 = x0.t_int;
  out.d_gamma.assign(ph, 0.0);
  out.d_t_int.assign(ph, 0.0);
  return out;
}

}  // namespace

OutputTrajectory rollout(const TesState& x0, const InputTrajectory& u,
                         const std::vector<double>& t_surr, const TankModel& m,
                         const RolloutOptions& opt) {
  check_forecast(u.size(), t_surr);
  OutputTrajectory out = empty_output(x0, u.size(), m);
  roll(x0, 0, u, t_surr, m, opt, out, nullptr);
  out.accumulate();
  return out;
}

OutputTrajectory free_response(const TesState& x0, const std::vector<double>& t_surr,
                               const TankModel& m, const RolloutOptions& opt) {
  check_forecast(t_surr.size(), t_surr);
  return rollout(x0, InputTrajectory::zeros(t_surr.size()), t_surr, m, opt);
}

double default_perturbation(const TankModel& m, const LimitConfig& limits) {
  const TesState any = m.uniform_state(0.5, m.pcm.t_lat);
  return 0.01 * power_limits(any, m, limits, /*reset_front=*/true).q_tes_max;
}

LinearPrediction jacobian(const TesState& x0, const std::vector<double>& t_surr,
                          const TankModel& m, const RolloutOptions& ro,
                          const JacobianOptions& opt) {
  return jacobian(x0, t_surr, m, ro, opt, InputTrajectory::zeros(t_surr.size()));
}

LinearPrediction jacobian(const TesState& x0, const std::vector<double>& t_surr,
                          const TankModel& m, const RolloutOptions& ro,
                          const JacobianOptions& opt, const InputTrajectory& base) {
  const std::size_t ph = t_surr.size();
  check_forecast(ph, t_surr);
  if (!(opt.eps > 0.0)) throw ConfigError("jacobian: perturbation must be positive");
  if (base.size() != ph || base.q_tes_sec.size() != ph) {
    throw ConfigError("jacobian: base trajectory length does not match the horizon");
  }

  LinearPrediction lp;
  lp.x0 = x0;
  lp.base = base;
  OutputTrajectory y_base = empty_output(x0, ph, m);
  std::vector<TesState> states(ph);
  roll(x0, 0, base, t_surr, m, ro, y_base, &states);

  const std::size_t n = 2 * ph;
  lp.g = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  std::vector<std::exception_ptr> errors(n);

  // Column c perturbs input c; outputs before its step equal the base
  // response exactly, so only rows from that step on are filled.
  const auto column = [&](std::size_t c) {
    try {
      const std::size_t step = c / 2;
      InputTrajectory u = base;
      (c % 2 == 0 ? u.q_tes : u.q_tes_sec)[step] += opt.eps;
      OutputTrajectory pert = empty_output(x0, ph, m);
      roll(states[step], step, u, t_surr, m, ro, pert, nullptr);
      for (std::size_t k = step; k < ph; ++k) {
        const double dg = (pert.d_gamma[k] - y_base.d_gamma[k]) / opt.eps;
        const double dt = (pert.d_t_int[k] - y_base.d_t_int[k]) / opt.eps;
        if (!std::isfinite(dg) || !std::isfinite(dt)) {
          throw NumericError("jacobian: non-finite column for input index " + std::to_string(c));
        }
        lp.g(static_cast<Eigen::Index>(2 * k), static_cast<Eigen::Index>(c)) = dg;
        lp.g(static_cast<Eigen::Index>(2 * k + 1), static_cast<Eigen::Index>(c)) = dt;
      }
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };

  const unsigned workers = std::clamp<unsigned>(opt.threads, 1u, static_cast<unsigned>(n));
  if (workers == 1) {
    for (std::size_t c = 0; c < n; ++c) column(c);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t c = w; c < n; c += workers) column(c);
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  // Offset such that predict(base) reproduces the base rollout.
  lp.y_free = y_base;
  if (base.stacked().isZero(0.0)) {
    lp.y_free.accumulate();
    return lp;
  }
  const Eigen::VectorXd offset = y_base.stacked() - lp.g * base.stacked();
  for (std::size_t k = 0; k < ph; ++k) {
    lp.y_free.d_gamma[k] = offset[static_cast<Eigen::Index>(2 * k)];
    lp.y_free.d_t_int[k] = offset[static_cast<Eigen::Index>(2 * k + 1)];
  }
  lp.y_free.accumulate();
  return lp;
}

OutputTrajectory predict(const LinearPrediction& lp, const InputTrajectory& u) {
  const std::size_t ph = lp.horizon();
  if (u.size() != ph || u.q_tes_sec.size() != ph) {
    throw ConfigError("predict: input trajectory length " + std::to_string(u.size()) +
                      " does not match horizon " + std::to_string(ph));
  }
  const Eigen::VectorXd y = lp.y_free.stacked() + lp.g * u.stacked();
  OutputTrajectory out = lp.y_free;
  for (std::size_t k = 0; k < ph; ++k) {
    out.d_gamma[k] = y[static_cast<Eigen::Index>(2 * k)];
    out.d_t_int[k] = y[static_cast<Eigen::Index>(2 * k + 1)];
  }
  out.accumulate();
  return out;
}

}  // namespace tes
