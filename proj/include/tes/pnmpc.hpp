#pragma once

// Linear prediction of the tank around a base input trajectory (zero by
// default).
//
// Stacked layouts used throughout (k = 0 .. ph-1):
//   inputs  u[2k] = q_tes(k),     u[2k+1] = q_tes_sec(k)      (W)
//   outputs y[2k] = dgamma(k),    y[2k+1] = dT_int(k)          (-, K)
// so the dynamic matrix G is (2 ph) x (2 ph) and lower block triangular in
// 2x2 blocks.

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "tes/tes_core.hpp"

namespace tes {

struct InputTrajectory {
  std::vector<double> q_tes;
  std::vector<double> q_tes_sec;

  static InputTrajectory zeros(std::size_t ph) {
    return {std::vector<double>(ph, 0.0), std::vector<double>(ph, 0.0)};
  }
  std::size_t size() const { return q_tes.size(); }
  Eigen::VectorXd stacked() const;
  static InputTrajectory from_stacked(const Eigen::VectorXd& u);
};

struct OutputTrajectory {
  double gamma0 = 0.0;
  double t_int0 = 0.0;
  std::vector<double> d_gamma;
  std::vector<double> d_t_int;
  std::vector<double> gamma;  // cumulative, gamma[k] = gamma0 + sum_{i<=k} d_gamma[i]
  std::vector<double> t_int;

  std::size_t size() const { return d_gamma.size(); }
  Eigen::VectorXd stacked() const;
  /// Rebuilds the cumulative paths from the increments.
  void accumulate();
};

struct RolloutOptions {
  double dt = 3600.0;  // s per step
  int n_sub = 120;     // substeps per step, same as the plant
};

/// Nonlinear rollout of the plant model under the given inputs. t_surr has
/// one entry per step.
OutputTrajectory rollout(const TesState& x0, const InputTrajectory& u,
                         const std::vector<double>& t_surr, const TankModel& m,
                         const RolloutOptions& opt);

OutputTrajectory free_response(const TesState& x0, const std::vector<double>& t_surr,
                               const TankModel& m, const RolloutOptions& opt);

struct LinearPrediction {
  // Affine part: the free response for a zero base, otherwise the base
  // response minus G times the base inputs.
  OutputTrajectory y_free;
  Eigen::MatrixXd g;
  TesState x0;
  InputTrajectory base;

  std::size_t horizon() const { return y_free.size(); }
};

struct JacobianOptions {
  double eps = 0.0;  // W, must be positive; see default_perturbation
  unsigned threads = 1;
};

/// Default perturbation: 1% of the charging limit with the front at the
/// cylinder edge.
double default_perturbation(const TankModel& m, const LimitConfig& limits);

/// Free response plus forward-difference Jacobian of the stacked outputs with
/// respect to the stacked inputs, evaluated at u = 0. Columns are
/// independent rollouts and are computed on up to opt.threads threads; the
/// result does not depend on the thread count.
LinearPrediction jacobian(const TesState& x0, const std::vector<double>& t_surr,
                          const TankModel& m, const RolloutOptions& ro,
                          const JacobianOptions& opt);

/// Same around a non-zero base trajectory: predict(base) equals the rollout
/// of base and G holds the forward differences about it.
LinearPrediction jacobian(const TesState& x0, const std::vector<double>& t_surr,
                          const TankModel& m, const RolloutOptions& ro,
                          const JacobianOptions& opt, const InputTrajectory& base);

/// y_free + G u with the cumulative paths rebuilt.
OutputTrajectory predict(const LinearPrediction& lp, const InputTrajectory& u);

}  // namespace tes
