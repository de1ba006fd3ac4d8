#include <algorithm>
#include <cmath>
#include <string>

#include "tes/errors.hpp"
#include "tes/milp.hpp"

namespace tes::milp {

std::size_t LinearProgram::add_col(double c, double lower, double upper, std::string name) {
  cost.push_back(c);
  col_lower.push_back(lower);
  col_upper.push_back(upper);
  col_names.push_back(std::move(name));
  a.conservativeResize(a.rows(), static_cast<Eigen::Index>(cost.size()));
  a.col(a.cols() - 1).setZero();
  return cost.size() - 1;
}

std::size_t LinearProgram::add_row(const std::vector<std::pair<std::size_t, double>>& coeffs,
                                   double lower, double upper, std::string name) {
  const Eigen::Index r = a.rows();
  a.conservativeResize(r + 1, static_cast<Eigen::Index>(cost.size()));
  a.row(r).setZero();
  for (const auto& [j, v] : coeffs) {
    if (j >= cost.size()) throw ConfigError("add_row: column index out of range");
    a(r, static_cast<Eigen::Index>(j)) += v;
  }
  row_lower.push_back(lower);
  row_upper.push_back(upper);
  row_names.push_back(std::move(name));
  return row_lower.size() - 1;
}

void LinearProgram::validate() const {
  const auto n = num_cols();
  const auto m = num_rows();
  if (col_lower.size() != n || col_upper.size() != n) throw ConfigError("lp: column bound sizes");
  if (row_upper.size() != m) throw ConfigError("lp: row bound sizes");
  if (static_cast<std::size_t>(a.rows()) != m || static_cast<std::size_t>(a.cols()) != n) {
    throw ConfigError("lp: matrix is " + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + ", expected " + std::to_string(m) + "x" +
                      std::to_string(n));
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (!(col_lower[j] <= col_upper[j])) throw ConfigError("lp: crossed bounds on column " + std::to_string(j));
    if (!std::isfinite(cost[j])) throw ConfigError("lp: non-finite cost");
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (!(row_lower[i] <= row_upper[i])) throw ConfigError("lp: crossed bounds on row " + std::to_string(i));
  }
  if (!a.allFinite()) throw ConfigError("lp: non-finite matrix entry");
}

const char* to_string(Status s) {
  switch (s) {
    case Status::optimal: return "optimal";
    case Status::infeasible: return "infeasible";
    case Status::unbounded: return "unbounded";
    case Status::iteration_limit: return "iteration_limit";
  }
  return "unknown";
}

double max_violation(const LinearProgram& lp, const std::vector<double>& x) {
  double worst = 0.0;
  for (std::size_t j = 0; j < lp.num_cols(); ++j) {
    worst = std::max({worst, lp.col_lower[j] - x[j], x[j] - lp.col_upper[j]});
  }
  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  const Eigen::VectorXd act = lp.a * xv;
  for (std::size_t i = 0; i < lp.num_rows(); ++i) {
    const double v = act[static_cast<Eigen::Index>(i)];
    worst = std::max({worst, lp.row_lower[i] - v, v - lp.row_upper[i]});
  }
  return worst;
}

namespace {

enum class At : unsigned char { lower, upper, free, basic };

double pow2_scale(double magnitude) {
  if (!(magnitude > 0.0) || !std::isfinite(magnitude)) return 1.0;
  return std::ldexp(1.0, -std::ilogb(magnitude));
}

// Dense bounded-variable primal simplex. Variables are the structural
// columns, one logical per row (s_i = A_i x, bounded by the row bounds) and
// phase-one artificials.
class Simplex {
 public:
  Simplex(const LinearProgram& lp, const LpOptions& opt) : lp_(lp), opt_(opt) {}

  Solution run() {
    lp_.validate();
    setup();
    Solution sol;

    // Phase one: drive the artificials to zero.
    std::vector<double> c1(nvar_, 0.0);
    for (std::size_t k = n_ + m_; k < nvar_; ++k) c1[k] = 1.0;
    if (nvar_ > n_ + m_) {
      const Status s = optimize(c1);
      if (s == Status::iteration_limit) return finish(Status::iteration_limit);
      double infeas = 0.0;
      for (std::size_t k = n_ + m_; k < nvar_; ++k) infeas += x_[k];
      if (infeas > opt_.tol) return finish(Status::infeasible);
      for (std::size_t k = n_ + m_; k < nvar_; ++k) {
        lo_[k] = hi_[k] = 0.0;
        if (at_[k] != At::basic) {
          x_[k] = 0.0;
          at_[k] = At::lower;
        }
      }
    }

    std::vector<double> c2(nvar_, 0.0);
    double cmax = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      c2[j] = lp_.cost[j] * col_scale_[j];
      cmax = std::max(cmax, std::abs(c2[j]));
    }
    const double cs = pow2_scale(cmax);
    for (std::size_t j = 0; j < n_; ++j) c2[j] *= cs;
    return finish(optimize(c2));
  }

 private:
  void setup() {
    n_ = lp_.num_cols();
    m_ = lp_.num_rows();
    const auto m = static_cast<Eigen::Index>(m_);

    // Power-of-two equilibration keeps the scaling exact.
    row_scale_.assign(m_, 1.0);
    col_scale_.assign(n_, 1.0);
    Eigen::MatrixXd as = lp_.a;
    for (Eigen::Index i = 0; i < m; ++i) {
      row_scale_[static_cast<std::size_t>(i)] = pow2_scale(as.row(i).cwiseAbs().maxCoeff());
      as.row(i) *= row_scale_[static_cast<std::size_t>(i)];
    }
    for (std::size_t j = 0; j < n_; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      if (m > 0) col_scale_[j] = pow2_scale(as.col(jj).cwiseAbs().maxCoeff());
      as.col(jj) *= col_scale_[j];
    }

    // Bounds in scaled units, structural columns start at a finite bound.
    lo_.assign(n_ + m_, 0.0);
    hi_.assign(n_ + m_, 0.0);
    x_.assign(n_ + m_, 0.0);
    at_.assign(n_ + m_, At::lower);
    for (std::size_t j = 0; j < n_; ++j) {
      lo_[j] = lp_.col_lower[j] / col_scale_[j];
      hi_[j] = lp_.col_upper[j] / col_scale_[j];
      if (std::isfinite(lo_[j])) {
        x_[j] = lo_[j];
        at_[j] = At::lower;
      } else if (std::isfinite(hi_[j])) {
        x_[j] = hi_[j];
        at_[j] = At::upper;
      } else {
        x_[j] = 0.0;
        at_[j] = At::free;
      }
    }
    const Eigen::Map<const Eigen::VectorXd> xs(x_.data(), static_cast<Eigen::Index>(n_));
    const Eigen::VectorXd act = as * xs;

    basis_.assign(m_, 0);
    std::vector<std::pair<std::size_t, double>> artificials;  // (row, sign)
    for (std::size_t i = 0; i < m_; ++i) {
      const std::size_t s = n_ + i;
      lo_[s] = lp_.row_lower[i] * row_scale_[i];
      hi_[s] = lp_.row_upper[i] * row_scale_[i];
      const double r = act[static_cast<Eigen::Index>(i)];
      if (r >= lo_[s] - opt_.tol && r <= hi_[s] + opt_.tol) {
        x_[s] = r;
        at_[s] = At::basic;
        basis_[i] = s;
      } else {
        const bool below = r < lo_[s];
        x_[s] = below ? lo_[s] : hi_[s];
        at_[s] = below ? At::lower : At::upper;
        artificials.emplace_back(i, below ? 1.0 : -1.0);
      }
    }

    nvar_ = n_ + m_ + artificials.size();
    full_ = Eigen::MatrixXd::Zero(m, static_cast<Eigen::Index>(nvar_));
    full_.leftCols(static_cast<Eigen::Index>(n_)) = as;
    for (std::size_t i = 0; i < m_; ++i) {
      full_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n_ + i)) = -1.0;
    }
    for (std::size_t k = 0; k < artificials.size(); ++k) {
      const auto [row, sign] = artificials[k];
      const std::size_t v = n_ + m_ + k;
      full_(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(v)) = sign;
      lo_.push_back(0.0);
      hi_.push_back(kInf);
      // A_i x - s_i + sign a = 0 with s_i at its violated bound.
      x_.push_back((x_[n_ + row] - act[static_cast<Eigen::Index>(row)]) / sign);
      at_.push_back(At::basic);
      basis_[row] = v;
    }
    refactor();
  }

  // Recomputes the basic values, and the tableau unless only the values are
  // needed, from the original columns.
  void refactor(bool with_tableau = true) {
    const auto m = static_cast<Eigen::Index>(m_);
    if (m == 0) {
      tab_.resize(0, static_cast<Eigen::Index>(nvar_));
      return;
    }
    Eigen::MatrixXd b(m, m);
    for (Eigen::Index i = 0; i < m; ++i) b.col(i) = full_.col(static_cast<Eigen::Index>(basis_[i]));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
    for (std::size_t j = 0; j < nvar_; ++j) {
      if (at_[j] != At::basic && x_[j] != 0.0) rhs -= full_.col(static_cast<Eigen::Index>(j)) * x_[j];
    }
    Eigen::VectorXd xb;
    if (b.isDiagonal()) {
      // Slack and artificial starting basis: entries are exactly +-1.
      const Eigen::VectorXd d = b.diagonal();
      if (with_tableau) tab_ = d.cwiseInverse().asDiagonal() * full_;
      xb = rhs.cwiseQuotient(d);
    } else {
      const Eigen::PartialPivLU<Eigen::MatrixXd> lu(b);
      if (with_tableau) tab_ = lu.solve(full_);
      xb = lu.solve(rhs);
    }
    for (Eigen::Index i = 0; i < m; ++i) x_[basis_[static_cast<std::size_t>(i)]] = xb[i];
    if (with_tableau) since_refactor_ = 0;
  }

  Status optimize(const std::vector<double>& c) {
    constexpr double kPivTol = 1e-9;
    constexpr std::size_t kDegenerateRun = 50;
    constexpr std::size_t kRefactorEvery = 64;
    const double dtol = opt_.tol * 1e-2;
    std::size_t degenerate = 0;
    bool bland = false;
    const auto m = static_cast<Eigen::Index>(m_);

    Eigen::VectorXd cb(m);
    while (true) {
      if (iterations_ >= opt_.max_iterations) return Status::iteration_limit;
      for (Eigen::Index i = 0; i < m; ++i) cb[i] = c[basis_[static_cast<std::size_t>(i)]];
      const Eigen::VectorXd dual_row = tab_.transpose() * cb;

      // Pricing.
      std::size_t enter = nvar_;
      double enter_dir = 0.0;
      double best = 0.0;
      for (std::size_t j = 0; j < nvar_; ++j) {
        if (at_[j] == At::basic || lo_[j] == hi_[j]) continue;
        const double d = c[j] - dual_row[static_cast<Eigen::Index>(j)];
        double dir = 0.0;
        if (at_[j] == At::lower && d < -dtol) dir = 1.0;
        else if (at_[j] == At::upper && d > dtol) dir = -1.0;
        else if (at_[j] == At::free && std::abs(d) > dtol) dir = d < 0.0 ? 1.0 : -1.0;
        if (dir == 0.0) continue;
        if (bland) {
          enter = j;
          enter_dir = dir;
          break;
        }
        // Near-ties keep the lowest index so that scaling the costs does not
        // change the pivot sequence.
        if (std::abs(d) > best * (1.0 + 1e-9)) {
          best = std::abs(d);
          enter = j;
          enter_dir = dir;
        }
      }
      if (enter == nvar_) return Status::optimal;

      // Ratio test.
      const auto je = static_cast<Eigen::Index>(enter);
      double step = kInf;
      if (std::isfinite(lo_[enter]) && std::isfinite(hi_[enter])) step = hi_[enter] - lo_[enter];
      std::vector<std::pair<Eigen::Index, double>> limits;
      limits.reserve(static_cast<std::size_t>(m));
      double t_min = step;
      for (Eigen::Index i = 0; i < m; ++i) {
        const double rate = -enter_dir * tab_(i, je);
        const std::size_t v = basis_[static_cast<std::size_t>(i)];
        double lim = kInf;
        if (rate > kPivTol && std::isfinite(hi_[v])) lim = (hi_[v] - x_[v]) / rate;
        else if (rate < -kPivTol && std::isfinite(lo_[v])) lim = (lo_[v] - x_[v]) / rate;
        if (!std::isfinite(lim)) continue;
        lim = std::max(lim, 0.0);
        limits.emplace_back(i, lim);
        t_min = std::min(t_min, lim);
      }
      if (!std::isfinite(t_min)) return Status::unbounded;

      Eigen::Index leave = -1;
      if (t_min < step) {
        const double tie = t_min + 1e-12 * (1.0 + t_min);
        double best_piv = 0.0;
        for (const auto& [i, lim] : limits) {
          if (lim > tie) continue;
          const double piv = std::abs(tab_(i, je));
          if (bland) {
            if (leave < 0 || basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)]) leave = i;
          } else if (piv > best_piv) {
            best_piv = piv;
            leave = i;
          }
        }
      }

      const double t = leave >= 0 ? t_min : step;
      ++iterations_;
      if (t <= 1e-12) {
        if (++degenerate > kDegenerateRun) bland = true;
      } else {
        degenerate = 0;
        bland = false;
      }

      x_[enter] += enter_dir * t;
      for (Eigen::Index i = 0; i < m; ++i) {
        x_[basis_[static_cast<std::size_t>(i)]] -= enter_dir * tab_(i, je) * t;
      }

      if (leave < 0) {
        // Bound flip of the entering variable.
        at_[enter] = enter_dir > 0.0 ? At::upper : At::lower;
        x_[enter] = enter_dir > 0.0 ? hi_[enter] : lo_[enter];
        continue;
      }

      const std::size_t out = basis_[static_cast<std::size_t>(leave)];
      const double rate = -enter_dir * tab_(leave, je);
      at_[out] = rate > 0.0 ? At::upper : At::lower;
      x_[out] = rate > 0.0 ? hi_[out] : lo_[out];
      if (lo_[out] == hi_[out]) at_[out] = At::lower;

      const double piv = tab_(leave, je);
      tab_.row(leave) /= piv;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (i == leave) continue;
        const double f = tab_(i, je);
        if (f != 0.0) tab_.row(i) -= f * tab_.row(leave);
      }
      basis_[static_cast<std::size_t>(leave)] = enter;
      at_[enter] = At::basic;

      if (++since_refactor_ >= kRefactorEvery) refactor();
    }
  }

  Solution finish(Status status) {
    Solution sol;
    sol.status = status;
    sol.iterations = iterations_;
    if (status != Status::optimal) return sol;
    refactor(false);
    sol.x.resize(n_);
    double obj = lp_.objective_offset;
    for (std::size_t j = 0; j < n_; ++j) {
      double v = x_[j] * col_scale_[j];
      v = std::clamp(v, lp_.col_lower[j], lp_.col_upper[j]);
      sol.x[j] = v;
      obj += lp_.cost[j] * v;
    }
    sol.objective = obj;
    return sol;
  }

  const LinearProgram& lp_;
  LpOptions opt_;
  std::size_t n_ = 0, m_ = 0, nvar_ = 0;
  std::vector<double> row_scale_, col_scale_;
  std::vector<double> lo_, hi_, x_;
  std::vector<At> at_;
  std::vector<std::size_t> basis_;
  Eigen::MatrixXd full_, tab_;
  std::size_t iterations_ = 0;
  std::size_t since_refactor_ = 0;
};

}  // namespace

Solution solve_lp(const LinearProgram& lp, const LpOptions& opt) {
  return Simplex(lp, opt).run();
}

}  // namespace tes::milp
