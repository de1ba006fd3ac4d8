#pragma once

// Dense LP / MILP solver used by the scheduler.
//
// LinearProgram:  minimize  cost' x + objective_offset
//                 s.t.      row_lower <= A x <= row_upper
//                           col_lower <=  x  <= col_upper
// Infinite bounds are expressed with +-infinity.

#include <Eigen/Dense>
#include <cstddef>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace tes::milp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct LinearProgram {
  std::vector<double> cost;
  double objective_offset = 0.0;
  Eigen::MatrixXd a;
  std::vector<double> row_lower;
  std::vector<double> row_upper;
  std::vector<double> col_lower;
  std::vector<double> col_upper;
  std::vector<std::string> col_names;  // optional, used for dumps
  std::vector<std::string> row_names;  // optional, used for dumps

  std::size_t num_cols() const { return cost.size(); }
  std::size_t num_rows() const { return row_lower.size(); }

  /// Appends a variable and returns its index.
  std::size_t add_col(double cost, double lower, double upper, std::string name = {});
  /// Appends a row lower <= coeffs' x <= upper and returns its index.
  std::size_t add_row(const std::vector<std::pair<std::size_t, double>>& coeffs, double lower,
                      double upper, std::string name = {});
  /// Throws ConfigError on inconsistent dimensions or crossed bounds.
  void validate() const;
};

enum class ClauseKind { at_least_one, at_most_one };

struct Clause {
  ClauseKind kind;
  std::vector<std::size_t> vars;
};

struct MixedIntegerProgram {
  LinearProgram lp;
  std::vector<std::size_t> binaries;
  std::vector<Clause> clauses;

  void validate() const;
};

enum class Status { optimal, infeasible, unbounded, iteration_limit };

const char* to_string(Status s);

struct Solution {
  Status status = Status::infeasible;
  std::vector<double> x;
  double objective = 0.0;
  std::size_t nodes = 0;
  std::size_t iterations = 0;
  /// Global lower bound after each processed batch (branch and bound only).
  std::vector<double> bound_trace;
};

struct LpOptions {
  double tol = 1e-7;  // primal feasibility and reduced-cost tolerance
  std::size_t max_iterations = 50000;
};

/// Bounded-variable primal simplex on a dense tableau. Phase one minimizes
/// the sum of artificial variables; Dantzig pricing with Bland's rule after
/// a run of degenerate pivots.
Solution solve_lp(const LinearProgram& lp, const LpOptions& opt = {});

struct BnbOptions {
  double tol = 1e-7;            // feasibility tolerance and relative optimality gap
  double int_tol = 1e-6;        // integrality tolerance
  std::size_t node_limit = 100000;
  std::size_t batch = 4;        // nodes popped per round; fixes the search order
  unsigned threads = 1;         // LP solves per round run on up to this many threads
};

/// Best-bound branch and bound over the binary variables. Clauses are
/// enforced through 0/1 propagation and also added to every relaxation as
/// linear rows. The search is deterministic for a given batch size,
/// regardless of the thread count.
Solution branch_and_bound(const MixedIntegerProgram& mip, const BnbOptions& opt = {});

/// Max violation of rows, bounds, integrality and clauses at x.
double max_violation(const MixedIntegerProgram& mip, const std::vector<double>& x);
double max_violation(const LinearProgram& lp, const std::vector<double>& x);

/// Writes the instance in CPLEX LP text format.
void write_lp_format(const MixedIntegerProgram& mip, std::ostream& os);

}  // namespace tes::milp
