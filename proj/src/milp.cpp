#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <thread>

#include "tes/errors.hpp"
#include "tes/milp.hpp"

namespace tes::milp {

void MixedIntegerProgram::validate() const {
  lp.validate();
  for (const auto j : binaries) {
    if (j >= lp.num_cols()) throw ConfigError("mip: binary index out of range");
  }
  for (const auto& c : clauses) {
    if (c.vars.empty()) throw ConfigError("mip: empty clause");
    for (const auto j : c.vars) {
      if (std::find(binaries.begin(), binaries.end(), j) == binaries.end()) {
        throw ConfigError("mip: clause refers to non-binary column " + std::to_string(j));
      }
    }
  }
}

double max_violation(const MixedIntegerProgram& mip, const std::vector<double>& x) {
  double worst = max_violation(mip.lp, x);
  for (const auto j : mip.binaries) {
    worst = std::max(worst, std::abs(x[j] - std::round(x[j])));
  }
  for (const auto& c : mip.clauses) {
    double sum = 0.0;
    for (const auto j : c.vars) sum += x[j];
    worst = std::max(worst, c.kind == ClauseKind::at_least_one ? 1.0 - sum : sum - 1.0);
  }
  return worst;
}

namespace {

constexpr std::int8_t kFree = -1;

struct Node {
  std::size_t id = 0;
  double bound = -kInf;
  std::vector<std::int8_t> fix;  // per column, kFree for unfixed or non-binary
};

// Unit propagation over the clauses; false when a clause cannot be met.
bool propagate(std::vector<std::int8_t>& fix, const std::vector<Clause>& clauses) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& c : clauses) {
      std::size_t ones = 0;
      std::size_t open = 0;
      std::size_t last_open = 0;
      for (const auto j : c.vars) {
        if (fix[j] == 1) ++ones;
        else if (fix[j] == kFree) {
          ++open;
          last_open = j;
        }
      }
      if (c.kind == ClauseKind::at_most_one) {
        if (ones > 1) return false;
        if (ones == 1 && open > 0) {
          for (const auto j : c.vars) {
            if (fix[j] == kFree) fix[j] = 0;
          }
          changed = true;
        }
      } else if (ones == 0) {
        if (open == 0) return false;
        if (open == 1) {
          fix[last_open] = 1;
          changed = true;
        }
      }
    }
  }
  return true;
}

// Rounding heuristic: binaries in index order, up when positive, down when
// that conflicts with a clause. False when no consistent assignment remains.
bool round_binaries(const std::vector<double>& x, const MixedIntegerProgram& mip, double int_tol,
                    std::vector<std::int8_t>& fix) {
  for (const auto j : mip.binaries) {
    if (fix[j] != kFree) continue;
    std::vector<std::int8_t> trial = fix;
    trial[j] = x[j] > int_tol ? 1 : 0;
    if (!propagate(trial, mip.clauses)) {
      trial = fix;
      trial[j] = x[j] > int_tol ? 0 : 1;
      if (!propagate(trial, mip.clauses)) return false;
    }
    fix = std::move(trial);
  }
  return true;
}

LinearProgram with_fixings(const LinearProgram& base, const std::vector<std::int8_t>& fix) {
  LinearProgram lp = base;
  for (std::size_t j = 0; j < fix.size(); ++j) {
    if (fix[j] != kFree) lp.col_lower[j] = lp.col_upper[j] = fix[j];
  }
  return lp;
}

template <class F>
void run_parallel(std::size_t count, unsigned threads, F&& f) {
  const unsigned workers = std::clamp<unsigned>(threads, 1u, static_cast<unsigned>(std::max<std::size_t>(count, 1)));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) f(i);
    });
  }
}

}  // namespace

Solution branch_and_bound(const MixedIntegerProgram& mip, const BnbOptions& opt) {
  mip.validate();
  if (opt.batch == 0) throw ConfigError("branch and bound: batch size must be positive");

  LinearProgram base = mip.lp;
  for (const auto j : mip.binaries) {
    base.col_lower[j] = std::max(base.col_lower[j], 0.0);
    base.col_upper[j] = std::min(base.col_upper[j], 1.0);
  }
  for (std::size_t k = 0; k < mip.clauses.size(); ++k) {
    const auto& c = mip.clauses[k];
    std::vector<std::pair<std::size_t, double>> coeffs;
    for (const auto j : c.vars) coeffs.emplace_back(j, 1.0);
    if (c.kind == ClauseKind::at_least_one) base.add_row(coeffs, 1.0, kInf, "clause" + std::to_string(k));
    else base.add_row(coeffs, -kInf, 1.0, "clause" + std::to_string(k));
  }

  const LpOptions lp_opt{opt.tol, LpOptions{}.max_iterations};
  Solution best;
  best.status = Status::infeasible;
  double incumbent = kInf;
  bool incomplete = false;

  Node root;
  root.fix.assign(base.num_cols(), kFree);
  for (const auto j : mip.binaries) {
    if (base.col_lower[j] > base.col_upper[j]) return best;
    if (base.col_lower[j] > 0.0) root.fix[j] = 1;
    else if (base.col_upper[j] < 1.0) root.fix[j] = 0;
  }
  if (!propagate(root.fix, mip.clauses)) return best;

  std::vector<Node> open;
  open.push_back(std::move(root));
  std::size_t next_id = 1;
  std::size_t nodes = 0;

  const auto gap = [&] { return opt.tol * std::max(1.0, std::abs(incumbent)); };
  const auto node_order = [](const Node& a, const Node& b) {
    return a.bound != b.bound ? a.bound < b.bound : a.id < b.id;
  };

  while (!open.empty()) {
    std::sort(open.begin(), open.end(), node_order);
    std::vector<Node> batch;
    std::size_t taken = 0;
    while (taken < open.size() && batch.size() < opt.batch) {
      Node& n = open[taken++];
      if (n.bound >= incumbent - gap()) continue;
      batch.push_back(std::move(n));
    }
    open.erase(open.begin(), open.begin() + static_cast<std::ptrdiff_t>(taken));
    if (batch.empty()) break;
    if (nodes + batch.size() > opt.node_limit) {
      incomplete = true;
      open.insert(open.end(), std::make_move_iterator(batch.begin()), std::make_move_iterator(batch.end()));
      break;
    }
    nodes += batch.size();

    // Rounding is tried until a first incumbent exists.
    const bool try_rounding = incumbent == kInf;
    std::vector<Solution> results(batch.size());
    std::vector<Solution> rounded(batch.size());
    run_parallel(batch.size(), opt.threads, [&](std::size_t i) {
      results[i] = solve_lp(with_fixings(base, batch[i].fix), lp_opt);
      if (results[i].status != Status::optimal || !try_rounding) return;
      std::vector<std::int8_t> fix = batch[i].fix;
      if (round_binaries(results[i].x, mip, opt.int_tol, fix)) {
        rounded[i] = solve_lp(with_fixings(base, fix), lp_opt);
      }
    });

    for (std::size_t i = 0; i < batch.size(); ++i) {
      Node& node = batch[i];
      Solution& res = results[i];
      best.iterations += res.iterations;
      if (res.status == Status::infeasible) continue;
      if (res.status == Status::unbounded) {
        best.status = Status::unbounded;
        best.x.clear();
        best.nodes = nodes;
        return best;
      }
      if (res.status == Status::iteration_limit) {
        incomplete = true;
        continue;
      }
      best.iterations += rounded[i].iterations;
      if (rounded[i].status == Status::optimal && rounded[i].objective < incumbent) {
        incumbent = rounded[i].objective;
        best.x = rounded[i].x;
        best.objective = rounded[i].objective;
        best.status = Status::optimal;
      }
      if (res.objective >= incumbent - gap()) continue;

      std::size_t branch = base.num_cols();
      double most = opt.int_tol;
      for (const auto j : mip.binaries) {
        if (node.fix[j] != kFree) continue;
        const double f = std::min(res.x[j], 1.0 - res.x[j]);
        if (f > most * (1.0 + 1e-12)) {
          most = f;
          branch = j;
        }
      }

      if (branch == base.num_cols()) {
        // Integral within tolerance: re-solve with the binaries rounded so
        // the reported point is exactly integral.
        std::vector<std::int8_t> fix = node.fix;
        for (const auto j : mip.binaries) fix[j] = static_cast<std::int8_t>(std::lround(res.x[j]));
        Solution exact = solve_lp(with_fixings(base, fix), lp_opt);
        best.iterations += exact.iterations;
        if (exact.status == Status::optimal) res = std::move(exact);
        if (res.objective < incumbent) {
          incumbent = res.objective;
          best.x = res.x;
          best.objective = res.objective;
          best.status = Status::optimal;
        }
        continue;
      }

      for (const std::int8_t v : {std::int8_t{0}, std::int8_t{1}}) {
        Node child;
        child.id = next_id++;
        child.bound = res.objective;
        child.fix = node.fix;
        child.fix[branch] = v;
        if (propagate(child.fix, mip.clauses)) open.push_back(std::move(child));
      }
    }

    double lower = incumbent;
    for (const auto& n : open) lower = std::min(lower, n.bound);
    if (!best.bound_trace.empty()) lower = std::max(lower, best.bound_trace.back());
    best.bound_trace.push_back(lower);
  }

  best.nodes = nodes;
  if (incomplete) {
    // Remaining open nodes (or failed relaxations) leave optimality unproven.
    bool proven = true;
    for (const auto& n : open) {
      if (n.bound < incumbent - gap()) proven = false;
    }
    if (!proven || best.status != Status::optimal) best.status = Status::iteration_limit;
  }
  return best;
}

namespace {

std::string sanitize(const std::string& name, const char* prefix, std::size_t idx) {
  if (name.empty()) return prefix + std::to_string(idx);
  std::string out;
  for (const char ch : name) {
    const bool ok = std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '.';
    out.push_back(ok ? ch : '_');
  }
  if (std::isdigit(static_cast<unsigned char>(out.front())) || out.front() == '.') out.insert(0, "_");
  return out;
}

void write_number(std::ostream& os, double v) {
  if (v == kInf) os << "inf";
  else if (v == -kInf) os << "-inf";
  else os << v;
}

void write_terms(std::ostream& os, const std::vector<std::pair<double, std::string>>& terms) {
  if (terms.empty()) {
    os << " 0";
    return;
  }
  bool first = true;
  for (const auto& [coef, name] : terms) {
    if (coef < 0) os << " - ";
    else if (!first) os << " + ";
    else os << ' ';
    os << std::abs(coef) << ' ' << name;
    first = false;
  }
}

}  // namespace

void write_lp_format(const MixedIntegerProgram& mip, std::ostream& os) {
  const LinearProgram& lp = mip.lp;
  lp.validate();
  const auto old_precision = os.precision(17);
  std::vector<std::string> cols(lp.num_cols());
  for (std::size_t j = 0; j < cols.size(); ++j) {
    cols[j] = sanitize(j < lp.col_names.size() ? lp.col_names[j] : std::string{}, "x", j);
  }

  os << "\\ objective offset " << lp.objective_offset << "\n";
  os << "Minimize\n obj:";
  std::vector<std::pair<double, std::string>> terms;
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (lp.cost[j] != 0.0) terms.emplace_back(lp.cost[j], cols[j]);
  }
  write_terms(os, terms);
  os << "\nSubject To\n";
  for (std::size_t i = 0; i < lp.num_rows(); ++i) {
    terms.clear();
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const double v = lp.a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (v != 0.0) terms.emplace_back(v, cols[j]);
    }
    const std::string row = sanitize(i < lp.row_names.size() ? lp.row_names[i] : std::string{}, "r", i);
    const double lo = lp.row_lower[i];
    const double hi = lp.row_upper[i];
    if (lo == hi) {
      os << ' ' << row << ':';
      write_terms(os, terms);
      os << " = " << lo << '\n';
      continue;
    }
    if (std::isfinite(lo)) {
      os << ' ' << row << (std::isfinite(hi) ? "_lo:" : ":");
      write_terms(os, terms);
      os << " >= " << lo << '\n';
    }
    if (std::isfinite(hi)) {
      os << ' ' << row << (std::isfinite(lo) ? "_hi:" : ":");
      write_terms(os, terms);
      os << " <= " << hi << '\n';
    }
  }
  for (std::size_t k = 0; k < mip.clauses.size(); ++k) {
    const auto& c = mip.clauses[k];
    terms.clear();
    for (const auto j : c.vars) terms.emplace_back(1.0, cols[j]);
    os << " clause" << k << ':';
    write_terms(os, terms);
    os << (c.kind == ClauseKind::at_least_one ? " >= 1\n" : " <= 1\n");
  }
  os << "Bounds\n";
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const double lo = lp.col_lower[j];
    const double hi = lp.col_upper[j];
    if (lo == -kInf && hi == kInf) {
      os << ' ' << cols[j] << " free\n";
    } else {
      os << ' ';
      write_number(os, lo);
      os << " <= " << cols[j] << " <= ";
      write_number(os, hi);
      os << '\n';
    }
  }
  if (!mip.binaries.empty()) {
    os << "Binaries\n";
    for (const auto j : mip.binaries) os << ' ' << cols[j] << '\n';
  }
  os << "End\n";
  os.precision(old_precision);
}

}  // namespace tes::milp
