#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace temsim::lp {

// Dense two-phase simplex sized for the dispatch programs this project
// produces (a few hundred rows/columns).  Maximization with per-variable
// bounds.  Deterministic by construction: Dantzig pricing with lowest-index
// tie-breaks, falling back to Bland's rule after a fixed pivot budget so
// degenerate instances cannot cycle.

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Status { optimal, infeasible, unbounded };

enum class Sense { le, ge, eq };

struct Row {
  std::vector<std::pair<int, double>> terms;  // (variable, coefficient)
  Sense sense = Sense::le;
  double rhs = 0.0;
  std::string label;  // surfaced when the row blocks feasibility
};

struct Problem {
  std::vector<double> objective;  // maximized
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<Row> rows;

  int add_variable(double obj, double lo, double hi) {
    objective.push_back(obj);
    lower.push_back(lo);
    upper.push_back(hi);
    return static_cast<int>(objective.size()) - 1;
  }

  void add_row(Sense sense, double rhs, std::vector<std::pair<int, double>> terms,
               std::string label = {}) {
    rows.push_back(Row{std::move(terms), sense, rhs, std::move(label)});
  }

  int num_vars() const { return static_cast<int>(objective.size()); }
};

struct Solution {
  Status status = Status::infeasible;
  double objective = 0.0;
  std::vector<double> x;
  std::string blocking;  // label or description implicated in infeasibility
};

namespace detail {

struct Tableau {
  int m = 0;       // constraint rows
  int ncols = 0;   // structural + slack + artificial
  std::vector<std::vector<double>> a;  // m x ncols
  std::vector<double> b;               // m, kept nonnegative
  std::vector<int> basis;              // m, column index basic in each row
  std::vector<double> zrow;            // ncols, reduced costs z_j - c_j
  double zval = 0.0;

  void pivot(int row, int col) {
    const double piv = a[row][col];
    std::vector<double>& pr = a[row];
    const double inv = 1.0 / piv;
    for (int j = 0; j < ncols; ++j) pr[j] *= inv;
    b[row] *= inv;
    pr[col] = 1.0;  // kill residual rounding on the pivot column
    for (int i = 0; i < m; ++i) {
      if (i == row) continue;
      const double f = a[i][col];
      if (f == 0.0) continue;
      std::vector<double>& ri = a[i];
      for (int j = 0; j < ncols; ++j) ri[j] -= f * pr[j];
      ri[col] = 0.0;
      b[i] -= f * b[row];
      if (b[i] < 0.0 && b[i] > -1e-11) b[i] = 0.0;
    }
    const double f = zrow[col];
    if (f != 0.0) {
      for (int j = 0; j < ncols; ++j) zrow[j] -= f * pr[j];
      zrow[col] = 0.0;
      zval -= f * b[row];
    }
    basis[row] = col;
  }
};

// Runs simplex iterations on the current zrow until optimal/unbounded.
// `usable[j]` masks out retired artificial columns.
inline Status iterate(Tableau& t, const std::vector<char>& usable) {
  constexpr double kReducedTol = 1e-9;
  constexpr double kPivotTol = 1e-10;
  const long bland_after = 200 + 20L * (t.m + t.ncols);
  const long max_iters = 200000;

  for (long iter = 0; iter < max_iters; ++iter) {
    const bool bland = iter > bland_after;
    int enter = -1;
    double best = -kReducedTol;
    for (int j = 0; j < t.ncols; ++j) {
      if (!usable[j]) continue;
      const double rc = t.zrow[j];
      if (rc < -kReducedTol) {
        if (bland) { enter = j; break; }
        if (rc < best) { best = rc; enter = j; }
      }
    }
    if (enter < 0) return Status::optimal;

    int leave = -1;
    double best_ratio = kInf;
    for (int i = 0; i < t.m; ++i) {
      const double aij = t.a[i][enter];
      if (aij <= kPivotTol) continue;
      const double ratio = t.b[i] / aij;
      if (ratio < best_ratio - 1e-12 ||
          (ratio < best_ratio + 1e-12 && (leave < 0 || t.basis[i] < t.basis[leave]))) {
        best_ratio = ratio;
        leave = i;
      }
    }
    if (leave < 0) return Status::unbounded;
    t.pivot(leave, enter);
  }
  throw std::runtime_error("simplex iteration budget exhausted");
}

}  // namespace detail

inline Solution solve(const Problem& p) {
  using namespace detail;
  const int n = p.num_vars();
  Solution sol;

  // Shift every variable to a zero lower bound; finite upper bounds become
  // explicit rows.  All lower bounds in this codebase are finite.
  std::vector<double> shift(n);
  for (int j = 0; j < n; ++j) {
    if (!(p.lower[j] > -kInf)) throw std::invalid_argument("variable lower bound must be finite");
    shift[j] = p.lower[j];
    if (p.upper[j] < p.lower[j] - 1e-12) {
      sol.status = Status::infeasible;
      sol.blocking = "bounds conflict on variable " + std::to_string(j);
      return sol;
    }
  }

  struct NormRow {
    std::vector<std::pair<int, double>> terms;
    Sense sense;
    double rhs;
    int source;  // index into p.rows, or -(var+1) for an upper-bound row
  };
  std::vector<NormRow> rows;
  rows.reserve(p.rows.size() + static_cast<std::size_t>(n));
  for (std::size_t r = 0; r < p.rows.size(); ++r) {
    const Row& row = p.rows[r];
    double rhs = row.rhs;
    for (const auto& [j, coef] : row.terms) rhs -= coef * shift[j];
    rows.push_back(NormRow{row.terms, row.sense, rhs, static_cast<int>(r)});
  }
  for (int j = 0; j < n; ++j) {
    if (p.upper[j] < kInf) {
      rows.push_back(NormRow{{{j, 1.0}}, Sense::le, p.upper[j] - shift[j], -(j + 1)});
    }
  }

  const int m = static_cast<int>(rows.size());

  // Column layout: structural, then one slack/surplus per inequality, then
  // artificials for = and >= rows.
  int nslack = 0, nart = 0;
  for (auto& r : rows) {
    if (r.rhs < 0) {  // normalize to nonnegative rhs
      r.rhs = -r.rhs;
      for (auto& t : r.terms) t.second = -t.second;
      if (r.sense == Sense::le) r.sense = Sense::ge;
      else if (r.sense == Sense::ge) r.sense = Sense::le;
    }
    if (r.sense != Sense::eq) ++nslack;
    if (r.sense != Sense::le) ++nart;
  }

  Tableau t;
  t.m = m;
  t.ncols = n + nslack + nart;
  t.a.assign(m, std::vector<double>(t.ncols, 0.0));
  t.b.assign(m, 0.0);
  t.basis.assign(m, -1);
  t.zrow.assign(t.ncols, 0.0);

  std::vector<int> art_row(m, -1);
  int scol = n, acol = n + nslack;
  for (int i = 0; i < m; ++i) {
    const NormRow& r = rows[i];
    for (const auto& [j, coef] : r.terms) t.a[i][j] += coef;
    t.b[i] = r.rhs;
    switch (r.sense) {
      case Sense::le:
        t.a[i][scol] = 1.0;
        t.basis[i] = scol++;
        break;
      case Sense::ge:
        t.a[i][scol++] = -1.0;
        [[fallthrough]];
      case Sense::eq:
        t.a[i][acol] = 1.0;
        t.basis[i] = acol;
        art_row[i] = acol++;
        break;
    }
  }

  std::vector<char> usable(t.ncols, 1);

  // Phase 1: maximize -(sum of artificials); price out the basic artificials.
  if (nart > 0) {
    t.zval = 0.0;
    std::fill(t.zrow.begin(), t.zrow.end(), 0.0);
    for (int j = n + nslack; j < t.ncols; ++j) t.zrow[j] = 1.0;  // z_j - c_j with c_j = -1
    for (int i = 0; i < m; ++i) {
      if (art_row[i] < 0) continue;
      for (int j = 0; j < t.ncols; ++j) t.zrow[j] -= t.a[i][j];
      t.zrow[t.basis[i]] = 0.0;
      t.zval -= t.b[i];
    }
    const Status s1 = iterate(t, usable);
    if (s1 == Status::unbounded) throw std::runtime_error("phase-1 unbounded");
    if (t.zval < -1e-7) {
      sol.status = Status::infeasible;
      // Name a row whose artificial is stuck basic at a positive level.
      for (int i = 0; i < m; ++i) {
        if (t.basis[i] >= n + nslack && t.b[i] > 1e-7) {
          const int src = rows[i].source;
          sol.blocking = src >= 0 ? p.rows[src].label
                                  : "upper bound of variable " + std::to_string(-src - 1);
          break;
        }
      }
      return sol;
    }
    // Drive any artificial still basic (at zero) out of the basis.
    for (int i = 0; i < m; ++i) {
      if (t.basis[i] < n + nslack) continue;
      int enter = -1;
      for (int j = 0; j < n + nslack; ++j) {
        if (std::abs(t.a[i][j]) > 1e-9) { enter = j; break; }
      }
      if (enter >= 0) t.pivot(i, enter);
      // else: redundant row; the zero artificial stays basic and harmless.
    }
    for (int j = n + nslack; j < t.ncols; ++j) usable[j] = 0;
  }

  // Phase 2: price the real objective under the current basis.
  t.zval = 0.0;
  std::fill(t.zrow.begin(), t.zrow.end(), 0.0);
  for (int j = 0; j < n; ++j) t.zrow[j] = -p.objective[j];
  for (int i = 0; i < m; ++i) {
    const int bj = t.basis[i];
    if (bj >= n) continue;
    const double cb = p.objective[bj];
    if (cb == 0.0) continue;
    for (int j = 0; j < t.ncols; ++j) t.zrow[j] += cb * t.a[i][j];
    t.zval += cb * t.b[i];
  }
  for (int i = 0; i < m; ++i) t.zrow[t.basis[i]] = 0.0;

  const Status s2 = iterate(t, usable);
  if (s2 == Status::unbounded) {
    sol.status = Status::unbounded;
    return sol;
  }

  sol.status = Status::optimal;
  sol.x.assign(n, 0.0);
  for (int i = 0; i < m; ++i) {
    if (t.basis[i] < n) sol.x[t.basis[i]] = t.b[i];
  }
  double obj = 0.0;
  for (int j = 0; j < n; ++j) {
    sol.x[j] += shift[j];
    if (p.upper[j] < kInf) sol.x[j] = std::min(sol.x[j], p.upper[j]);
    if (sol.x[j] < p.lower[j]) sol.x[j] = p.lower[j];
    obj += p.objective[j] * sol.x[j];
  }
  sol.objective = obj;
  return sol;
}

}  // namespace temsim::lp
