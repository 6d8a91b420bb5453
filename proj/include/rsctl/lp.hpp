#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rsctl {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Relation { LessEqual, GreaterEqual, Equal };

/// minimize c^T x subject to rows and per-variable bounds.
struct LinearProgram {
  struct Row {
    std::vector<std::pair<int, double>> terms;
    Relation relation = Relation::LessEqual;
    double rhs = 0.0;
  };

  std::vector<double> objective;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<Row> rows;

  int variables() const { return static_cast<int>(objective.size()); }

  int add_variable(double cost, double lo = 0.0, double hi = kInf) {
    if (!(lo <= hi)) throw std::invalid_argument("variable bounds must satisfy lo <= hi");
    objective.push_back(cost);
    lower.push_back(lo);
    upper.push_back(hi);
    return variables() - 1;
  }

  void add_row(std::vector<std::pair<int, double>> terms, Relation relation, double rhs) {
    rows.push_back({std::move(terms), relation, rhs});
  }

  double evaluate(const std::vector<double>& x) const {
    double s = 0.0;
    for (std::size_t j = 0; j < objective.size(); ++j) s += objective[j] * x[j];
    return s;
  }

  /// Largest violation of any row or bound by `x`.
  double max_violation(const std::vector<double>& x) const {
    double worst = 0.0;
    for (const auto& r : rows) {
      double lhs = 0.0;
      for (auto [j, a] : r.terms) lhs += a * x[static_cast<std::size_t>(j)];
      double v = 0.0;
      switch (r.relation) {
        case Relation::LessEqual: v = lhs - r.rhs; break;
        case Relation::GreaterEqual: v = r.rhs - lhs; break;
        case Relation::Equal: v = std::abs(lhs - r.rhs); break;
      }
      worst = std::max(worst, v);
    }
    for (std::size_t j = 0; j < x.size(); ++j) {
      worst = std::max(worst, lower[j] - x[j]);
      worst = std::max(worst, x[j] - upper[j]);
    }
    return worst;
  }
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::Optimal: return "OPTIMAL";
    case LpStatus::Infeasible: return "INFEASIBLE";
    case LpStatus::Unbounded: return "UNBOUNDED";
  }
  return "?";
}

struct LpResult {
  LpStatus status = LpStatus::Infeasible;
  std::vector<double> values;
  double objective_value = 0.0;
  int iterations = 0;
};

struct SimplexOptions {
  double feasibility_tol = 1e-7;
  double optimality_tol = 1e-9;
  double pivot_tol = 1e-9;
  int degenerate_before_bland = 50;
  int max_iterations = 1000000;
};

namespace detail {

// Dense bounded-variable simplex on  A x = b, 0 <= x <= ub, b >= 0.
// Nonbasic variables sit at one of their bounds; the tableau holds B^-1 A and
// `value` holds the basic variable levels.
class BoundedSimplex {
 public:
  BoundedSimplex(int rows, int cols, SimplexOptions opt)
      : m_(rows), n_(cols), opt_(opt), tab_(static_cast<std::size_t>(rows) * cols, 0.0),
        ub_(static_cast<std::size_t>(cols), kInf), at_upper_(static_cast<std::size_t>(cols), false),
        basic_row_(static_cast<std::size_t>(cols), -1), basis_(static_cast<std::size_t>(rows), -1),
        value_(static_cast<std::size_t>(rows), 0.0), allowed_(static_cast<std::size_t>(cols), true) {}

  double& a(int i, int j) { return tab_[static_cast<std::size_t>(i) * n_ + j]; }
  double a(int i, int j) const { return tab_[static_cast<std::size_t>(i) * n_ + j]; }
  void set_upper(int j, double u) { ub_[static_cast<std::size_t>(j)] = u; }
  void set_rhs(int i, double b) { value_[static_cast<std::size_t>(i)] = b; }
  void set_basic(int i, int j) {
    basis_[static_cast<std::size_t>(i)] = j;
    basic_row_[static_cast<std::size_t>(j)] = i;
  }
  void forbid(int j) { allowed_[static_cast<std::size_t>(j)] = false; }
  int iterations() const { return iterations_; }

  enum class Outcome { Optimal, Unbounded };

  // Minimizes cost^T x from the current basis.
  Outcome optimize(const std::vector<double>& cost) {
    // Reduced costs d_j = c_j - c_B^T B^-1 a_j.
    reduced_ = cost;
    for (int i = 0; i < m_; ++i) {
      const double cb = cost[static_cast<std::size_t>(basis_[static_cast<std::size_t>(i)])];
      if (cb == 0.0) continue;
      const double* row = &tab_[static_cast<std::size_t>(i) * n_];
      for (int j = 0; j < n_; ++j) reduced_[static_cast<std::size_t>(j)] -= cb * row[j];
    }
    int degenerate_run = 0;
    std::vector<double> column(static_cast<std::size_t>(m_));
    while (true) {
      if (++iterations_ > opt_.max_iterations) throw std::runtime_error("simplex iteration limit reached");
      const bool bland = degenerate_run >= opt_.degenerate_before_bland;
      int enter = -1;
      double best = 0.0;
      for (int j = 0; j < n_; ++j) {
        if (basic_row_[static_cast<std::size_t>(j)] >= 0 || !allowed_[static_cast<std::size_t>(j)]) continue;
        const double d = reduced_[static_cast<std::size_t>(j)];
        const bool up = at_upper_[static_cast<std::size_t>(j)];
        const double gain = up ? d : -d;
        if (gain <= opt_.optimality_tol) continue;
        if (up == false && ub_[static_cast<std::size_t>(j)] <= 0.0) continue;  // fixed at zero
        if (bland) {
          enter = j;
          break;
        }
        if (gain > best) {
          best = gain;
          enter = j;
        }
      }
      if (enter < 0) return Outcome::Optimal;

      const double dir = at_upper_[static_cast<std::size_t>(enter)] ? -1.0 : 1.0;
      for (int i = 0; i < m_; ++i) column[static_cast<std::size_t>(i)] = a(i, enter);

      double step = ub_[static_cast<std::size_t>(enter)];
      int leave = -1;
      bool leave_to_upper = false;
      double leave_pivot = 0.0;
      for (int i = 0; i < m_; ++i) {
        const double rate = -dir * column[static_cast<std::size_t>(i)];
        if (std::abs(rate) <= opt_.pivot_tol) continue;
        const int bv = basis_[static_cast<std::size_t>(i)];
        const double val = value_[static_cast<std::size_t>(i)];
        double limit;
        bool to_upper;
        if (rate < 0.0) {
          limit = std::max(0.0, val) / -rate;
          to_upper = false;
        } else {
          const double u = ub_[static_cast<std::size_t>(bv)];
          if (u == kInf) continue;
          limit = std::max(0.0, u - val) / rate;
          to_upper = true;
        }
        bool take = false;
        if (limit < step - 1e-12) {
          take = true;
        } else if (limit <= step + 1e-12 && leave >= 0) {
          take = bland ? bv < basis_[static_cast<std::size_t>(leave)] : std::abs(rate) > std::abs(leave_pivot);
        }
        if (take) {
          step = std::min(step, limit);
          leave = i;
          leave_to_upper = to_upper;
          leave_pivot = rate;
        }
      }
      if (step == kInf) return Outcome::Unbounded;
      degenerate_run = step <= 1e-12 ? degenerate_run + 1 : 0;

      for (int i = 0; i < m_; ++i)
        value_[static_cast<std::size_t>(i)] += -dir * column[static_cast<std::size_t>(i)] * step;

      if (leave < 0) {
        at_upper_[static_cast<std::size_t>(enter)] = !at_upper_[static_cast<std::size_t>(enter)];
        continue;
      }
      const int out = basis_[static_cast<std::size_t>(leave)];
      const double entering_value = (at_upper_[static_cast<std::size_t>(enter)] ? ub_[static_cast<std::size_t>(enter)] : 0.0) + dir * step;
      pivot(leave, enter);
      value_[static_cast<std::size_t>(leave)] = entering_value;
      at_upper_[static_cast<std::size_t>(out)] = leave_to_upper;
      at_upper_[static_cast<std::size_t>(enter)] = false;
    }
  }

  void pivot(int r, int j) {
    const double p = a(r, j);
    double* prow = &tab_[static_cast<std::size_t>(r) * n_];
    for (int k = 0; k < n_; ++k) prow[k] /= p;
    nonzero_.clear();
    for (int k = 0; k < n_; ++k)
      if (prow[k] != 0.0) nonzero_.push_back(k);
    for (int i = 0; i < m_; ++i) {
      if (i == r) continue;
      double* row = &tab_[static_cast<std::size_t>(i) * n_];
      const double f = row[j];
      if (f == 0.0) continue;
      for (int k : nonzero_) row[k] -= f * prow[k];
      row[j] = 0.0;
    }
    if (!reduced_.empty()) {
      const double f = reduced_[static_cast<std::size_t>(j)];
      if (f != 0.0) {
        for (int k : nonzero_) reduced_[static_cast<std::size_t>(k)] -= f * prow[k];
        reduced_[static_cast<std::size_t>(j)] = 0.0;
      }
    }
    const int out = basis_[static_cast<std::size_t>(r)];
    basic_row_[static_cast<std::size_t>(out)] = -1;
    set_basic(r, j);
  }

  // Moves basic variables in `columns` out of the basis where a nonzero pivot
  // on another allowed column exists. Used to expel artificials after phase 1.
  void expel(const std::vector<bool>& columns) {
    for (int i = 0; i < m_; ++i) {
      const int bv = basis_[static_cast<std::size_t>(i)];
      if (!columns[static_cast<std::size_t>(bv)]) continue;
      int best = -1;
      double mag = opt_.pivot_tol;
      for (int j = 0; j < n_; ++j) {
        if (columns[static_cast<std::size_t>(j)] || basic_row_[static_cast<std::size_t>(j)] >= 0) continue;
        if (std::abs(a(i, j)) > mag) {
          mag = std::abs(a(i, j));
          best = j;
        }
      }
      if (best < 0) continue;  // redundant row; the artificial stays basic at zero
      const double level = at_upper_[static_cast<std::size_t>(best)] ? ub_[static_cast<std::size_t>(best)] : 0.0;
      pivot(i, best);
      // Degenerate pivot: the artificial (at ~0) leaves at its lower bound.
      value_[static_cast<std::size_t>(i)] = level;
      at_upper_[static_cast<std::size_t>(best)] = false;
    }
  }

  double column_value(int j) const {
    const int r = basic_row_[static_cast<std::size_t>(j)];
    if (r >= 0) return value_[static_cast<std::size_t>(r)];
    return at_upper_[static_cast<std::size_t>(j)] ? ub_[static_cast<std::size_t>(j)] : 0.0;
  }

 private:
  int m_;
  int n_;
  SimplexOptions opt_;
  std::vector<double> tab_;
  std::vector<double> ub_;
  std::vector<bool> at_upper_;
  std::vector<int> basic_row_;
  std::vector<int> basis_;
  std::vector<double> value_;
  std::vector<bool> allowed_;
  std::vector<double> reduced_;
  std::vector<int> nonzero_;
  int iterations_ = 0;
};

}  // namespace detail

/// Solves `lp` to optimality with a two-phase bounded-variable simplex.
/// Dantzig pricing, switching to Bland's rule after a run of degenerate
/// pivots. Deterministic for a given input.
inline LpResult solve(const LinearProgram& lp, SimplexOptions opt = {}) {
  const int nvar = lp.variables();
  for (int j = 0; j < nvar; ++j) {
    if (!(lp.lower[static_cast<std::size_t>(j)] <= lp.upper[static_cast<std::size_t>(j)]))
      return {LpStatus::Infeasible, {}, 0.0, 0};
    if (!std::isfinite(lp.objective[static_cast<std::size_t>(j)])) throw std::invalid_argument("non-finite cost");
  }

  // Internal columns: each original variable maps to one column (shifted or
  // mirrored) or two (free split).
  struct Map {
    int col;
    double sign;
    double offset;
    int neg_col;
  };
  std::vector<Map> map(static_cast<std::size_t>(nvar));
  std::vector<double> col_ub;
  std::vector<double> col_cost;
  for (int j = 0; j < nvar; ++j) {
    const double lo = lp.lower[static_cast<std::size_t>(j)], hi = lp.upper[static_cast<std::size_t>(j)];
    const double c = lp.objective[static_cast<std::size_t>(j)];
    auto& mp = map[static_cast<std::size_t>(j)];
    mp.neg_col = -1;
    if (lo > -kInf) {
      mp = {static_cast<int>(col_ub.size()), 1.0, lo, -1};
      col_ub.push_back(hi - lo);
      col_cost.push_back(c);
    } else if (hi < kInf) {
      mp = {static_cast<int>(col_ub.size()), -1.0, hi, -1};
      col_ub.push_back(kInf);
      col_cost.push_back(-c);
    } else {
      mp = {static_cast<int>(col_ub.size()), 1.0, 0.0, static_cast<int>(col_ub.size()) + 1};
      col_ub.push_back(kInf);
      col_ub.push_back(kInf);
      col_cost.push_back(c);
      col_cost.push_back(-c);
    }
  }
  const int structural = static_cast<int>(col_ub.size());
  const int m = static_cast<int>(lp.rows.size());

  // Row data in internal columns, rhs adjusted by offsets.
  std::vector<std::vector<std::pair<int, double>>> rows(static_cast<std::size_t>(m));
  std::vector<double> rhs(static_cast<std::size_t>(m));
  int slacks = 0;
  for (int i = 0; i < m; ++i) {
    const auto& r = lp.rows[static_cast<std::size_t>(i)];
    double b = r.rhs;
    for (auto [j, coef] : r.terms) {
      if (!std::isfinite(coef)) throw std::invalid_argument("non-finite coefficient");
      const auto& mp = map[static_cast<std::size_t>(j)];
      b -= coef * mp.offset;
      rows[static_cast<std::size_t>(i)].push_back({mp.col, coef * mp.sign});
      if (mp.neg_col >= 0) rows[static_cast<std::size_t>(i)].push_back({mp.neg_col, -coef});
    }
    rhs[static_cast<std::size_t>(i)] = b;
    if (r.relation != Relation::Equal) ++slacks;
  }

  // Slack per inequality; artificial per row that lacks a +1 slack after
  // making the rhs nonnegative.
  std::vector<int> slack_col(static_cast<std::size_t>(m), -1);
  std::vector<double> slack_sign(static_cast<std::size_t>(m), 0.0);
  int next = structural;
  for (int i = 0; i < m; ++i) {
    const auto rel = lp.rows[static_cast<std::size_t>(i)].relation;
    if (rel == Relation::Equal) continue;
    slack_col[static_cast<std::size_t>(i)] = next++;
    slack_sign[static_cast<std::size_t>(i)] = rel == Relation::LessEqual ? 1.0 : -1.0;
  }
  std::vector<double> row_sign(static_cast<std::size_t>(m), 1.0);
  std::vector<int> art_col(static_cast<std::size_t>(m), -1);
  for (int i = 0; i < m; ++i) {
    if (rhs[static_cast<std::size_t>(i)] < 0.0) row_sign[static_cast<std::size_t>(i)] = -1.0;
    const bool slack_basic = slack_col[static_cast<std::size_t>(i)] >= 0 &&
                             slack_sign[static_cast<std::size_t>(i)] * row_sign[static_cast<std::size_t>(i)] > 0.0;
    if (!slack_basic) art_col[static_cast<std::size_t>(i)] = next++;
  }
  const int ncols = next;

  detail::BoundedSimplex sx(m, ncols, opt);
  std::vector<bool> is_art(static_cast<std::size_t>(ncols), false);
  for (int j = 0; j < structural; ++j) sx.set_upper(j, col_ub[static_cast<std::size_t>(j)]);
  for (int i = 0; i < m; ++i) {
    const double s = row_sign[static_cast<std::size_t>(i)];
    for (auto [j, coef] : rows[static_cast<std::size_t>(i)]) sx.a(i, j) += s * coef;
    if (slack_col[static_cast<std::size_t>(i)] >= 0)
      sx.a(i, slack_col[static_cast<std::size_t>(i)]) = s * slack_sign[static_cast<std::size_t>(i)];
    sx.set_rhs(i, s * rhs[static_cast<std::size_t>(i)]);
    if (art_col[static_cast<std::size_t>(i)] >= 0) {
      sx.a(i, art_col[static_cast<std::size_t>(i)]) = 1.0;
      sx.set_basic(i, art_col[static_cast<std::size_t>(i)]);
      is_art[static_cast<std::size_t>(art_col[static_cast<std::size_t>(i)])] = true;
    } else {
      sx.set_basic(i, slack_col[static_cast<std::size_t>(i)]);
    }
  }

  bool any_art = std::find(is_art.begin(), is_art.end(), true) != is_art.end();
  if (any_art) {
    std::vector<double> phase1(static_cast<std::size_t>(ncols), 0.0);
    for (int j = 0; j < ncols; ++j)
      if (is_art[static_cast<std::size_t>(j)]) phase1[static_cast<std::size_t>(j)] = 1.0;
    sx.optimize(phase1);
    double infeasibility = 0.0;
    for (int j = 0; j < ncols; ++j)
      if (is_art[static_cast<std::size_t>(j)]) infeasibility += sx.column_value(j);
    double scale = 1.0;
    for (double b : rhs) scale = std::max(scale, std::abs(b));
    if (infeasibility > opt.feasibility_tol * scale) return {LpStatus::Infeasible, {}, 0.0, sx.iterations()};
    sx.expel(is_art);
    for (int j = 0; j < ncols; ++j)
      if (is_art[static_cast<std::size_t>(j)]) {
        sx.set_upper(j, 0.0);
        sx.forbid(j);
      }
  }

  std::vector<double> cost(static_cast<std::size_t>(ncols), 0.0);
  std::copy(col_cost.begin(), col_cost.end(), cost.begin());
  if (sx.optimize(cost) == detail::BoundedSimplex::Outcome::Unbounded)
    return {LpStatus::Unbounded, {}, 0.0, sx.iterations()};

  LpResult result;
  result.status = LpStatus::Optimal;
  result.iterations = sx.iterations();
  result.values.resize(static_cast<std::size_t>(nvar));
  for (int j = 0; j < nvar; ++j) {
    const auto& mp = map[static_cast<std::size_t>(j)];
    double x = mp.offset + mp.sign * sx.column_value(mp.col);
    if (mp.neg_col >= 0) x -= sx.column_value(mp.neg_col);
    // Snap round-off onto the bounds.
    x = std::clamp(x, lp.lower[static_cast<std::size_t>(j)], lp.upper[static_cast<std::size_t>(j)]);
    result.values[static_cast<std::size_t>(j)] = x;
  }
  result.objective_value = lp.evaluate(result.values);
  return result;
}

/// Plain-text dump of the LP in an LP-format-like notation.
inline void write_lp_text(std::ostream& os, const LinearProgram& lp) {
  auto term = [&os](double a, int j, bool first) {
    if (!first) os << (a < 0 ? " - " : " + ");
    else if (a < 0) os << "-";
    os << std::abs(a) << " x" << j;
  };
  os << "minimize\n  obj:";
  bool first = true;
  for (int j = 0; j < lp.variables(); ++j) {
    if (lp.objective[static_cast<std::size_t>(j)] == 0.0) continue;
    os << ' ';
    term(lp.objective[static_cast<std::size_t>(j)], j, first);
    first = false;
  }
  if (first) os << " 0";
  os << "\nsubject to\n";
  for (std::size_t i = 0; i < lp.rows.size(); ++i) {
    const auto& r = lp.rows[i];
    os << "  c" << i << ":";
    bool f = true;
    for (auto [j, a] : r.terms) {
      os << ' ';
      term(a, j, f);
      f = false;
    }
    if (f) os << " 0";
    os << (r.relation == Relation::LessEqual ? " <= " : r.relation == Relation::GreaterEqual ? " >= " : " = ")
       << r.rhs << '\n';
  }
  os << "bounds\n";
  for (int j = 0; j < lp.variables(); ++j)
    os << "  " << lp.lower[static_cast<std::size_t>(j)] << " <= x" << j << " <= " << lp.upper[static_cast<std::size_t>(j)]
       << '\n';
  os << "end\n";
}

inline std::string to_lp_text(const LinearProgram& lp) {
  std::ostringstream os;
  write_lp_text(os, lp);
  return os.str();
}

}  // namespace rsctl
