#pragma once

// Sparse linear programs and a bounded-variable primal revised simplex.
//
// The solver works on   min c'x  s.t.  A x (<=,=,>=) b,  l <= x <= u
// by appending one slack per row (A x + s = b) and, where the slack basis is
// not primal feasible, one artificial per row for a textbook phase 1.
// The basis is factorized with a sparse LU and updated in product form
// between refactorizations. Pricing is Dantzig with a Harris two-pass ratio
// test; after a run of degenerate pivots the solve switches to Bland's rule.

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cms/common.hpp"

namespace cms::lp {

enum class Sense { LessEqual, Equal, GreaterEqual };
enum class Status { Optimal, Infeasible, Unbounded, IterationLimit };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::Infeasible: return "infeasible";
    case Status::Unbounded: return "unbounded";
    case Status::IterationLimit: return "iteration_limit";
  }
  return "?";
}

using Term = std::pair<int, double>;

struct LinearProgram {
  std::vector<double> cost;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<std::string> col_names;

  std::vector<Sense> sense;
  std::vector<double> rhs;
  std::vector<std::string> row_names;
  std::vector<Eigen::Triplet<double>> entries;

  int num_cols() const { return static_cast<int>(cost.size()); }
  int num_rows() const { return static_cast<int>(rhs.size()); }

  int add_variable(double lo, double hi, double c = 0.0, std::string name = {}) {
    cost.push_back(c);
    lower.push_back(lo);
    upper.push_back(hi);
    col_names.push_back(std::move(name));
    return num_cols() - 1;
  }

  int add_row(std::span<const Term> terms, Sense s, double b, std::string name = {}) {
    const int r = num_rows();
    for (const auto& [col, v] : terms) {
      if (v != 0.0) entries.emplace_back(r, col, v);
    }
    sense.push_back(s);
    rhs.push_back(b);
    row_names.push_back(std::move(name));
    return r;
  }
  int add_row(std::initializer_list<Term> terms, Sense s, double b, std::string name = {}) {
    return add_row(std::span<const Term>(terms.begin(), terms.size()), s, b, std::move(name));
  }

  void validate() const {
    const auto n = cost.size();
    if (lower.size() != n || upper.size() != n) throw ValidationError("lp: bound vectors do not match column count");
    if (sense.size() != rhs.size()) throw ValidationError("lp: row sense/rhs size mismatch");
    for (std::size_t j = 0; j < n; ++j) {
      if (std::isnan(cost[j]) || std::isnan(lower[j]) || std::isnan(upper[j]))
        throw ValidationError("lp: NaN in column " + std::to_string(j));
      if (lower[j] > upper[j])
        throw ValidationError("lp: inconsistent bounds on column " + std::to_string(j) + " (" +
                              (j < col_names.size() ? col_names[j] : std::string{}) + ")");
    }
    for (double b : rhs)
      if (!std::isfinite(b)) throw ValidationError("lp: non-finite right-hand side");
    for (const auto& e : entries) {
      if (e.row() < 0 || e.row() >= num_rows() || e.col() < 0 || e.col() >= num_cols())
        throw ValidationError("lp: coefficient index out of range");
      if (!std::isfinite(e.value())) throw ValidationError("lp: non-finite coefficient");
    }
  }

  Eigen::SparseMatrix<double> matrix() const {
    Eigen::SparseMatrix<double> a(num_rows(), num_cols());
    a.setFromTriplets(entries.begin(), entries.end());
    a.makeCompressed();
    return a;
  }

  double row_activity(int row, std::span<const double> x) const {
    double s = 0.0;
    for (const auto& e : entries)
      if (e.row() == row) s += e.value() * x[e.col()];
    return s;
  }
};

enum class VarStatus : std::uint8_t { Basic, AtLower, AtUpper, FreeZero };

// Basis statuses for structural columns followed by row slacks.
struct Basis {
  std::vector<VarStatus> status;
  bool empty() const { return status.empty(); }
};

struct LpOptions {
  int max_iter = 200000;
  double feas_tol = 1e-7;
  double opt_tol = 1e-7;
  double pivot_tol = 1e-9;
  int refactor_interval = 64;
  int degenerate_limit = 200;  // consecutive degenerate pivots before Bland
  bool bland = false;
  bool scale = true;
};

struct LpSolution {
  Status status = Status::Infeasible;
  std::vector<double> x;
  double objective = 0.0;
  std::vector<double> duals;           // one per row, y = c_B B^-1 (unscaled)
  std::vector<double> reduced_costs;   // one per structural column
  int iterations = 0;
  bool used_bland = false;
  bool warm_started = false;
  bool numerical_trouble = false;
  Basis basis;
  std::vector<int> entering_sequence;  // pivot trace, for determinism checks
};

namespace detail {

class SimplexEngine {
 public:
  SimplexEngine(const LinearProgram& lp, const LpOptions& opt) : opt_(opt), n_(lp.num_cols()), m_(lp.num_rows()) {
    a_ = lp.matrix();
    col_scale_.assign(n_, 1.0);
    row_scale_.assign(m_, 1.0);
    if (opt_.scale) compute_scaling();
    for (int j = 0; j < n_; ++j) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(a_, j); it; ++it)
        it.valueRef() *= row_scale_[it.row()] * col_scale_[j];
    }
    rhs_.resize(m_);
    for (int i = 0; i < m_; ++i) rhs_[i] = lp.rhs[i] * row_scale_[i];
    const int total = n_ + 2 * m_;
    lo_.assign(total, 0.0);
    up_.assign(total, 0.0);
    cost2_.assign(total, 0.0);
    art_sign_.assign(m_, 1.0);
    for (int j = 0; j < n_; ++j) {
      lo_[j] = lp.lower[j] / col_scale_[j];
      up_[j] = lp.upper[j] / col_scale_[j];
      cost2_[j] = lp.cost[j] * col_scale_[j];
    }
    for (int i = 0; i < m_; ++i) {
      const int s = n_ + i;
      switch (lp.sense[i]) {
        case Sense::LessEqual: lo_[s] = 0.0; up_[s] = kInf; break;
        case Sense::Equal: lo_[s] = 0.0; up_[s] = 0.0; break;
        case Sense::GreaterEqual: lo_[s] = -kInf; up_[s] = 0.0; break;
      }
      lo_[n_ + m_ + i] = 0.0;
      up_[n_ + m_ + i] = 0.0;  // artificials disabled until phase 1 needs them
    }
    x_.assign(total, 0.0);
    pos_.assign(total, -1);
    head_.assign(m_, -1);
  }

  LpSolution run(const Basis* warm) {
    LpSolution sol;
    bland_ = opt_.bland;
    bool ready = false;
    if (warm && !warm->empty()) ready = try_warm_start(*warm);
    sol.warm_started = ready;
    if (!ready) cold_start();

    Status status = Status::Optimal;
    if (!ready && need_phase1_) {
      cost_.assign(n_ + 2 * m_, 0.0);
      for (int i = 0; i < m_; ++i) {
        if (up_[n_ + m_ + i] > 0.0) cost_[n_ + m_ + i] = 1.0;
      }
      status = iterate(sol);
      if (status == Status::IterationLimit) return finish(sol, status);
      double infeas = 0.0;
      for (int i = 0; i < m_; ++i) infeas += x_[n_ + m_ + i];
      if (infeas > phase1_tol()) return finish(sol, Status::Infeasible);
      for (int i = 0; i < m_; ++i) {
        const int a = n_ + m_ + i;
        up_[a] = 0.0;
        if (pos_[a] < 0) x_[a] = 0.0;
      }
      recompute_basics();
    }
    cost_ = cost2_;
    for (int i = 0; i < m_; ++i) cost_[n_ + m_ + i] = 0.0;
    status = iterate(sol);
    return finish(sol, status);
  }

 private:
  const LpOptions& opt_;
  int n_, m_;
  Eigen::SparseMatrix<double> a_;
  std::vector<double> col_scale_, row_scale_;
  std::vector<double> rhs_, lo_, up_, cost_, cost2_, x_, art_sign_;
  std::vector<int> pos_, head_;
  bool need_phase1_ = false;
  bool bland_ = false;
  bool trouble_ = false;
  int iterations_ = 0;

  mutable Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu_;
  struct Eta {
    int r;
    double pivot_inv;
    std::vector<std::pair<int, double>> col;  // entries i != r of -alpha_i / alpha_r
  };
  std::vector<Eta> etas_;

  double phase1_tol() const {
    double bmax = 1.0;
    for (double b : rhs_) bmax = std::max(bmax, std::abs(b));
    return 1e-7 * bmax;
  }

  void compute_scaling() {
    // Geometric-mean equilibration, rounded to powers of two.
    std::vector<double> rs(m_, 1.0), cs(n_, 1.0);
    for (int pass = 0; pass < 6; ++pass) {
      std::vector<double> rmin(m_, kInf), rmax(m_, 0.0);
      for (int j = 0; j < n_; ++j)
        for (Eigen::SparseMatrix<double>::InnerIterator it(a_, j); it; ++it) {
          const double v = std::abs(it.value()) * rs[it.row()] * cs[j];
          if (v == 0.0) continue;
          rmin[it.row()] = std::min(rmin[it.row()], v);
          rmax[it.row()] = std::max(rmax[it.row()], v);
        }
      for (int i = 0; i < m_; ++i)
        if (rmax[i] > 0.0) rs[i] /= std::sqrt(rmin[i] * rmax[i]);
      for (int j = 0; j < n_; ++j) {
        double cmin = kInf, cmax = 0.0;
        for (Eigen::SparseMatrix<double>::InnerIterator it(a_, j); it; ++it) {
          const double v = std::abs(it.value()) * rs[it.row()] * cs[j];
          if (v == 0.0) continue;
          cmin = std::min(cmin, v);
          cmax = std::max(cmax, v);
        }
        if (cmax > 0.0) cs[j] /= std::sqrt(cmin * cmax);
      }
    }
    auto pow2 = [](double s) { return std::exp2(std::round(std::log2(s))); };
    for (int i = 0; i < m_; ++i) row_scale_[i] = pow2(rs[i]);
    for (int j = 0; j < n_; ++j) col_scale_[j] = pow2(cs[j]);
  }

  // Column of the extended matrix [A I ±I] as a dense scatter.
  template <typename F>
  void for_column(int j, F&& f) const {
    if (j < n_) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(a_, j); it; ++it) f(static_cast<int>(it.row()), it.value());
    } else if (j < n_ + m_) {
      f(j - n_, 1.0);
    } else {
      f(j - n_ - m_, art_sign_[j - n_ - m_]);
    }
  }

  double column_dot(int j, const Eigen::VectorXd& y) const {
    double s = 0.0;
    for_column(j, [&](int i, double v) { s += v * y[i]; });
    return s;
  }

  bool refactor() {
    etas_.clear();
    if (m_ == 0) return true;
    std::vector<Eigen::Triplet<double>> trips;
    for (int p = 0; p < m_; ++p) for_column(head_[p], [&](int i, double v) { trips.emplace_back(i, p, v); });
    Eigen::SparseMatrix<double> b(m_, m_);
    b.setFromTriplets(trips.begin(), trips.end());
    b.makeCompressed();
    lu_.analyzePattern(b);
    lu_.factorize(b);
    return lu_.info() == Eigen::Success;
  }

  Eigen::VectorXd ftran(Eigen::VectorXd v) const {
    v = lu_.solve(v);
    for (const auto& e : etas_) {
      const double vr = v[e.r];
      if (vr == 0.0) continue;
      for (const auto& [i, c] : e.col) v[i] += c * vr;
      v[e.r] = e.pivot_inv * vr;
    }
    return v;
  }

  Eigen::VectorXd btran(Eigen::VectorXd v) const {
    for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
      double s = it->pivot_inv * v[it->r];
      for (const auto& [i, c] : it->col) s += c * v[i];
      v[it->r] = s;
    }
    return lu_.transpose().solve(v);
  }

  void set_nonbasic_at_bound(int j) {
    if (std::isfinite(lo_[j])) x_[j] = lo_[j];
    else if (std::isfinite(up_[j])) x_[j] = up_[j];
    else x_[j] = 0.0;
  }

  void recompute_basics() {
    if (m_ == 0) return;
    Eigen::VectorXd r = Eigen::Map<const Eigen::VectorXd>(rhs_.data(), m_);
    const int total = n_ + 2 * m_;
    for (int j = 0; j < total; ++j) {
      if (pos_[j] >= 0 || x_[j] == 0.0) continue;
      const double xj = x_[j];
      for_column(j, [&](int i, double v) { r[i] -= v * xj; });
    }
    Eigen::VectorXd xb = ftran(r);
    for (int p = 0; p < m_; ++p) x_[head_[p]] = xb[p];
  }

  void cold_start() {
    const int total = n_ + 2 * m_;
    std::fill(pos_.begin(), pos_.end(), -1);
    for (int j = 0; j < n_; ++j) set_nonbasic_at_bound(j);
    Eigen::VectorXd r = Eigen::Map<const Eigen::VectorXd>(rhs_.data(), m_);
    for (int j = 0; j < n_; ++j) {
      const double xj = x_[j];
      if (xj == 0.0) continue;
      for_column(j, [&](int i, double v) { r[i] -= v * xj; });
    }
    need_phase1_ = false;
    for (int i = 0; i < m_; ++i) {
      const int s = n_ + i, a = n_ + m_ + i;
      const double clamped = std::clamp(r[i], lo_[s], up_[s]);
      if (std::abs(clamped - r[i]) <= opt_.feas_tol) {
        head_[i] = s;
        pos_[s] = i;
        x_[s] = r[i];
        x_[a] = 0.0;
        up_[a] = 0.0;
      } else {
        x_[s] = clamped;
        const double resid = r[i] - clamped;
        art_sign_[i] = resid > 0 ? 1.0 : -1.0;
        head_[i] = a;
        pos_[a] = i;
        x_[a] = std::abs(resid);
        up_[a] = kInf;
        need_phase1_ = true;
      }
    }
    (void)total;
    refactor();
  }

  bool try_warm_start(const Basis& warm) {
    if (static_cast<int>(warm.status.size()) != n_ + m_) return false;
    std::fill(pos_.begin(), pos_.end(), -1);
    int p = 0;
    for (int j = 0; j < n_ + m_; ++j) {
      const auto st = warm.status[j];
      if (st == VarStatus::Basic) {
        if (p >= m_) return false;
        head_[p] = j;
        pos_[j] = p++;
      } else if (st == VarStatus::AtUpper && std::isfinite(up_[j])) {
        x_[j] = up_[j];
      } else if (st == VarStatus::AtLower && std::isfinite(lo_[j])) {
        x_[j] = lo_[j];
      } else {
        set_nonbasic_at_bound(j);
      }
    }
    if (p != m_) return false;
    for (int i = 0; i < m_; ++i) {
      x_[n_ + m_ + i] = 0.0;
      up_[n_ + m_ + i] = 0.0;
    }
    if (!refactor()) return false;
    recompute_basics();
    for (int q = 0; q < m_; ++q) {
      const int j = head_[q];
      if (x_[j] < lo_[j] - opt_.feas_tol || x_[j] > up_[j] + opt_.feas_tol) return false;
    }
    need_phase1_ = false;
    return true;
  }

  Status iterate(LpSolution& sol) {
    if (m_ == 0) return iterate_unconstrained();
    int degenerate = 0;
    const int total = n_ + 2 * m_;
    Eigen::VectorXd cb(m_);
    bool verified = false;
    while (true) {
      if (iterations_ >= opt_.max_iter) return Status::IterationLimit;
      for (int p = 0; p < m_; ++p) cb[p] = cost_[head_[p]];
      const Eigen::VectorXd y = btran(cb);

      // Pricing.
      int enter = -1;
      double best = 0.0, enter_d = 0.0;
      for (int j = 0; j < total; ++j) {
        if (pos_[j] >= 0) continue;
        if (lo_[j] == up_[j]) continue;
        const double d = cost_[j] - column_dot(j, y);
        const bool can_inc = x_[j] < up_[j];
        const bool can_dec = x_[j] > lo_[j];
        double score = 0.0;
        if (d < -opt_.opt_tol && can_inc) score = -d;
        else if (d > opt_.opt_tol && can_dec) score = d;
        if (score <= 0.0) continue;
        if (bland_) {
          enter = j;
          enter_d = d;
          break;
        }
        if (score > best) {
          best = score;
          enter = j;
          enter_d = d;
        }
      }
      if (enter < 0) {
        if (!etas_.empty() && !verified) {
          if (!refactor()) return recover(sol);
          recompute_basics();
          verified = true;
          continue;
        }
        return Status::Optimal;
      }
      verified = false;
      const double dir = enter_d < 0 ? 1.0 : -1.0;

      Eigen::VectorXd col = Eigen::VectorXd::Zero(m_);
      for_column(enter, [&](int i, double v) { col[i] = v; });
      const Eigen::VectorXd alpha = ftran(col);

      // Ratio test.
      const double flip = up_[enter] - lo_[enter];
      int leave_pos = -1;
      double step = kInf;
      bool leave_to_upper = false;
      if (bland_) {
        for (int p = 0; p < m_; ++p) {
          const double rate = -dir * alpha[p];
          if (std::abs(alpha[p]) <= opt_.pivot_tol) continue;
          const int j = head_[p];
          double t = kInf;
          bool to_up = false;
          if (rate < 0 && std::isfinite(lo_[j])) t = std::max(0.0, (x_[j] - lo_[j]) / -rate);
          else if (rate > 0 && std::isfinite(up_[j])) { t = std::max(0.0, (up_[j] - x_[j]) / rate); to_up = true; }
          if (t < step - 1e-12 || (t <= step + 1e-12 && leave_pos >= 0 && j < head_[leave_pos])) {
            step = t;
            leave_pos = p;
            leave_to_upper = to_up;
          }
        }
      } else {
        double tmax = kInf;
        for (int p = 0; p < m_; ++p) {
          const double rate = -dir * alpha[p];
          if (std::abs(alpha[p]) <= opt_.pivot_tol) continue;
          const int j = head_[p];
          if (rate < 0 && std::isfinite(lo_[j])) tmax = std::min(tmax, (x_[j] - lo_[j] + opt_.feas_tol) / -rate);
          else if (rate > 0 && std::isfinite(up_[j])) tmax = std::min(tmax, (up_[j] - x_[j] + opt_.feas_tol) / rate);
        }
        double best_piv = 0.0;
        for (int p = 0; p < m_; ++p) {
          const double rate = -dir * alpha[p];
          if (std::abs(alpha[p]) <= opt_.pivot_tol) continue;
          const int j = head_[p];
          double t = kInf;
          bool to_up = false;
          if (rate < 0 && std::isfinite(lo_[j])) t = (x_[j] - lo_[j]) / -rate;
          else if (rate > 0 && std::isfinite(up_[j])) { t = (up_[j] - x_[j]) / rate; to_up = true; }
          if (t <= tmax && std::abs(alpha[p]) > best_piv) {
            best_piv = std::abs(alpha[p]);
            leave_pos = p;
            step = std::max(0.0, t);
            leave_to_upper = to_up;
          }
        }
      }

      if (flip <= step) {
        // Bound flip of the entering variable; basis unchanged.
        if (!std::isfinite(flip)) return Status::Unbounded;
        x_[enter] = dir > 0 ? up_[enter] : lo_[enter];
        for (int p = 0; p < m_; ++p) x_[head_[p]] -= dir * alpha[p] * flip;
        ++iterations_;
        sol.entering_sequence.push_back(enter);
        degenerate = 0;
        continue;
      }
      if (leave_pos < 0) return Status::Unbounded;

      for (int p = 0; p < m_; ++p) x_[head_[p]] -= dir * alpha[p] * step;
      x_[enter] += dir * step;
      const int leaving = head_[leave_pos];
      x_[leaving] = leave_to_upper ? up_[leaving] : lo_[leaving];
      pos_[leaving] = -1;
      head_[leave_pos] = enter;
      pos_[enter] = leave_pos;

      Eta eta;
      eta.r = leave_pos;
      eta.pivot_inv = 1.0 / alpha[leave_pos];
      for (int p = 0; p < m_; ++p)
        if (p != leave_pos && alpha[p] != 0.0) eta.col.emplace_back(p, -alpha[p] * eta.pivot_inv);
      etas_.push_back(std::move(eta));

      ++iterations_;
      sol.entering_sequence.push_back(enter);
      if (step < 1e-12) {
        if (++degenerate > opt_.degenerate_limit && !bland_) {
          bland_ = true;
          sol.used_bland = true;
        }
      } else {
        degenerate = 0;
      }
      if (static_cast<int>(etas_.size()) >= opt_.refactor_interval) {
        if (!refactor()) return recover(sol);
        recompute_basics();
      }
    }
  }

  Status recover(LpSolution& sol) {
    // Singular basis after an update: restart from scratch with Bland's rule.
    trouble_ = true;
    return Status::IterationLimit;
  }

  Status iterate_unconstrained() {
    for (int j = 0; j < n_; ++j) {
      if (cost_[j] < 0) {
        if (!std::isfinite(up_[j])) return Status::Unbounded;
        x_[j] = up_[j];
      } else if (cost_[j] > 0) {
        if (!std::isfinite(lo_[j])) return Status::Unbounded;
        x_[j] = lo_[j];
      }
    }
    return Status::Optimal;
  }

  LpSolution& finish(LpSolution& sol, Status status) {
    sol.status = status;
    sol.numerical_trouble = trouble_;
    sol.iterations = iterations_;
    sol.used_bland = sol.used_bland || bland_;
    sol.x.assign(n_, 0.0);
    double obj = 0.0;
    for (int j = 0; j < n_; ++j) {
      sol.x[j] = x_[j] * col_scale_[j];
      obj += cost2_[j] * x_[j];
    }
    sol.objective = obj;
    sol.duals.assign(m_, 0.0);
    sol.reduced_costs.assign(n_, 0.0);
    if (status == Status::Optimal && m_ > 0) {
      Eigen::VectorXd cb(m_);
      for (int p = 0; p < m_; ++p) cb[p] = cost_[head_[p]];
      const Eigen::VectorXd y = btran(cb);
      for (int i = 0; i < m_; ++i) sol.duals[i] = y[i] * row_scale_[i];
      for (int j = 0; j < n_; ++j) sol.reduced_costs[j] = (cost2_[j] - column_dot(j, y)) / col_scale_[j];
    } else if (status == Status::Optimal) {
      for (int j = 0; j < n_; ++j) sol.reduced_costs[j] = cost2_[j] / col_scale_[j];
    }
    sol.basis.status.assign(n_ + m_, VarStatus::AtLower);
    for (int j = 0; j < n_ + m_; ++j) {
      if (pos_[j] >= 0) sol.basis.status[j] = VarStatus::Basic;
      else if (std::isfinite(up_[j]) && x_[j] == up_[j] && lo_[j] != up_[j]) sol.basis.status[j] = VarStatus::AtUpper;
      else if (!std::isfinite(lo_[j]) && !std::isfinite(up_[j])) sol.basis.status[j] = VarStatus::FreeZero;
    }
    for (int i = 0; i < m_; ++i)
      if (pos_[n_ + m_ + i] >= 0) sol.basis.status[n_ + i] = VarStatus::Basic;
    return sol;
  }
};

}  // namespace detail

inline LpSolution solve_lp(const LinearProgram& lp, const LpOptions& opt = {}, const Basis* warm = nullptr) {
  lp.validate();
  {
    detail::SimplexEngine engine(lp, opt);
    LpSolution sol = engine.run(warm);
    if (!sol.numerical_trouble) return sol;
  }
  // A singular basis was detected: re-solve from scratch with Bland's rule.
  LpOptions safe = opt;
  safe.bland = true;
  safe.refactor_interval = std::min(opt.refactor_interval, 16);
  detail::SimplexEngine engine(lp, safe);
  LpSolution sol = engine.run(nullptr);
  sol.used_bland = true;
  return sol;
}

// Max primal violation (rows and bounds) of x for lp, in original units.
inline double primal_violation(const LinearProgram& lp, std::span<const double> x) {
  std::vector<double> act(lp.num_rows(), 0.0);
  for (const auto& e : lp.entries) act[e.row()] += e.value() * x[e.col()];
  double v = 0.0;
  for (int i = 0; i < lp.num_rows(); ++i) {
    const double d = act[i] - lp.rhs[i];
    switch (lp.sense[i]) {
      case Sense::LessEqual: v = std::max(v, d); break;
      case Sense::GreaterEqual: v = std::max(v, -d); break;
      case Sense::Equal: v = std::max(v, std::abs(d)); break;
    }
  }
  for (int j = 0; j < lp.num_cols(); ++j) {
    v = std::max(v, lp.lower[j] - x[j]);
    v = std::max(v, x[j] - lp.upper[j]);
  }
  return v;
}

// Writes the program in CPLEX LP text format (for cross-checking with
// external solvers).
inline std::string to_lp_format(const LinearProgram& lp) {
  std::ostringstream os;
  os << std::setprecision(17);
  auto cname = [&](int j) {
    return (j < static_cast<int>(lp.col_names.size()) && !lp.col_names[j].empty()) ? lp.col_names[j]
                                                                                     : "x" + std::to_string(j);
  };
  auto rname = [&](int i) {
    return (i < static_cast<int>(lp.row_names.size()) && !lp.row_names[i].empty()) ? lp.row_names[i]
                                                                                    : "c" + std::to_string(i);
  };
  auto term = [&](double v, int j) {
    os << (v < 0 ? " - " : " + ") << std::abs(v) << ' ' << cname(j);
  };
  os << "Minimize\n obj:";
  bool any = false;
  for (int j = 0; j < lp.num_cols(); ++j)
    if (lp.cost[j] != 0.0) { term(lp.cost[j], j); any = true; }
  if (!any) os << " 0 " << cname(0);
  os << "\nSubject To\n";
  std::vector<std::vector<Term>> rows(lp.num_rows());
  for (const auto& e : lp.entries) rows[e.row()].emplace_back(e.col(), e.value());
  for (int i = 0; i < lp.num_rows(); ++i) {
    os << ' ' << rname(i) << ':';
    if (rows[i].empty()) os << " 0 " << cname(0);
    for (const auto& [j, v] : rows[i]) term(v, j);
    os << (lp.sense[i] == Sense::LessEqual ? " <= " : lp.sense[i] == Sense::Equal ? " = " : " >= ") << lp.rhs[i]
       << '\n';
  }
  os << "Bounds\n";
  for (int j = 0; j < lp.num_cols(); ++j) {
    const double l = lp.lower[j], u = lp.upper[j];
    if (!std::isfinite(l) && !std::isfinite(u)) os << ' ' << cname(j) << " free\n";
    else if (l == u) os << ' ' << cname(j) << " = " << l << '\n';
    else {
      os << ' ';
      if (std::isfinite(l)) os << l; else os << "-inf";
      os << " <= " << cname(j) << " <= ";
      if (std::isfinite(u)) os << u; else os << "+inf";
      os << '\n';
    }
  }
  os << "End\n";
  return os.str();
}

}  // namespace cms::lp
