#include "sddp/lp.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "sddp/common.hpp"

namespace sddp {

void LinearProgram::validate() const {
  const int nv = n();
  if (nv <= 0) throw std::invalid_argument("LinearProgram: no variables");
  if (static_cast<int>(nonneg.size()) != nv)
    throw std::invalid_argument("LinearProgram: nonneg mask size mismatch");
  if (A_eq.rows() != b_eq.size() || (A_eq.size() > 0 && A_eq.cols() != nv))
    throw std::invalid_argument("LinearProgram: equality block dimension mismatch");
  if (A_ge.rows() != b_ge.size() || (A_ge.size() > 0 && A_ge.cols() != nv))
    throw std::invalid_argument("LinearProgram: inequality block dimension mismatch");
  if (!c.allFinite() || !b_eq.allFinite() || !b_ge.allFinite() ||
      (A_eq.size() > 0 && !A_eq.allFinite()) || (A_ge.size() > 0 && !A_ge.allFinite()))
    throw std::invalid_argument("LinearProgram: non-finite entry");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Dense standard form. Columns are split/real variable columns, then one
// surplus column per >= row; artificials are implicit unit columns appended
// past n_cols. Rows are scaled so the right-hand side is nonnegative.
struct Tableau {
  Eigen::MatrixXd A;          // m x n_cols
  Eigen::VectorXd rhs;        // >= 0 after row flips
  Eigen::VectorXd flip;       // +-1 per row
  std::vector<int> col_var;   // original variable index, -1 for surplus
  std::vector<double> col_sign;
  int m = 0;
  int m_ge = 0;
  int n_var_cols = 0;
  int n_cols = 0;             // n_var_cols + m_ge
  int n_art = 0;
  std::vector<int> art_row;

  int total_cols() const { return n_cols + n_art; }
  bool is_artificial(int col) const { return col >= n_cols; }
  int first_ge_row() const { return m - m_ge; }
  int surplus_col(int row) const { return n_var_cols + (row - first_ge_row()); }

  Eigen::VectorXd column(int col) const {
    if (col < n_cols) return A.col(col);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(m);
    e(art_row[col - n_cols]) = 1.0;
    return e;
  }
};

Tableau build_tableau(const LinearProgram& lp) {
  const int n = lp.n();
  const int me = lp.m_eq();
  const int mg = lp.m_ge();
  Tableau t;
  t.m = me + mg;
  t.m_ge = mg;

  for (int i = 0; i < n; ++i) {
    t.col_var.push_back(i);
    t.col_sign.push_back(1.0);
    if (!lp.nonneg[i]) {  // free variable split x = x+ - x-
      t.col_var.push_back(i);
      t.col_sign.push_back(-1.0);
    }
  }
  t.n_var_cols = static_cast<int>(t.col_var.size());
  t.n_cols = t.n_var_cols + mg;
  for (int r = 0; r < mg; ++r) {
    t.col_var.push_back(-1);
    t.col_sign.push_back(1.0);
  }

  t.A = Eigen::MatrixXd::Zero(t.m, t.n_cols);
  t.rhs = Eigen::VectorXd::Zero(t.m);
  t.flip = Eigen::VectorXd::Ones(t.m);

  for (int k = 0; k < t.n_var_cols; ++k) {
    const int var = t.col_var[k];
    const double s = t.col_sign[k];
    if (me > 0) t.A.col(k).head(me) = s * lp.A_eq.col(var);
    if (mg > 0) t.A.col(k).tail(mg) = s * lp.A_ge.col(var);
  }
  for (int r = 0; r < mg; ++r) t.A(me + r, t.n_var_cols + r) = -1.0;  // surplus
  if (me > 0) t.rhs.head(me) = lp.b_eq;
  if (mg > 0) t.rhs.tail(mg) = lp.b_ge;

  for (int r = 0; r < t.m; ++r) {
    if (t.rhs(r) < 0) {
      t.A.row(r) = -t.A.row(r);
      t.rhs(r) = -t.rhs(r);
      t.flip(r) = -1.0;
    }
  }
  return t;
}

class Simplex {
 public:
  Simplex(Tableau tab, const SimplexOptions& opts) : t_(std::move(tab)), opts_(opts) {
    const int m = t_.m;
    basis_.resize(m, -1);
    // A flipped >= row leaves its surplus column with a +1 entry, so the
    // surplus can start basic; every other row needs an artificial.
    for (int r = 0; r < m; ++r) {
      if (r >= t_.first_ge_row() && t_.A(r, t_.surplus_col(r)) > 0.5) {
        basis_[r] = t_.surplus_col(r);
      } else {
        t_.art_row.push_back(r);
        basis_[r] = t_.n_cols + t_.n_art;
        ++t_.n_art;
      }
    }
    in_basis_.assign(t_.total_cols(), false);
    for (int b : basis_) in_basis_[b] = true;
    art_left_.assign(t_.n_art, false);
    B_inv_ = Eigen::MatrixXd::Identity(m, m);
    x_B_ = t_.rhs;
    rhs_scale_ = 1.0 + (m > 0 ? t_.rhs.lpNorm<Eigen::Infinity>() : 0.0);
  }

  LpStatus run_phase_one() {
    if (t_.n_art == 0) return LpStatus::Optimal;
    Eigen::VectorXd cost = Eigen::VectorXd::Zero(t_.total_cols());
    cost.tail(t_.n_art).setOnes();
    if (iterate(cost, /*phase=*/1) != LpStatus::Optimal)
      throw std::runtime_error("simplex: phase one failed");
    double art_sum = 0.0;
    for (int r = 0; r < t_.m; ++r)
      if (t_.is_artificial(basis_[r])) art_sum += std::max(x_B_(r), 0.0);
    if (art_sum > opts_.feas_tol * rhs_scale_) return LpStatus::Infeasible;
    drive_out_artificials();
    return LpStatus::Optimal;
  }

  LpStatus run_phase_two(const LinearProgram& lp) {
    Eigen::VectorXd cost = Eigen::VectorXd::Zero(t_.total_cols());
    for (int k = 0; k < t_.n_cols; ++k)
      if (t_.col_var[k] >= 0) cost(k) = t_.col_sign[k] * lp.c(t_.col_var[k]);
    phase_two_ = true;
    return iterate(cost, /*phase=*/2);
  }

  LpResult extract(const LinearProgram& lp) {
    refactorize();  // exact basis solve for the reported primal and duals
    LpResult res;
    res.status = LpStatus::Optimal;
    res.x = Eigen::VectorXd::Zero(lp.n());
    for (int r = 0; r < t_.m; ++r) {
      const int col = basis_[r];
      if (col < t_.n_cols && t_.col_var[col] >= 0)
        res.x(t_.col_var[col]) += t_.col_sign[col] * x_B_(r);
    }
    res.objective = lp.c.dot(res.x);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(t_.m);
    if (t_.m > 0) {
      Eigen::VectorXd c_B(t_.m);
      for (int r = 0; r < t_.m; ++r) c_B(r) = last_cost_(basis_[r]);
      y = B_inv_.transpose() * c_B;
      y = y.cwiseProduct(t_.flip);  // undo row flips
    }
    res.dual_eq = y.head(lp.m_eq());
    res.dual_ge = y.tail(lp.m_ge());
    // Optimality bounds surplus reduced costs below by -opt_tol, so any
    // negative inequality dual here is roundoff; clamp to keep duals valid.
    const double clamp_tol = 1e-6 * (1.0 + lp.c.lpNorm<Eigen::Infinity>());
    for (int i = 0; i < res.dual_ge.size(); ++i) {
      if (res.dual_ge(i) < 0.0) {
        if (res.dual_ge(i) < -clamp_tol)
          throw std::runtime_error("simplex: inequality dual sign violation");
        res.dual_ge(i) = 0.0;
      }
    }
    return res;
  }

 private:
  // A column may enter if it is nonbasic and not a retired artificial;
  // artificials never re-enter once phase two starts or after leaving.
  bool may_enter(int col) const {
    if (in_basis_[col]) return false;
    if (t_.is_artificial(col)) {
      if (phase_two_) return false;
      if (art_left_[col - t_.n_cols]) return false;
    }
    return true;
  }

  LpStatus iterate(const Eigen::VectorXd& cost, int phase) {
    last_cost_ = cost;
    const double rc_tol = opts_.opt_tol * (1.0 + cost.lpNorm<Eigen::Infinity>());
    const double x_tol = opts_.feas_tol * rhs_scale_;
    bool bland = false;
    int stall = 0;
    int pivots_since_refactor = 0;

    for (int iter = 0; iter < opts_.max_iterations; ++iter) {
      Eigen::VectorXd c_B(t_.m);
      for (int r = 0; r < t_.m; ++r) c_B(r) = cost(basis_[r]);
      const Eigen::VectorXd y = B_inv_.transpose() * c_B;

      Eigen::VectorXd rc(t_.total_cols());
      rc.head(t_.n_cols) = cost.head(t_.n_cols) - t_.A.transpose() * y;
      for (int k = 0; k < t_.n_art; ++k)
        rc(t_.n_cols + k) = cost(t_.n_cols + k) - y(t_.art_row[k]);

      int enter = -1;
      double best = -rc_tol;
      for (int j = 0; j < t_.total_cols(); ++j) {
        if (rc(j) >= (bland ? -rc_tol : best)) continue;
        if (!may_enter(j)) continue;
        enter = j;
        if (bland) break;  // Bland: first eligible index
        best = rc(j);      // Dantzig: most negative reduced cost
      }
      if (enter < 0) return LpStatus::Optimal;

      const Eigen::VectorXd a_j = t_.column(enter);
      const Eigen::VectorXd d = B_inv_ * a_j;

      int leave = -1;
      double t_min = kInf;
      bool leave_art = false;
      double leave_abs_d = 0.0;
      for (int r = 0; r < t_.m; ++r) {
        const bool basic_art = t_.is_artificial(basis_[r]);
        double ratio;
        if (d(r) > opts_.pivot_tol) {
          ratio = std::max(x_B_(r), 0.0) / d(r);
        } else if (phase == 2 && basic_art && x_B_(r) <= x_tol && d(r) < -opts_.pivot_tol) {
          ratio = 0.0;  // an artificial must not move off zero; force it out
        } else {
          continue;
        }
        bool better;
        if (leave < 0 || ratio < t_min - 1e-12) {
          better = true;
        } else if (ratio > t_min + 1e-12) {
          better = false;
        } else if (bland) {
          better = basis_[r] < basis_[leave];
        } else if (basic_art != leave_art) {
          better = basic_art;  // prefer evicting artificials on ties
        } else {
          better = std::abs(d(r)) > leave_abs_d;
        }
        if (better) {
          leave = r;
          t_min = ratio;
          leave_art = basic_art;
          leave_abs_d = std::abs(d(r));
        }
      }
      if (leave < 0) {
        if (phase == 1) throw std::runtime_error("simplex: unbounded phase-one direction");
        return LpStatus::Unbounded;
      }

      pivot(enter, leave, d, t_min);
      ++pivots_since_refactor;
      if (t_min <= x_tol) {
        if (++stall > opts_.stall_limit) bland = true;
      } else {
        stall = 0;
        bland = false;
      }
      if (pivots_since_refactor >= opts_.refactor_interval) {
        refactorize();
        pivots_since_refactor = 0;
      }
    }
    throw std::runtime_error("simplex: iteration limit exceeded");
  }

  void pivot(int enter, int leave, const Eigen::VectorXd& d, double step) {
    const int leaving_col = basis_[leave];
    in_basis_[leaving_col] = false;
    if (t_.is_artificial(leaving_col)) art_left_[leaving_col - t_.n_cols] = true;
    basis_[leave] = enter;
    in_basis_[enter] = true;

    x_B_ -= step * d;
    x_B_(leave) = step;
    for (int r = 0; r < t_.m; ++r)
      if (x_B_(r) < 0.0 && x_B_(r) > -1e-11 * rhs_scale_) x_B_(r) = 0.0;

    const double piv = d(leave);
    const Eigen::RowVectorXd pivot_row = B_inv_.row(leave) / piv;
    for (int r = 0; r < t_.m; ++r) {
      if (r == leave) continue;
      if (d(r) != 0.0) B_inv_.row(r) -= d(r) * pivot_row;
    }
    B_inv_.row(leave) = pivot_row;
  }

  void refactorize() {
    if (t_.m == 0) return;
    Eigen::MatrixXd B(t_.m, t_.m);
    for (int r = 0; r < t_.m; ++r) B.col(r) = t_.column(basis_[r]);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
    B_inv_ = lu.inverse();
    if (!B_inv_.allFinite()) throw std::runtime_error("simplex: singular basis");
    x_B_ = B_inv_ * t_.rhs;
    for (int r = 0; r < t_.m; ++r)
      if (x_B_(r) < 0.0 && x_B_(r) > -opts_.feas_tol * rhs_scale_) x_B_(r) = 0.0;
  }

  // After phase one, swap zero-valued artificials for structural columns
  // wherever the row admits a pivot; rows admitting none are linearly
  // dependent and keep their artificial pinned at zero.
  void drive_out_artificials() {
    for (int r = 0; r < t_.m; ++r) {
      if (!t_.is_artificial(basis_[r])) continue;
      const Eigen::RowVectorXd brow = B_inv_.row(r);
      for (int j = 0; j < t_.n_cols; ++j) {
        if (in_basis_[j]) continue;
        if (std::abs(brow.dot(t_.A.col(j))) > 1e-7) {
          const Eigen::VectorXd d = B_inv_ * t_.A.col(j);
          pivot(j, r, d, 0.0);
          break;
        }
      }
    }
  }

  Tableau t_;
  SimplexOptions opts_;
  std::vector<int> basis_;
  std::vector<bool> in_basis_;
  std::vector<bool> art_left_;
  Eigen::MatrixXd B_inv_;
  Eigen::VectorXd x_B_;
  Eigen::VectorXd last_cost_;
  double rhs_scale_ = 1.0;
  bool phase_two_ = false;
};

}  // namespace

LpResult solve_lp(const LinearProgram& lp, const SimplexOptions& opts) {
  lp.validate();
  Simplex s(build_tableau(lp), opts);
  if (s.run_phase_one() == LpStatus::Infeasible) {
    LpResult res;
    res.status = LpStatus::Infeasible;
    return res;
  }
  if (s.run_phase_two(lp) == LpStatus::Unbounded) {
    LpResult res;
    res.status = LpStatus::Unbounded;
    return res;
  }
  return s.extract(lp);
}

}  // namespace sddp
