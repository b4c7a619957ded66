#pragma once

#include <Eigen/Core>
#include <vector>

namespace sddp {

enum class LpStatus { Optimal, Infeasible, Unbounded };

// min c'x  s.t.  A_eq x = b_eq,  A_ge x >= b_ge,  x_i >= 0 where nonneg[i].
// Variables with nonneg[i] == false are free.
struct LinearProgram {
  Eigen::VectorXd c;
  Eigen::MatrixXd A_eq;   // m_e x n
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd A_ge;   // m_g x n
  Eigen::VectorXd b_ge;
  std::vector<bool> nonneg;

  int n() const { return static_cast<int>(c.size()); }
  int m_eq() const { return static_cast<int>(b_eq.size()); }
  int m_ge() const { return static_cast<int>(b_ge.size()); }

  // Dimension mismatches and non-finite entries are hard errors.
  void validate() const;
};

// Duals follow the convention of the Lagrangian bound b_eq'w + b_ge'r:
// dual_eq is free, dual_ge is nonnegative (tiny negatives are clamped to 0).
struct LpResult {
  LpStatus status = LpStatus::Infeasible;
  Eigen::VectorXd x;
  double objective = 0.0;
  Eigen::VectorXd dual_eq;
  Eigen::VectorXd dual_ge;
};

struct SimplexOptions {
  double pivot_tol = 1e-10;      // entries smaller than this never pivot
  double feas_tol = 1e-9;        // phase-one residual declared infeasible above this
  double opt_tol = 1e-9;         // reduced-cost optimality threshold
  int max_iterations = 50000;
  int refactor_interval = 128;   // rebuild the basis inverse every this many pivots
  int stall_limit = 200;         // degenerate pivots before switching to Bland's rule
};

// Two-phase revised simplex on dense matrices. Free variables are split
// internally; surplus columns turn >= rows into equalities. Bland's rule
// engages after a degeneracy stall, which prevents cycling.
LpResult solve_lp(const LinearProgram& lp, const SimplexOptions& opts = {});

}  // namespace sddp
