#include "oracle_lp.hpp"

#include <Eigen/Dense>
#include <limits>
#include <vector>

#include "sddp/common.hpp"

namespace sddp::testing {

namespace {

// One candidate active-set row: either a >= row of the LP or a variable bound.
struct PoolRow {
  Eigen::VectorXd a;
  double rhs;
};

}  // namespace

BfsOracleResult enumerate_bfs_minimum(const LinearProgram& lp, double feas_tol) {
  const int n = lp.n();
  const int me = lp.m_eq();
  const int mg = lp.m_ge();

  std::vector<PoolRow> pool;
  for (int r = 0; r < mg; ++r) pool.push_back({lp.A_ge.row(r).transpose(), lp.b_ge(r)});
  for (int i = 0; i < n; ++i) {
    if (!lp.nonneg[i]) continue;
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e(i) = 1.0;
    pool.push_back({std::move(e), 0.0});
  }

  const int k = n - me;
  BfsOracleResult best;
  if (k < 0 || k > static_cast<int>(pool.size())) return best;

  const double scale =
      1.0 + std::max(lp.b_eq.size() ? lp.b_eq.lpNorm<Eigen::Infinity>() : 0.0,
                     lp.b_ge.size() ? lp.b_ge.lpNorm<Eigen::Infinity>() : 0.0);
  const double tol = feas_tol * scale;

  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;

  const auto try_active_set = [&]() {
    Eigen::MatrixXd M(n, n);
    Eigen::VectorXd rhs(n);
    for (int r = 0; r < me; ++r) {
      M.row(r) = lp.A_eq.row(r);
      rhs(r) = lp.b_eq(r);
    }
    for (int j = 0; j < k; ++j) {
      M.row(me + j) = pool[idx[j]].a.transpose();
      rhs(me + j) = pool[idx[j]].rhs;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    if (!lu.isInvertible()) return;
    const Eigen::VectorXd x = lu.solve(rhs);
    if (!x.allFinite()) return;
    if (me > 0 && (lp.A_eq * x - lp.b_eq).lpNorm<Eigen::Infinity>() > tol) return;
    if (mg > 0 && ((lp.A_ge * x - lp.b_ge).array() < -tol).any()) return;
    for (int i = 0; i < n; ++i)
      if (lp.nonneg[i] && x(i) < -tol) return;
    const double obj = lp.c.dot(x);
    if (!best.found || obj < best.objective) {
      best.found = true;
      best.objective = obj;
      best.x = x;
    }
  };

  if (k == 0) {
    try_active_set();
    return best;
  }
  // Walk all size-k combinations of the pool in lexicographic order.
  while (true) {
    try_active_set();
    int pos = k - 1;
    while (pos >= 0 && idx[pos] == static_cast<int>(pool.size()) - k + pos) --pos;
    if (pos < 0) break;
    ++idx[pos];
    for (int j = pos + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return best;
}

LinearProgram random_feasible_lp(int n, int m_eq, int m_ge, std::uint64_t seed,
                                 bool with_free_vars) {
  Rng rng(seed);
  LinearProgram lp;
  lp.nonneg.assign(n, true);
  if (with_free_vars) {
    for (int i = 0; i < n; ++i)
      if (rng.uniform() < 0.4) lp.nonneg[i] = false;
  }

  Eigen::VectorXd xhat(n);
  for (int i = 0; i < n; ++i)
    xhat(i) = lp.nonneg[i] ? rng.uniform(0.2, 2.0) : rng.uniform(-2.0, 2.0);

  lp.c = Eigen::VectorXd::NullaryExpr(n, [&](Eigen::Index) { return rng.uniform(0.1, 1.0); });
  lp.A_eq = Eigen::MatrixXd::NullaryExpr(m_eq, n,
                                         [&](Eigen::Index, Eigen::Index) { return rng.uniform(-1.0, 1.0); });
  lp.b_eq = m_eq > 0 ? Eigen::VectorXd(lp.A_eq * xhat) : Eigen::VectorXd(0);

  // Strictly feasible inequalities, plus an explicit lower bound per free
  // variable so the feasible set contains no line and the minimum is finite.
  int extra = 0;
  for (int i = 0; i < n; ++i)
    if (!lp.nonneg[i]) ++extra;
  lp.A_ge = Eigen::MatrixXd::Zero(m_ge + extra, n);
  lp.b_ge = Eigen::VectorXd::Zero(m_ge + extra);
  for (int r = 0; r < m_ge; ++r) {
    for (int j = 0; j < n; ++j) lp.A_ge(r, j) = rng.uniform(-1.0, 1.0);
    lp.b_ge(r) = lp.A_ge.row(r).dot(xhat) - rng.uniform(0.05, 1.0);
  }
  int r = m_ge;
  for (int i = 0; i < n; ++i) {
    if (lp.nonneg[i]) continue;
    lp.A_ge(r, i) = 1.0;
    lp.b_ge(r) = xhat(i) - rng.uniform(0.5, 1.5);
    ++r;
  }
  return lp;
}

}  // namespace sddp::testing
