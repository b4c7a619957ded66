#include <benchmark/benchmark.h>

#include <Eigen/Core>

#include "sddp/common.hpp"
#include "sddp/lp.hpp"

namespace {

// Random bounded LP with a known strictly feasible interior point.
sddp::LinearProgram make_lp(int n, int me, int mg, std::uint64_t seed) {
  sddp::Rng rng(seed);
  sddp::LinearProgram lp;
  Eigen::VectorXd xhat(n);
  for (int i = 0; i < n; ++i) xhat(i) = rng.uniform(0.5, 2.0);
  lp.c = Eigen::VectorXd::NullaryExpr(n, [&](Eigen::Index) { return rng.uniform(0.1, 1.0); });
  lp.A_eq = Eigen::MatrixXd::NullaryExpr(me, n, [&](Eigen::Index, Eigen::Index) { return rng.uniform(-1.0, 1.0); });
  lp.b_eq = lp.A_eq * xhat;
  lp.A_ge = Eigen::MatrixXd::NullaryExpr(mg, n, [&](Eigen::Index, Eigen::Index) { return rng.uniform(-1.0, 1.0); });
  lp.b_ge = lp.A_ge * xhat - Eigen::VectorXd::NullaryExpr(mg, [&](Eigen::Index) { return rng.uniform(0.1, 1.0); });
  lp.nonneg.assign(n, true);
  return lp;
}

void BM_SolveLp(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto lp = make_lp(n, n / 3, n / 2, 42);
  for (auto _ : state) {
    auto res = sddp::solve_lp(lp);
    benchmark::DoNotOptimize(res.objective);
  }
}
BENCHMARK(BM_SolveLp)->Arg(8)->Arg(16)->Arg(32)->Arg(64)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
