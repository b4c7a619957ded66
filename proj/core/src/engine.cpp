#include "sddp/engine.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "sddp/common.hpp"

namespace sddp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

LpResult solve_stage_or_throw(const LinearProgram& lp, const SimplexOptions& opts, int stage,
                              int trajectory) {
  const LpResult res = solve_lp(lp, opts);
  if (res.status != LpStatus::Optimal) {
    throw SolveError(res.status == LpStatus::Infeasible ? "stage subproblem infeasible"
                                                        : "stage subproblem unbounded",
                     stage, trajectory);
  }
  return res;
}

}  // namespace

ForwardPass forward_pass(const ProblemInstance& inst, const VfnSet& vfns,
                         const ScenarioBatch& batch, int n_incumbents, Rng& index_rng,
                         const SimplexOptions& lp_opts) {
  if (n_incumbents <= 0) throw std::invalid_argument("need at least one forward trajectory");

  ForwardPass fwd;
  fwd.actions.assign(static_cast<std::size_t>(n_incumbents), {});

  const StageData first = realize_stage(inst.stages.front(), inst.xi_1);
  const LpResult res1 =
      solve_stage_or_throw(build_stage_lp(first, inst.x0, vfns.after_stage(1)), lp_opts, 1, 0);
  ++fwd.lp_solves;
  const Eigen::VectorXd x1 = res1.x.head(first.c.size());
  fwd.stage1_objective = res1.objective;

  for (int j = 0; j < n_incumbents; ++j) {
    auto& actions = fwd.actions[static_cast<std::size_t>(j)];
    actions.reserve(static_cast<std::size_t>(inst.T));
    actions.push_back(x1);
    Eigen::VectorXd x_prev = x1;
    for (int t = 2; t <= inst.T; ++t) {
      const int pick = index_rng.uniform_int(0, batch.m - 1);
      const StageData data =
          realize_stage(inst.stages[static_cast<std::size_t>(t - 1)], batch.at(t, pick));
      const LpResult res =
          solve_stage_or_throw(build_stage_lp(data, x_prev, vfns.after_stage(t)), lp_opts, t, j);
      ++fwd.lp_solves;
      x_prev = res.x.head(data.c.size());
      actions.push_back(x_prev);
    }
  }
  return fwd;
}

long backward_pass(const ProblemInstance& inst, VfnSet& vfns, const ScenarioBatch& batch,
                   const std::vector<std::vector<Eigen::VectorXd>>& incumbent_actions,
                   const SimplexOptions& lp_opts) {
  long solves = 0;
  for (int t = inst.T; t >= 2; --t) {
    const StageTemplate& tmpl = inst.stages[static_cast<std::size_t>(t - 1)];
    const ValueFunctionApprox& v_next = vfns.after_stage(t);
    const int mg_env = static_cast<int>(tmpl.base_b_ge.size());

    for (std::size_t j = 0; j < incumbent_actions.size(); ++j) {
      const Eigen::VectorXd& x_prev = incumbent_actions[j].at(static_cast<std::size_t>(t - 2));
      Eigen::VectorXd beta = Eigen::VectorXd::Zero(tmpl.prev_dim());
      double alpha = 0.0;

      for (int k = 0; k < batch.m; ++k) {
        const StageData data = realize_stage(tmpl, batch.at(t, k));
        const LpResult res = solve_stage_or_throw(build_stage_lp(data, x_prev, v_next), lp_opts,
                                                  t, static_cast<int>(j));
        ++solves;
        beta.noalias() -= data.B.transpose() * res.dual_eq;
        alpha += data.b.dot(res.dual_eq);
        if (mg_env > 0) alpha += data.b_ge.dot(res.dual_ge.head(mg_env));
        const auto& cuts = v_next.cuts();
        for (std::size_t i = 0; i < cuts.size(); ++i) {
          alpha += cuts[i].alpha * res.dual_ge(mg_env + static_cast<int>(i));
        }
      }

      const double inv_m = 1.0 / static_cast<double>(batch.m);
      vfns.at_stage(t).append(Cut{beta * inv_m, alpha * inv_m});
    }
  }
  return solves;
}

double lower_bound(const ProblemInstance& inst, const VfnSet& vfns,
                   const SimplexOptions& lp_opts) {
  const StageData first = realize_stage(inst.stages.front(), inst.xi_1);
  const LpResult res =
      solve_stage_or_throw(build_stage_lp(first, inst.x0, vfns.after_stage(1)), lp_opts, 1, 0);
  return res.objective;
}

CostStats upper_bound_estimate(const ProblemInstance& inst, const VfnSet& vfns, int n_traj,
                               std::uint64_t seed) {
  return evaluate_policy(inst, vfns, n_traj, seed);
}

RolloutResult tree_rollout(const ProblemInstance& inst, const VfnSet& vfns,
                           const ScenarioBatch& batch, int n_traj, std::uint64_t seed,
                           const SimplexOptions& lp_opts) {
  // One index stream per trajectory so results do not depend on n_traj.
  auto streams = std::make_shared<std::vector<std::unique_ptr<Rng>>>();
  auto provider = [&batch, seed, streams](int stage, int trajectory) {
    auto& vec = *streams;
    while (static_cast<int>(vec.size()) <= trajectory) {
      vec.push_back(std::make_unique<Rng>(
          derive_seed(seed, "tree-path", static_cast<std::uint64_t>(vec.size()))));
    }
    const int pick = vec[static_cast<std::size_t>(trajectory)]->uniform_int(0, batch.m - 1);
    return batch.at(stage, pick);
  };
  return rollout_policy(inst, vfns, n_traj, provider, false, lp_opts);
}

SddpResult sddp_solve(const ProblemInstance& inst, const SddpOptions& opts) {
  return sddp_solve(inst, initial_vfns(inst), opts);
}

SddpResult sddp_solve(const ProblemInstance& inst, VfnSet warm_start, const SddpOptions& opts) {
  inst.validate();
  if (warm_start.horizon() != inst.T) throw std::invalid_argument("warm start horizon mismatch");
  const std::vector<int> dims = inst.stage_dims();
  for (int t = 2; t <= inst.T + 1; ++t) {
    if (warm_start.at_stage(t).dim() != dims[static_cast<std::size_t>(t - 2)]) {
      throw std::invalid_argument("warm start dimension mismatch");
    }
  }
  if (opts.n_scenarios <= 0 || opts.n_incumbents <= 0 || opts.ub_trajectories <= 0 ||
      opts.ub_interval <= 0 || opts.stopping.max_iterations <= 0) {
    throw std::invalid_argument("solver options must be positive");
  }

  SddpResult result;
  result.vfns = std::move(warm_start);
  for (int t = 2; t <= inst.T + 1; ++t) {
    result.initial_cut_counts.push_back(
        static_cast<int>(result.vfns.at_stage(t).cuts().size()));
  }

  const ScenarioBatch batch =
      sample_scenarios(inst, opts.n_scenarios, derive_seed(opts.seed, "saa-tree"));
  Rng index_rng(derive_seed(opts.seed, "forward-picks"));

  std::vector<double> lb_history;
  lb_history.reserve(static_cast<std::size_t>(opts.stopping.max_iterations));
  std::uint64_t ub_counter = 0;

  auto tree_upper = [&](int n_traj) {
    const RolloutResult r = tree_rollout(inst, result.vfns, batch, n_traj,
                                         derive_seed(opts.seed, "ub-check", ub_counter++),
                                         opts.lp);
    result.lp_solves += r.lp_solves;
    return r.stats;
  };

  for (int iter = 1; iter <= opts.stopping.max_iterations; ++iter) {
    result.iterations = iter;

    ForwardPass fwd =
        forward_pass(inst, result.vfns, batch, opts.n_incumbents, index_rng, opts.lp);
    result.lp_solves += fwd.lp_solves;
    result.lp_solves += backward_pass(inst, result.vfns, batch, fwd.actions, opts.lp);
    result.actions = std::move(fwd.actions);

    const double lb = lower_bound(inst, result.vfns, opts.lp);
    ++result.lp_solves;
    result.lower_bound = lb;
    lb_history.push_back(lb);

    BoundRecord record{iter, lb, kNaN, kNaN};

    bool stalled = false;
    if (static_cast<int>(lb_history.size()) > opts.stopping.stall_window) {
      const double past =
          lb_history[lb_history.size() - 1 - static_cast<std::size_t>(opts.stopping.stall_window)];
      const double progress = (lb - past) / std::max(1.0, std::abs(lb));
      stalled = progress < opts.stopping.stall_rel;
    }

    if (iter % opts.ub_interval == 0 || stalled || iter == opts.stopping.max_iterations) {
      const CostStats ub = tree_upper(opts.ub_trajectories);
      record.upper_mean = ub.mean;
      record.upper_stderr = ub.stderr_mean();
      const double denom = std::max(std::abs(lb), 1e-9);
      if ((ub.mean - lb) / denom <= opts.stopping.gap_rel) {
        result.upper = ub;
        result.termination = SddpTermination::GapConverged;
        result.history.push_back(record);
        return result;
      }
      if (stalled) {
        result.upper = ub;
        result.termination = SddpTermination::Stalled;
        result.history.push_back(record);
        return result;
      }
    }

    result.history.push_back(record);
  }

  result.termination = SddpTermination::IterationLimit;
  result.upper = tree_upper(opts.ub_trajectories);
  return result;
}

}  // namespace sddp
