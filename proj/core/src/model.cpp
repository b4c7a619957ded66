#include "sddp/model.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "sddp/common.hpp"

namespace sddp {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

void StageTemplate::validate(int xi_dim) const {
  const int d = dim();
  const int me = static_cast<int>(base_b.size());
  const int mg = static_cast<int>(base_b_ge.size());
  require(d > 0, "stage template has no variables");
  require(base_A.rows() == me && base_A.cols() == d, "stage equality matrix shape mismatch");
  require(base_B.rows() == me, "coupling matrix row count mismatch");
  require(base_A_ge.rows() == mg && (mg == 0 || base_A_ge.cols() == d),
          "stage inequality matrix shape mismatch");
  require(all_finite(base_c) && all_finite(base_A) && all_finite(base_B) && all_finite(base_b) &&
              all_finite(base_A_ge) && all_finite(base_b_ge),
          "stage template has non-finite entries");
  for (const XiBinding& inj : injections) {
    require(inj.xi_index >= 0 && inj.xi_index < xi_dim, "binding references missing observation");
    require(std::isfinite(inj.scale) && std::isfinite(inj.offset), "binding has non-finite affine");
    switch (inj.target) {
      case XiTarget::Cost:
        require(inj.row >= 0 && inj.row < d, "cost binding out of range");
        break;
      case XiTarget::RhsEq:
        require(inj.row >= 0 && inj.row < me, "equality rhs binding out of range");
        break;
      case XiTarget::RhsGe:
        require(inj.row >= 0 && inj.row < mg, "inequality rhs binding out of range");
        break;
      case XiTarget::MatEq:
        require(inj.row >= 0 && inj.row < me && inj.col >= 0 && inj.col < d,
                "equality matrix binding out of range");
        break;
      case XiTarget::MatGe:
        require(inj.row >= 0 && inj.row < mg && inj.col >= 0 && inj.col < d,
                "inequality matrix binding out of range");
        break;
    }
  }
}

void StageDistribution::validate() const {
  const int n = dim();
  require(n > 0, "empty stage distribution");
  require(stddev.size() == n && floor.size() == n, "stage distribution shape mismatch");
  require(all_finite(mean), "non-finite distribution mean");
  require(all_finite(stddev) && (stddev.array() >= 0.0).all(), "invalid distribution stddev");
  for (int i = 0; i < n; ++i) {
    require(!std::isnan(floor(i)) && floor(i) < std::numeric_limits<double>::infinity(),
            "invalid distribution floor");
    if (stddev(i) > 0.0) {
      // Rejection sampling needs non-vanishing acceptance mass.
      require(floor(i) - mean(i) <= 5.0 * stddev(i), "truncation removes nearly all mass");
    }
  }
}

const StageDistribution& ScenarioDistribution::at(int t) const {
  require(t >= 2, "scenario stages start at 2");
  if (stationary) {
    require(!stages.empty(), "empty scenario distribution");
    return stages.front();
  }
  const std::size_t idx = static_cast<std::size_t>(t - 2);
  require(idx < stages.size(), "scenario stage out of range");
  return stages[idx];
}

void ScenarioDistribution::validate(int horizon) const {
  require(horizon >= 2, "horizon must be at least 2");
  if (stationary) {
    require(stages.size() == 1, "stationary distribution must hold one stage");
  } else {
    require(static_cast<int>(stages.size()) == horizon - 1,
            "per-stage distribution must cover stages 2..T");
  }
  const int n = stages.front().dim();
  for (const StageDistribution& s : stages) {
    s.validate();
    require(s.dim() == n, "scenario dimension varies across stages");
  }
}

std::vector<int> ProblemInstance::stage_dims() const {
  std::vector<int> dims;
  dims.reserve(stages.size());
  for (const StageTemplate& s : stages) dims.push_back(s.dim());
  return dims;
}

void ProblemInstance::validate() const {
  require(T >= 2, "horizon must be at least 2");
  require(static_cast<int>(stages.size()) == T, "stage count does not match horizon");
  dist.validate(T);
  const int xi_dim = dist.stages.front().dim();
  for (int t = 1; t <= T; ++t) {
    stages[t - 1].validate(xi_dim);
    if (t >= 2) {
      require(stages[t - 1].prev_dim() == stages[t - 2].dim(),
              "stage coupling dimension does not chain");
    }
  }
  require(xi_1.size() == xi_dim, "first-stage observation dimension mismatch");
  require(all_finite(xi_1), "non-finite first-stage observation");
  require(x0.size() == stages.front().prev_dim(), "initial state dimension mismatch");
  require(all_finite(x0), "non-finite initial state");
  require(value_floors.size() == 0 || value_floors.size() == T - 1,
          "need one value floor per non-terminal cost-to-go");
  require(all_finite(value_floors), "non-finite value floor");
  require(static_cast<int>(context.size()) == T, "context must cover every stage");
  for (const Eigen::VectorXd& u : context) require(all_finite(u), "non-finite context");
}

VfnSet initial_vfns(const ProblemInstance& inst) {
  const std::vector<int> dims = inst.stage_dims();
  VfnSet vfns;
  for (int t = 2; t <= inst.T; ++t) {
    const double floor_t = inst.value_floors.size() > 0 ? inst.value_floors(t - 2) : 0.0;
    vfns.push_back(ValueFunctionApprox(
        dims[static_cast<std::size_t>(t - 2)],
        {Cut{Eigen::VectorXd::Zero(dims[static_cast<std::size_t>(t - 2)]), floor_t}}));
  }
  vfns.push_back(ValueFunctionApprox::zero(dims.back()));
  return vfns;
}

Eigen::VectorXd sample_truncated_normal(const StageDistribution& d, Rng& rng) {
  Eigen::VectorXd out(d.dim());
  for (int i = 0; i < d.dim(); ++i) {
    if (d.stddev(i) <= 0.0) {
      out(i) = std::max(d.mean(i), d.floor(i));
      continue;
    }
    double v = rng.normal(d.mean(i), d.stddev(i));
    while (v < d.floor(i)) v = rng.normal(d.mean(i), d.stddev(i));
    out(i) = v;
  }
  return out;
}

ScenarioBatch sample_scenarios(const ProblemInstance& inst, int m, std::uint64_t seed) {
  require(m > 0, "scenario batch size must be positive");
  ScenarioBatch batch;
  batch.m = m;
  batch.samples.resize(static_cast<std::size_t>(inst.T - 1));
  for (int t = 2; t <= inst.T; ++t) {
    Rng rng(derive_seed(seed, "scenario-stage", static_cast<std::uint64_t>(t)));
    auto& row = batch.samples[static_cast<std::size_t>(t - 2)];
    row.reserve(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) row.push_back(sample_truncated_normal(inst.dist.at(t), rng));
  }
  return batch;
}

StageData realize_stage(const StageTemplate& tmpl, const Eigen::VectorXd& xi) {
  StageData data{tmpl.base_c,    tmpl.base_A,    tmpl.base_B,   tmpl.base_b,
                 tmpl.base_A_ge, tmpl.base_b_ge, tmpl.free_vars};
  for (const XiBinding& inj : tmpl.injections) {
    if (inj.xi_index >= xi.size()) throw std::invalid_argument("observation too short for binding");
    const double v = inj.scale * xi(inj.xi_index) + inj.offset;
    switch (inj.target) {
      case XiTarget::Cost: data.c(inj.row) += v; break;
      case XiTarget::RhsEq: data.b(inj.row) += v; break;
      case XiTarget::RhsGe: data.b_ge(inj.row) += v; break;
      case XiTarget::MatEq: data.A(inj.row, inj.col) += v; break;
      case XiTarget::MatGe: data.A_ge(inj.row, inj.col) += v; break;
    }
  }
  return data;
}

LinearProgram build_stage_lp(const StageData& data, const Eigen::VectorXd& x_prev,
                             const ValueFunctionApprox& vfn) {
  const int d = static_cast<int>(data.c.size());
  if (vfn.dim() != d) throw std::invalid_argument("value function dimension mismatch");
  if (x_prev.size() != data.B.cols()) throw std::invalid_argument("previous action dimension mismatch");

  const int me = static_cast<int>(data.b.size());
  const int mg_env = static_cast<int>(data.b_ge.size());
  const int n_cuts = static_cast<int>(vfn.cuts().size());

  LinearProgram lp;
  lp.c.resize(d + 1);
  lp.c << data.c, 1.0;

  lp.A_eq.resize(me, d + 1);
  lp.A_eq << data.A, Eigen::VectorXd::Zero(me);
  lp.b_eq = data.b - data.B * x_prev;

  lp.A_ge.resize(mg_env + n_cuts, d + 1);
  lp.b_ge.resize(mg_env + n_cuts);
  if (mg_env > 0) {
    lp.A_ge.topRows(mg_env) << data.A_ge, Eigen::VectorXd::Zero(mg_env);
    lp.b_ge.head(mg_env) = data.b_ge;
  }
  for (int k = 0; k < n_cuts; ++k) {
    const Cut& cut = vfn.cuts()[static_cast<std::size_t>(k)];
    lp.A_ge.row(mg_env + k).head(d) = -cut.beta.transpose();
    lp.A_ge(mg_env + k, d) = 1.0;
    lp.b_ge(mg_env + k) = cut.alpha;
  }

  lp.nonneg.assign(static_cast<std::size_t>(d + 1), !data.free_vars);
  lp.nonneg.back() = false;
  return lp;
}

double CostStats::stderr_mean() const {
  const std::size_t n = per_trajectory.size();
  if (n < 2) return 0.0;
  return stddev / std::sqrt(static_cast<double>(n));
}

namespace {

CostStats make_stats(std::vector<double> costs) {
  CostStats stats;
  stats.per_trajectory = std::move(costs);
  const std::size_t n = stats.per_trajectory.size();
  if (n == 0) return stats;
  double sum = 0.0;
  for (double c : stats.per_trajectory) sum += c;
  stats.mean = sum / static_cast<double>(n);
  if (n >= 2) {
    double ss = 0.0;
    for (double c : stats.per_trajectory) {
      const double dc = c - stats.mean;
      ss += dc * dc;
    }
    stats.stddev = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return stats;
}

}  // namespace

RolloutResult rollout_policy(const ProblemInstance& inst, const VfnSet& vfns, int n_traj,
                             const ScenarioProvider& provider, bool drop_infeasible,
                             const SimplexOptions& lp_opts) {
  if (n_traj <= 0) throw std::invalid_argument("trajectory count must be positive");
  if (vfns.horizon() != inst.T) throw std::invalid_argument("value function horizon mismatch");

  RolloutResult result;
  std::vector<double> costs;
  costs.reserve(static_cast<std::size_t>(n_traj));
  result.actions.reserve(static_cast<std::size_t>(n_traj));

  for (int k = 0; k < n_traj; ++k) {
    Eigen::VectorXd x_prev = inst.x0;
    double cost = 0.0;
    std::vector<Eigen::VectorXd> actions;
    actions.reserve(static_cast<std::size_t>(inst.T));
    bool completed = true;

    for (int t = 1; t <= inst.T; ++t) {
      const Eigen::VectorXd xi = (t == 1) ? inst.xi_1 : provider(t, k);
      const StageData data = realize_stage(inst.stages[static_cast<std::size_t>(t - 1)], xi);
      const LinearProgram lp = build_stage_lp(data, x_prev, vfns.after_stage(t));
      const LpResult res = solve_lp(lp, lp_opts);
      ++result.lp_solves;
      if (res.status != LpStatus::Optimal) {
        if (drop_infeasible) {
          ++result.dropped;
          completed = false;
          break;
        }
        throw SolveError(res.status == LpStatus::Infeasible ? "stage problem infeasible"
                                                            : "stage problem unbounded",
                         t, k);
      }
      const Eigen::VectorXd x_t = res.x.head(data.c.size());
      cost += data.c.dot(x_t);
      actions.push_back(x_t);
      x_prev = x_t;
    }

    if (completed) {
      costs.push_back(cost);
      result.actions.push_back(std::move(actions));
    }
  }

  result.stats = make_stats(std::move(costs));
  return result;
}

ScenarioProvider fresh_scenario_provider(const ProblemInstance& inst, std::uint64_t seed) {
  // One stream per trajectory keeps results independent of trajectory count.
  auto streams = std::make_shared<std::vector<std::unique_ptr<Rng>>>();
  return [&inst, seed, streams](int stage, int trajectory) {
    auto& vec = *streams;
    while (static_cast<int>(vec.size()) <= trajectory) {
      vec.push_back(std::make_unique<Rng>(
          derive_seed(seed, "trajectory", static_cast<std::uint64_t>(vec.size()))));
    }
    return sample_truncated_normal(inst.dist.at(stage), *vec[static_cast<std::size_t>(trajectory)]);
  };
}

CostStats evaluate_policy(const ProblemInstance& inst, const VfnSet& vfns, int n_traj,
                          std::uint64_t seed) {
  const RolloutResult result =
      rollout_policy(inst, vfns, n_traj, fresh_scenario_provider(inst, seed), false);
  return result.stats;
}

}  // namespace sddp
