#include "sddp/inference.hpp"

#include <chrono>
#include <limits>
#include <stdexcept>
#include <utility>

#include "sddp/common.hpp"

namespace sddp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

ProblemInstance project_instance(const ProblemInstance& inst, const Eigen::MatrixXd& G) {
  const int d = static_cast<int>(G.rows());
  const int p = static_cast<int>(G.cols());
  require(p >= 1 && p <= d, "projection must map into 1..d dimensions");
  const double ortho =
      (G.transpose() * G - Eigen::MatrixXd::Identity(p, p)).cwiseAbs().maxCoeff();
  require(ortho <= 1e-8, "projection columns must be orthonormal");
  for (int t = 1; t <= inst.T; ++t) {
    require(inst.dim(t) == d, "projection rows must match every stage dimension");
  }

  ProblemInstance out;
  out.T = inst.T;
  out.dist = inst.dist;
  out.xi_1 = inst.xi_1;
  out.context = inst.context;
  out.x0 = inst.x0;
  out.value_floors = inst.value_floors;  // a restriction can only raise the cost-to-go
  out.id = inst.id + "-p" + std::to_string(p);
  out.stages.reserve(inst.stages.size());

  for (int t = 1; t <= inst.T; ++t) {
    const StageTemplate& s = inst.stages[static_cast<std::size_t>(t - 1)];
    const int mg = static_cast<int>(s.base_b_ge.size());

    StageTemplate q;
    q.free_vars = true;
    q.base_c = G.transpose() * s.base_c;
    q.base_A = s.base_A * G;
    // Stage 1 couples the raw initial state, which is not projected.
    q.base_B = (t == 1) ? s.base_B : s.base_B * G;
    q.base_b = s.base_b;
    q.base_A_ge.resize(mg + d, p);
    if (mg > 0) q.base_A_ge.topRows(mg) = s.base_A_ge * G;
    q.base_A_ge.bottomRows(d) = G;
    q.base_b_ge = Eigen::VectorXd::Zero(mg + d);
    if (mg > 0) q.base_b_ge.head(mg) = s.base_b_ge;

    // Rhs bindings survive untouched; a binding into a variable slot smears
    // across the projected columns weighted by that slot's row of G.
    for (const XiBinding& inj : s.injections) {
      switch (inj.target) {
        case XiTarget::RhsEq:
        case XiTarget::RhsGe:
          q.injections.push_back(inj);
          break;
        case XiTarget::Cost:
          for (int j = 0; j < p; ++j) {
            const double g = G(inj.row, j);
            if (g == 0.0) continue;
            q.injections.push_back(
                XiBinding{XiTarget::Cost, j, 0, inj.xi_index, inj.scale * g, inj.offset * g});
          }
          break;
        case XiTarget::MatEq:
        case XiTarget::MatGe:
          for (int j = 0; j < p; ++j) {
            const double g = G(inj.col, j);
            if (g == 0.0) continue;
            q.injections.push_back(
                XiBinding{inj.target, inj.row, j, inj.xi_index, inj.scale * g, inj.offset * g});
          }
          break;
      }
    }
    out.stages.push_back(std::move(q));
  }
  out.validate();
  return out;
}

VfnSet project_vfns(const VfnSet& vfns, const Eigen::MatrixXd& G) {
  const int d = static_cast<int>(G.rows());
  const int p = static_cast<int>(G.cols());
  VfnSet out;
  for (int t = 2; t <= vfns.horizon() + 1; ++t) {
    const ValueFunctionApprox& v = vfns.at_stage(t);
    require(v.dim() == d, "value function dimension does not match the projection");
    std::vector<Cut> cuts;
    cuts.reserve(v.cuts().size());
    for (const Cut& c : v.cuts()) cuts.push_back(Cut{G.transpose() * c.beta, c.alpha});
    out.push_back(ValueFunctionApprox(p, std::move(cuts)));
  }
  return out;
}

InferenceResult projected_rollout(const ProblemInstance& inst, const VfnSet& vfns,
                                  const Eigen::MatrixXd& G, int n_traj, std::uint64_t seed,
                                  const SimplexOptions& lp_opts) {
  require(n_traj > 0, "trajectory count must be positive");

  InferenceResult out;
  out.mode = InferenceMode::Fast;
  out.instance_id = inst.id;
  out.lower_bound = std::numeric_limits<double>::quiet_NaN();

  const auto proj_start = Clock::now();
  const ProblemInstance projected = project_instance(inst, G);
  const VfnSet projected_vfns = project_vfns(vfns, G);
  out.timings.projection = seconds_since(proj_start);

  const auto lp_start = Clock::now();
  RolloutResult roll = rollout_policy(projected, projected_vfns, n_traj,
                                      fresh_scenario_provider(projected, seed), true, lp_opts);
  out.timings.lp = seconds_since(lp_start);

  if (roll.dropped == 0 && roll.lp_solves != static_cast<long>(n_traj) * inst.T) {
    throw std::logic_error("projected rollout must solve exactly T problems per trajectory");
  }

  const auto lift_start = Clock::now();
  out.actions.reserve(roll.actions.size());
  for (const auto& traj : roll.actions) {
    std::vector<Eigen::VectorXd> lifted;
    lifted.reserve(traj.size());
    for (const Eigen::VectorXd& y : traj) {
      Eigen::VectorXd x = G * y;
      if (x.minCoeff() < -1e-6) {
        throw std::runtime_error("lifted action violates nonnegativity beyond tolerance");
      }
      lifted.push_back(std::move(x));
    }
    out.actions.push_back(std::move(lifted));
  }
  out.timings.projection += seconds_since(lift_start);

  out.stats = std::move(roll.stats);
  out.dropped = roll.dropped;
  out.projection_unusable = 5 * roll.dropped > n_traj;
  out.lp_solves = roll.lp_solves;
  return out;
}

InferenceResult fast_infer(const MaxAffinePredictor& model, const Eigen::MatrixXd& G,
                           const ProblemInstance& inst, int n_traj, std::uint64_t seed,
                           const SimplexOptions& lp_opts) {
  const auto pred_start = Clock::now();
  const VfnSet predicted = init_vfns_annealed(model, inst, 1);
  const double prediction = seconds_since(pred_start);

  InferenceResult out = projected_rollout(inst, predicted, G, n_traj, seed, lp_opts);
  out.timings.prediction = prediction;
  return out;
}

InferenceResult refine(const MaxAffinePredictor& model, const ProblemInstance& inst,
                       int n_refine, int m, int n_traj, std::uint64_t seed,
                       const SimplexOptions& lp_opts) {
  require(n_refine >= 1, "refinement needs at least one iteration");
  require(n_traj > 0, "trajectory count must be positive");

  InferenceResult out;
  out.mode = InferenceMode::Accurate;
  out.instance_id = inst.id;

  const auto pred_start = Clock::now();
  VfnSet start = init_vfns_annealed(model, inst, 1);
  out.timings.prediction = seconds_since(pred_start);

  SddpOptions opts;
  opts.n_scenarios = m;
  opts.seed = derive_seed(seed, "refine");
  opts.lp = lp_opts;
  opts.stopping.max_iterations = n_refine;
  opts.stopping.gap_rel = 0.0;
  // A stall window wider than the run disables that rule, and pushing the
  // bound checks past the horizon leaves the iteration cap as the only stop.
  opts.stopping.stall_window = n_refine + 1;
  opts.ub_interval = n_refine + 1;

  const auto ref_start = Clock::now();
  SddpResult solved = sddp_solve(inst, std::move(start), opts);
  out.timings.refinement = seconds_since(ref_start);

  // The rollout seed matches fast_infer's, so the two modes see the same
  // scenarios and their costs pair trajectory by trajectory.
  const auto lp_start = Clock::now();
  RolloutResult roll = rollout_policy(inst, solved.vfns, n_traj,
                                      fresh_scenario_provider(inst, seed), false, lp_opts);
  out.timings.lp = seconds_since(lp_start);

  out.stats = std::move(roll.stats);
  out.actions = std::move(roll.actions);
  out.lower_bound = solved.lower_bound;
  out.lp_solves = solved.lp_solves + roll.lp_solves;
  return out;
}

}  // namespace sddp
