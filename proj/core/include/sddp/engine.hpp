#pragma once

#include <cstdint>
#include <vector>

#include "sddp/cuts.hpp"
#include "sddp/lp.hpp"
#include "sddp/model.hpp"

namespace sddp {

struct StoppingRule {
  double gap_rel = 1e-3;    // relative bound gap that counts as converged
  double stall_rel = 1e-7;  // relative lower-bound progress below which we stop
  int stall_window = 5;     // iterations over which progress is measured
  int max_iterations = 200;
};

struct SddpOptions {
  int n_scenarios = 20;       // per-stage sample size of the SAA tree
  int n_incumbents = 1;       // forward trajectories (cuts per stage) per iteration
  int ub_trajectories = 100;  // tree rollouts per upper-bound estimate
  int ub_interval = 10;       // iterations between upper-bound checks
  std::uint64_t seed = 0;
  StoppingRule stopping;
  SimplexOptions lp;
};

enum class SddpTermination { GapConverged, Stalled, IterationLimit };

// One per iteration; upper fields are NaN on iterations without a bound check.
struct BoundRecord {
  int iteration = 0;
  double lower_bound = 0.0;
  double upper_mean = 0.0;
  double upper_stderr = 0.0;
};

struct SddpResult {
  VfnSet vfns;
  double lower_bound = 0.0;
  CostStats upper;  // tree rollout under the final value functions
  SddpTermination termination = SddpTermination::IterationLimit;
  int iterations = 0;
  std::vector<std::vector<Eigen::VectorXd>> actions;  // last forward pass, [trajectory][t-1]
  std::vector<BoundRecord> history;
  std::vector<int> initial_cut_counts;  // cuts present in V_2..V_{T+1} at entry
  long lp_solves = 0;
};

struct ForwardPass {
  std::vector<std::vector<Eigen::VectorXd>> actions;  // [trajectory][t-1]
  double stage1_objective = 0.0;                      // immediate cost plus epigraph value
  long lp_solves = 0;
};

// Simulates n_incumbents trajectories through the scenario tree under the
// current value functions. Stage 1 is deterministic, so its subproblem is
// solved once and shared.
ForwardPass forward_pass(const ProblemInstance& inst, const VfnSet& vfns,
                         const ScenarioBatch& batch, int n_incumbents, Rng& index_rng,
                         const SimplexOptions& lp_opts);

// Walks stages T..2 appending one averaged cut per incumbent to each V_t;
// stage-t subproblems price the freshly updated V_{t+1}. Returns the LP count.
long backward_pass(const ProblemInstance& inst, VfnSet& vfns, const ScenarioBatch& batch,
                   const std::vector<std::vector<Eigen::VectorXd>>& incumbent_actions,
                   const SimplexOptions& lp_opts);

// First-stage optimal objective under the current V_2, a valid lower bound on
// the sampled-tree problem value.
double lower_bound(const ProblemInstance& inst, const VfnSet& vfns,
                   const SimplexOptions& lp_opts = {});

// Statistical upper bound: policy cost over fresh scenario draws. mean plus
// two stderr is the usual confidence bound.
CostStats upper_bound_estimate(const ProblemInstance& inst, const VfnSet& vfns, int n_traj,
                               std::uint64_t seed);

// Policy rollout along uniformly sampled paths of the scenario tree.
RolloutResult tree_rollout(const ProblemInstance& inst, const VfnSet& vfns,
                           const ScenarioBatch& batch, int n_traj, std::uint64_t seed,
                           const SimplexOptions& lp_opts = {});

SddpResult sddp_solve(const ProblemInstance& inst, const SddpOptions& opts);
SddpResult sddp_solve(const ProblemInstance& inst, VfnSet warm_start, const SddpOptions& opts);

}  // namespace sddp
