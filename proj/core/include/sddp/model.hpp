#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sddp/cuts.hpp"
#include "sddp/lp.hpp"

namespace sddp {

// Where a scenario component lands in the realized stage data. Vector targets
// use `row` as the slot index; matrix targets use (row, col).
enum class XiTarget { Cost, RhsEq, RhsGe, MatEq, MatGe };

// slot += scale * xi[xi_index] + offset. The affine form lets one observation
// feed rows of either sign (a demand cap stored as a >= row) and composed
// coefficients (a price net of a fixed base, a bid derived from an ask).
// Additive application keeps bindings closed under the change of variables a
// subspace projection performs; templates keep injected slots at zero so a
// single binding carries the whole realized value.
struct XiBinding {
  XiTarget target = XiTarget::Cost;
  int row = 0;
  int col = 0;
  int xi_index = 0;
  double scale = 1.0;
  double offset = 0.0;
};

// Stage-t data before observation injection. Equality rows couple to the
// previous action: A x_t = b - B x_prev. Inequality rows are within-stage.
struct StageTemplate {
  Eigen::VectorXd base_c;
  Eigen::MatrixXd base_A;     // m_e x d_t
  Eigen::MatrixXd base_B;     // m_e x d_{t-1}
  Eigen::VectorXd base_b;
  Eigen::MatrixXd base_A_ge;  // m_g x d_t
  Eigen::VectorXd base_b_ge;
  std::vector<XiBinding> injections;
  // Sign-free stage variables. Set by the subspace projection, which encodes
  // the original nonnegativity as explicit inequality rows instead.
  bool free_vars = false;

  int dim() const { return static_cast<int>(base_c.size()); }
  int prev_dim() const { return static_cast<int>(base_B.cols()); }
  void validate(int xi_dim) const;
};

struct StageData {
  Eigen::VectorXd c;
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::VectorXd b;
  Eigen::MatrixXd A_ge;
  Eigen::VectorXd b_ge;
  bool free_vars = false;
};

// Componentwise independent Normal with optional lower truncation. floor(i)
// of -inf means untruncated; truncation is realized by rejection, which is
// cheap at the parameter ranges the environments use.
struct StageDistribution {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
  Eigen::VectorXd floor;

  int dim() const { return static_cast<int>(mean.size()); }
  void validate() const;
};

struct ScenarioDistribution {
  bool stationary = true;
  std::vector<StageDistribution> stages;  // one entry if stationary, else T-1 (stages 2..T)

  const StageDistribution& at(int t) const;  // 2 <= t <= T
  int dim(int t) const { return at(t).dim(); }
  void validate(int horizon) const;
};

struct ProblemInstance {
  int T = 0;
  std::vector<StageTemplate> stages;      // size T
  ScenarioDistribution dist;
  Eigen::VectorXd xi_1;                   // known first-stage observation
  std::vector<Eigen::VectorXd> context;   // u_t, size T
  Eigen::VectorXd x0;
  // Valid lower bounds on the cost-to-go V_2..V_T, one per entry; empty means
  // all zero, which is only sound when stage costs are nonnegative. Problems
  // with revenue terms must supply genuine floors or cuts lose validity.
  Eigen::VectorXd value_floors;
  std::string id;

  int dim(int t) const { return stages.at(t - 1).dim(); }
  std::vector<int> stage_dims() const;
  void validate() const;
};

// Starting value functions: one floor cut per V_t from the instance floors,
// and the exact zero function for the terminal V_{T+1}.
VfnSet initial_vfns(const ProblemInstance& inst);

// samples[t-2][j] is the j-th observation of stage t, t = 2..T.
struct ScenarioBatch {
  int m = 0;
  std::vector<std::vector<Eigen::VectorXd>> samples;

  const Eigen::VectorXd& at(int t, int j) const { return samples.at(t - 2).at(j); }
};

class Rng;

Eigen::VectorXd sample_truncated_normal(const StageDistribution& d, Rng& rng);
ScenarioBatch sample_scenarios(const ProblemInstance& inst, int m, std::uint64_t seed);

StageData realize_stage(const StageTemplate& tmpl, const Eigen::VectorXd& xi);

// Stage LP over (x_t, theta): min c'x + theta subject to the stage equalities
// shifted by B x_prev, the stage inequalities, and one epigraph row
// theta - beta_k'x >= alpha_k per cut. theta is free, x is nonnegative.
LinearProgram build_stage_lp(const StageData& data, const Eigen::VectorXd& x_prev,
                             const ValueFunctionApprox& vfn);

struct CostStats {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> per_trajectory;

  double stderr_mean() const;
};

// Observation source for stages 2..T of one trajectory.
using ScenarioProvider = std::function<Eigen::VectorXd(int stage, int trajectory)>;

struct RolloutResult {
  CostStats stats;                                      // over completed trajectories
  std::vector<std::vector<Eigen::VectorXd>> actions;    // [trajectory][t-1]
  int dropped = 0;
  long lp_solves = 0;
};

// Greedy forward simulation under fixed value functions. With
// drop_infeasible, a trajectory whose stage LP fails is discarded and
// counted; otherwise the failure propagates as SolveError.
RolloutResult rollout_policy(const ProblemInstance& inst, const VfnSet& vfns, int n_traj,
                             const ScenarioProvider& provider, bool drop_infeasible,
                             const SimplexOptions& lp_opts = {});

// Rollout over fresh scenarios drawn from the instance distribution.
CostStats evaluate_policy(const ProblemInstance& inst, const VfnSet& vfns, int n_traj,
                          std::uint64_t seed);

// Per-trajectory observation stream with a deterministic per-index seed.
// The provider borrows the instance; it must not outlive it.
ScenarioProvider fresh_scenario_provider(const ProblemInstance& inst, std::uint64_t seed);

}  // namespace sddp
