#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "sddp/engine.hpp"
#include "sddp/learning.hpp"
#include "sddp/model.hpp"

namespace sddp {

enum class InferenceMode { Fast, Accurate };

// Wall-clock split of one inference call, in seconds.
struct InferenceTimings {
  double prediction = 0.0;
  double projection = 0.0;
  double lp = 0.0;
  double refinement = 0.0;

  double total() const { return prediction + projection + lp + refinement; }
};

struct InferenceResult {
  InferenceMode mode = InferenceMode::Fast;
  std::string instance_id;
  CostStats stats;                                    // policy cost over completed trajectories
  std::vector<std::vector<Eigen::VectorXd>> actions;  // [trajectory][t-1], original coordinates
  // Fast mode: trajectories lost to projected-LP infeasibility. Losing more
  // than one in five marks the projection unusable for this instance.
  int dropped = 0;
  bool projection_unusable = false;
  double lower_bound = 0.0;  // refinement's final bound; NaN in fast mode
  long lp_solves = 0;
  InferenceTimings timings;
};

// Substitutes x = G y with y sign-free. Costs and constraint columns compose
// with G and the original nonnegativity becomes explicit rows G y >= 0, so
// every lifted action G y is feasible for the original instance. G needs
// orthonormal columns and a row count matching every stage dimension.
ProblemInstance project_instance(const ProblemInstance& inst, const Eigen::MatrixXd& G);

// Value functions restated on projected coordinates: each cut (beta, alpha)
// becomes (G'beta, alpha), so evaluation at y matches the original at G y.
VfnSet project_vfns(const VfnSet& vfns, const Eigen::MatrixXd& G);

// One greedy pass of n_traj trajectories through the projected problem under
// fixed full-dimensional value functions, lifted back to original
// coordinates. No cuts are added; a trajectory whose projected stage LP is
// infeasible is dropped and counted. Scenario draws match evaluate_policy on
// the original instance at the same seed.
InferenceResult projected_rollout(const ProblemInstance& inst, const VfnSet& vfns,
                                  const Eigen::MatrixXd& G, int n_traj, std::uint64_t seed,
                                  const SimplexOptions& lp_opts = {});

// projected_rollout under the predictor's value functions: the cheap pass of
// the two-speed inference scheme. Exactly T LP solves per kept trajectory.
InferenceResult fast_infer(const MaxAffinePredictor& model, const Eigen::MatrixXd& G,
                           const ProblemInstance& inst, int n_traj, std::uint64_t seed,
                           const SimplexOptions& lp_opts = {});

// The accurate path: start from the predicted value functions, run exactly
// n_refine full-dimensional solver iterations on an m-sample tree (no other
// stopping rule), then roll out the refined policy. The final rollout shares
// scenario draws with fast_infer at the same seed, so the two modes pair.
InferenceResult refine(const MaxAffinePredictor& model, const ProblemInstance& inst,
                       int n_refine, int m, int n_traj, std::uint64_t seed,
                       const SimplexOptions& lp_opts = {});

}  // namespace sddp
