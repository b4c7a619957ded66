#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sddp/cuts.hpp"
#include "sddp/engine.hpp"
#include "sddp/model.hpp"

namespace sddp {

// Exact minimum-cost perfect matching on a square cost matrix; returns the
// column assigned to each row. O(n^3) via dual potentials.
std::vector<int> assignment_min_cost(const Eigen::MatrixXd& cost);

struct EmdResult {
  double cost = 0.0;
  std::vector<std::pair<int, int>> pairs;  // matched (index in a, index in b)
};

// Earth mover's distance between two cut sets under squared Euclidean ground
// metric on the stacked (beta, alpha) vector. Exactly min(|a|, |b|) pairs are
// matched; the rest stay unmatched at no cost. Symmetric in its arguments.
EmdResult emd_cut_distance(const std::vector<Cut>& a, const std::vector<Cut>& b);

// One solved instance: the context features, the converged per-stage cut sets
// (initialization cuts stripped), and the optimal actions of the final
// forward pass, indexed [stage-1][sample].
struct TrainingRecord {
  std::string instance_id;
  std::vector<Eigen::VectorXd> context;             // u_t, size T
  std::vector<std::vector<Cut>> cuts;               // targets for V_2..V_T
  std::vector<std::vector<Eigen::VectorXd>> actions;
  int iterations = 0;
  double lower_bound = 0.0;
  double upper_mean = 0.0;
};

TrainingRecord make_training_record(const ProblemInstance& inst, const SddpResult& result);

struct TrainConfig {
  int K = 64;                    // cuts per predicted value function
  int embed = 128;               // context/time embedding width
  int hidden = 512;              // trunk width, two rectified layers
  double learning_rate = 1e-3;
  double weight_decay = 1e-6;    // coefficient of the squared parameter norm
  int emd_window = 0;            // target = most recent cuts; 0 means 2K
  int steps_per_epoch = 32;
  int batch_size = 8;
  double anneal_max = 0.9;       // warm-start probability ramps 0 -> this
  int projection_rank = 0;       // 0 means full action dimension
  double projection_lr = 0.05;
  bool exact_projection = false; // eigendecomposition instead of Hebbian steps
  int validation_count = 3;
  int standardization_probes = 16;

  int window() const { return emd_window > 0 ? emd_window : 2 * K; }
  void validate() const;
};

// Per-stage max-affine value function predictor: standardized context plus a
// learnable per-stage encoding feed a two-layer rectified trunk whose head
// emits K cuts of dimension d+1. All tensors are public so training,
// serialization and tests can reach them.
struct MaxAffinePredictor {
  int ctx_dim = 0;
  int action_dim = 0;
  int K = 0;
  int n_stages = 0;  // predicted stages 2..n_stages+1
  Eigen::VectorXd ctx_shift, ctx_scale;

  Eigen::MatrixXd Wp;  // embed x ctx_dim
  Eigen::VectorXd bp;
  Eigen::MatrixXd TE;  // embed x n_stages
  Eigen::MatrixXd W1;  // hidden x embed
  Eigen::VectorXd b1;
  Eigen::MatrixXd W2;  // hidden x hidden
  Eigen::VectorXd b2;
  Eigen::MatrixXd W3;  // K*(action_dim+1) x hidden
  Eigen::VectorXd b3;

  static MaxAffinePredictor create(int ctx_dim, int action_dim, int K, int n_stages,
                                   const TrainConfig& cfg, std::uint64_t seed);

  int embed_dim() const { return static_cast<int>(Wp.rows()); }
  int hidden_dim() const { return static_cast<int>(W1.rows()); }
  double squared_param_norm() const;

  // Applies f(tensor&) to every trainable tensor, in a fixed order shared
  // with the gradient structure.
  template <typename F>
  void for_each_tensor(F&& f) {
    f(Wp); f(W1); f(W2); f(W3); f(TE);
    f(bp); f(b1); f(b2); f(b3);
  }
};

// Deterministic K-cut prediction for stage t (2 <= t <= n_stages+1).
ValueFunctionApprox predict_value_function(const MaxAffinePredictor& model,
                                           const Eigen::VectorXd& u, int t);

struct LossBreakdown {
  double total = 0.0;
  double projection_term = 0.0;  // -sum_t sum_j ||G' x_tj||^2
  double emd_term = 0.0;         // sum_t EMD(predicted, stored targets)
  double regularizer = 0.0;      // lambda * squared parameter norm
};

// Loss of one record under the current parameters. G may be 0x0 to skip the
// projection term.
LossBreakdown training_loss(const MaxAffinePredictor& model, const Eigen::MatrixXd& G,
                            const TrainingRecord& record, const TrainConfig& cfg);

// One stochastic-gradient step on the mean EMD term of the batch plus the
// regularizer. The optimal matchings are held fixed while the matched squared
// distances are differentiated through the network. Throws on a non-finite
// gradient, naming the offending record.
void grad_step(MaxAffinePredictor& model, const std::vector<const TrainingRecord*>& batch,
               const TrainConfig& cfg);

// Orthonormal basis updates for the shared action-space projection.
Eigen::MatrixXd random_orthonormal(int d, int p, std::uint64_t seed);

// One generalized Hebbian (Sanger) ascent step on the captured variance of
// the sample second-moment matrix, followed by column re-orthonormalization;
// ||G'G - I||_inf <= 1e-8 on return. samples is n x d, one action per row.
void update_projection(Eigen::MatrixXd& G, const Eigen::MatrixXd& samples, double lr);

// Exact alternative: top-p eigenvectors of the pooled second-moment matrix.
void update_projection_exact(Eigen::MatrixXd& G, const Eigen::MatrixXd& second_moment);

double captured_variance(const Eigen::MatrixXd& G, const Eigen::MatrixXd& second_moment);

// gamma = 0: the instance's floor initialization (single bounding cut per
// stage). gamma = 1: the predicted K-cut sets, terminal stays exactly zero.
VfnSet init_vfns_annealed(const MaxAffinePredictor& model, const ProblemInstance& inst,
                          int gamma);

using InstanceSampler = std::function<ProblemInstance(std::uint64_t seed)>;

struct MetaTrainResult {
  MaxAffinePredictor model;  // best-validation checkpoint
  Eigen::MatrixXd G;
  std::vector<TrainingRecord> dataset;
  std::vector<std::string> validation_ids;  // held-out instances scored per epoch
  // Mean validation EMD; entry e is the state after e epochs, so the first
  // entry is the untrained model's baseline.
  std::vector<double> validation_history;
  int best_epoch = -1;
  int failed_instances = 0;
};

// Self-improving training loop: per epoch, draw an instance, initialize its
// value functions from the annealed predictor, solve, append the record, then
// take gradient and projection steps on the growing dataset. Instances whose
// solve throws are counted and skipped. Deterministic in (seed, cfg).
MetaTrainResult meta_train(const InstanceSampler& sampler, const TrainConfig& cfg,
                           int n_epochs, std::uint64_t seed, const SddpOptions& solve_opts);

}  // namespace sddp
