#include "sddp/learning.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "sddp/common.hpp"

namespace sddp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double cut_sq_distance(const Cut& a, const Cut& b) {
  const double da = a.alpha - b.alpha;
  return (a.beta - b.beta).squaredNorm() + da * da;
}

}  // namespace

std::vector<int> assignment_min_cost(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  if (n == 0 || cost.cols() != n) throw std::invalid_argument("assignment needs a square matrix");
  if (!all_finite(cost)) throw std::invalid_argument("assignment cost has non-finite entries");

  // Potentials u, v over rows/columns; p[j] is the row matched to column j.
  // Column 0 is a virtual origin; indices are 1-based inside the loop.
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0);
  std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, kInf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                           v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) {
    if (p[static_cast<std::size_t>(j)] != 0) {
      row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)]) - 1] = j - 1;
    }
  }
  return row_to_col;
}

EmdResult emd_cut_distance(const std::vector<Cut>& a, const std::vector<Cut>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("emd needs nonempty cut sets");
  const int na = static_cast<int>(a.size());
  const int nb = static_cast<int>(b.size());
  const int n = std::max(na, nb);

  Eigen::MatrixXd dist(na, nb);
  for (int i = 0; i < na; ++i) {
    for (int j = 0; j < nb; ++j) dist(i, j) = cut_sq_distance(a[i], b[j]);
  }
  // Padding above every real distance keeps real pairs strictly preferred, so
  // exactly min(na, nb) genuine matches survive.
  const double pad = dist.maxCoeff() + 1.0;
  Eigen::MatrixXd square = Eigen::MatrixXd::Constant(n, n, pad);
  square.topLeftCorner(na, nb) = dist;

  const std::vector<int> match = assignment_min_cost(square);
  EmdResult result;
  for (int i = 0; i < na; ++i) {
    const int j = match[static_cast<std::size_t>(i)];
    if (j < nb) {
      result.cost += dist(i, j);
      result.pairs.emplace_back(i, j);
    }
  }
  return result;
}

TrainingRecord make_training_record(const ProblemInstance& inst, const SddpResult& result) {
  TrainingRecord rec;
  rec.instance_id = inst.id;
  rec.context = inst.context;
  rec.iterations = result.iterations;
  rec.lower_bound = result.lower_bound;
  rec.upper_mean = result.upper.mean;

  for (int t = 2; t <= inst.T; ++t) {
    const auto& all = result.vfns.at_stage(t).cuts();
    const int skip = result.initial_cut_counts.at(static_cast<std::size_t>(t - 2));
    if (static_cast<int>(all.size()) <= skip) {
      throw std::invalid_argument("record for " + inst.id + " has no trained cuts at stage " +
                                  std::to_string(t));
    }
    rec.cuts.emplace_back(all.begin() + skip, all.end());
  }

  // Transpose [trajectory][stage] to [stage][sample].
  rec.actions.assign(static_cast<std::size_t>(inst.T), {});
  for (const auto& traj : result.actions) {
    for (int t = 1; t <= inst.T; ++t) {
      rec.actions[static_cast<std::size_t>(t - 1)].push_back(
          traj.at(static_cast<std::size_t>(t - 1)));
    }
  }
  return rec;
}

void TrainConfig::validate() const {
  if (K < 1) throw std::invalid_argument("need at least one predicted cut");
  if (embed < 1 || hidden < 1) throw std::invalid_argument("layer widths must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("weight decay must be nonnegative");
  if (emd_window < 0) throw std::invalid_argument("emd window must be nonnegative");
  if (steps_per_epoch < 0 || batch_size < 1) throw std::invalid_argument("bad step plan");
  if (anneal_max < 0.0 || anneal_max > 1.0) {
    throw std::invalid_argument("warm-start probability must be in [0, 1]");
  }
  if (projection_rank < 0) throw std::invalid_argument("projection rank must be nonnegative");
  if (!(projection_lr > 0.0)) throw std::invalid_argument("projection rate must be positive");
  if (validation_count < 0 || standardization_probes < 1) {
    throw std::invalid_argument("bad split plan");
  }
}

MaxAffinePredictor MaxAffinePredictor::create(int ctx_dim, int action_dim, int K, int n_stages,
                                              const TrainConfig& cfg, std::uint64_t seed) {
  if (ctx_dim < 1 || action_dim < 1 || K < 1 || n_stages < 1) {
    throw std::invalid_argument("predictor dimensions must be positive");
  }
  MaxAffinePredictor m;
  m.ctx_dim = ctx_dim;
  m.action_dim = action_dim;
  m.K = K;
  m.n_stages = n_stages;
  m.ctx_shift = Eigen::VectorXd::Zero(ctx_dim);
  m.ctx_scale = Eigen::VectorXd::Ones(ctx_dim);

  Rng rng(derive_seed(seed, "predictor-init"));
  const auto fill = [&rng](Eigen::MatrixXd& w, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-bound, bound);
    }
  };
  m.Wp.resize(cfg.embed, ctx_dim);
  fill(m.Wp, ctx_dim);
  m.TE.resize(cfg.embed, n_stages);
  fill(m.TE, cfg.embed);
  m.W1.resize(cfg.hidden, cfg.embed);
  fill(m.W1, cfg.embed);
  m.W2.resize(cfg.hidden, cfg.hidden);
  fill(m.W2, cfg.hidden);
  m.W3.resize(K * (action_dim + 1), cfg.hidden);
  fill(m.W3, cfg.hidden);
  m.bp = Eigen::VectorXd::Zero(cfg.embed);
  m.b1 = Eigen::VectorXd::Zero(cfg.hidden);
  m.b2 = Eigen::VectorXd::Zero(cfg.hidden);
  m.b3 = Eigen::VectorXd::Zero(K * (action_dim + 1));
  return m;
}

double MaxAffinePredictor::squared_param_norm() const {
  return Wp.squaredNorm() + W1.squaredNorm() + W2.squaredNorm() + W3.squaredNorm() +
         TE.squaredNorm() + bp.squaredNorm() + b1.squaredNorm() + b2.squaredNorm() +
         b3.squaredNorm();
}

namespace {

struct ForwardCache {
  Eigen::VectorXd u_std, h0, a1, h1, a2, h2, out;
};

ForwardCache forward(const MaxAffinePredictor& m, const Eigen::VectorXd& u, int t) {
  if (u.size() != m.ctx_dim) throw std::invalid_argument("context dimension mismatch");
  if (t < 2 || t > m.n_stages + 1) throw std::invalid_argument("stage outside predicted range");
  ForwardCache c;
  c.u_std = (u - m.ctx_shift).cwiseProduct(m.ctx_scale);
  c.h0 = m.Wp * c.u_std + m.bp + m.TE.col(t - 2);
  c.a1 = m.W1 * c.h0 + m.b1;
  c.h1 = c.a1.cwiseMax(0.0);
  c.a2 = m.W2 * c.h1 + m.b2;
  c.h2 = c.a2.cwiseMax(0.0);
  c.out = m.W3 * c.h2 + m.b3;
  return c;
}

std::vector<Cut> cuts_from_output(const Eigen::VectorXd& out, int K, int d) {
  std::vector<Cut> cuts(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    cuts[static_cast<std::size_t>(k)].beta = out.segment(k * (d + 1), d);
    cuts[static_cast<std::size_t>(k)].alpha = out(k * (d + 1) + d);
  }
  return cuts;
}

struct Grads {
  Eigen::MatrixXd Wp, W1, W2, W3, TE;
  Eigen::VectorXd bp, b1, b2, b3;

  explicit Grads(const MaxAffinePredictor& m)
      : Wp(Eigen::MatrixXd::Zero(m.Wp.rows(), m.Wp.cols())),
        W1(Eigen::MatrixXd::Zero(m.W1.rows(), m.W1.cols())),
        W2(Eigen::MatrixXd::Zero(m.W2.rows(), m.W2.cols())),
        W3(Eigen::MatrixXd::Zero(m.W3.rows(), m.W3.cols())),
        TE(Eigen::MatrixXd::Zero(m.TE.rows(), m.TE.cols())),
        bp(Eigen::VectorXd::Zero(m.bp.size())),
        b1(Eigen::VectorXd::Zero(m.b1.size())),
        b2(Eigen::VectorXd::Zero(m.b2.size())),
        b3(Eigen::VectorXd::Zero(m.b3.size())) {}
};

// Backpropagates d(loss)/d(out) through the trunk for one stage.
void backward(const MaxAffinePredictor& m, const ForwardCache& c, int t,
              const Eigen::VectorXd& d_out, Grads& g) {
  g.W3.noalias() += d_out * c.h2.transpose();
  g.b3 += d_out;
  Eigen::VectorXd d_h2 = m.W3.transpose() * d_out;
  Eigen::VectorXd d_a2 = (c.a2.array() > 0.0).select(d_h2, 0.0);
  g.W2.noalias() += d_a2 * c.h1.transpose();
  g.b2 += d_a2;
  Eigen::VectorXd d_h1 = m.W2.transpose() * d_a2;
  Eigen::VectorXd d_a1 = (c.a1.array() > 0.0).select(d_h1, 0.0);
  g.W1.noalias() += d_a1 * c.h0.transpose();
  g.b1 += d_a1;
  Eigen::VectorXd d_h0 = m.W1.transpose() * d_a1;
  g.Wp.noalias() += d_h0 * c.u_std.transpose();
  g.bp += d_h0;
  g.TE.col(t - 2) += d_h0;
}

// Target cut set for one stage: the most recent `window` converged cuts.
std::vector<Cut> stage_targets(const TrainingRecord& rec, int t, int window) {
  const auto& all = rec.cuts.at(static_cast<std::size_t>(t - 2));
  const int keep = std::min<int>(window, static_cast<int>(all.size()));
  return std::vector<Cut>(all.end() - keep, all.end());
}

// EMD term of one record; optionally accumulates its gradient. The optimal
// matching is held fixed while the matched distances are differentiated.
double emd_term(const MaxAffinePredictor& m, const TrainingRecord& rec, int window,
                double grad_scale, Grads* grads) {
  const int d = m.action_dim;
  const int T = static_cast<int>(rec.context.size());
  if (static_cast<int>(rec.cuts.size()) != T - 1) {
    throw std::invalid_argument("record cuts do not cover stages 2..T");
  }
  double total = 0.0;
  for (int t = 2; t <= T; ++t) {
    const ForwardCache cache = forward(m, rec.context.at(static_cast<std::size_t>(t - 1)), t);
    if (!all_finite(cache.out)) {
      throw std::runtime_error("non-finite prediction for record " + rec.instance_id);
    }
    const std::vector<Cut> pred = cuts_from_output(cache.out, m.K, d);
    const std::vector<Cut> target = stage_targets(rec, t, window);
    const EmdResult emd = emd_cut_distance(pred, target);
    if (!std::isfinite(emd.cost)) {
      throw std::runtime_error("non-finite gradient for record " + rec.instance_id);
    }
    total += emd.cost;
    if (grads != nullptr) {
      Eigen::VectorXd d_out = Eigen::VectorXd::Zero(cache.out.size());
      for (const auto& [i, j] : emd.pairs) {
        const Cut& p = pred[static_cast<std::size_t>(i)];
        const Cut& s = target[static_cast<std::size_t>(j)];
        d_out.segment(i * (d + 1), d) = 2.0 * grad_scale * (p.beta - s.beta);
        d_out(i * (d + 1) + d) = 2.0 * grad_scale * (p.alpha - s.alpha);
      }
      backward(m, cache, t, d_out, *grads);
    }
  }
  return total;
}

}  // namespace

ValueFunctionApprox predict_value_function(const MaxAffinePredictor& model,
                                           const Eigen::VectorXd& u, int t) {
  const ForwardCache cache = forward(model, u, t);
  return ValueFunctionApprox(model.action_dim,
                             cuts_from_output(cache.out, model.K, model.action_dim));
}

LossBreakdown training_loss(const MaxAffinePredictor& model, const Eigen::MatrixXd& G,
                            const TrainingRecord& record, const TrainConfig& cfg) {
  LossBreakdown loss;
  if (G.size() != 0) {
    if (G.rows() != model.action_dim) throw std::invalid_argument("projection dimension mismatch");
    for (const auto& stage : record.actions) {
      for (const auto& x : stage) loss.projection_term -= (G.transpose() * x).squaredNorm();
    }
  }
  loss.emd_term = emd_term(model, record, cfg.window(), 1.0, nullptr);
  loss.regularizer = cfg.weight_decay * model.squared_param_norm();
  loss.total = loss.projection_term + loss.emd_term + loss.regularizer;
  return loss;
}

void grad_step(MaxAffinePredictor& model, const std::vector<const TrainingRecord*>& batch,
               const TrainConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("gradient step needs a nonempty batch");
  Grads grads(model);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const TrainingRecord* rec : batch) {
    emd_term(model, *rec, cfg.window(), scale, &grads);
  }
  const double eta = cfg.learning_rate;
  const double decay = 2.0 * cfg.weight_decay;
  model.Wp -= eta * (grads.Wp + decay * model.Wp);
  model.W1 -= eta * (grads.W1 + decay * model.W1);
  model.W2 -= eta * (grads.W2 + decay * model.W2);
  model.W3 -= eta * (grads.W3 + decay * model.W3);
  model.TE -= eta * (grads.TE + decay * model.TE);
  model.bp -= eta * (grads.bp + decay * model.bp);
  model.b1 -= eta * (grads.b1 + decay * model.b1);
  model.b2 -= eta * (grads.b2 + decay * model.b2);
  model.b3 -= eta * (grads.b3 + decay * model.b3);
}

Eigen::MatrixXd random_orthonormal(int d, int p, std::uint64_t seed) {
  if (p < 1 || p > d) throw std::invalid_argument("rank must be in [1, d]");
  Rng rng(derive_seed(seed, "projection-init"));
  Eigen::MatrixXd raw(d, p);
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < d; ++i) raw(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
  return qr.householderQ() * Eigen::MatrixXd::Identity(d, p);
}

namespace {

// Two modified Gram-Schmidt sweeps restore orthonormality to well below the
// 1e-8 contract after a small additive update.
void reorthonormalize(Eigen::MatrixXd& G) {
  for (int sweep = 0; sweep < 2; ++sweep) {
    for (int j = 0; j < G.cols(); ++j) {
      for (int k = 0; k < j; ++k) {
        G.col(j) -= G.col(k).dot(G.col(j)) * G.col(k);
      }
      const double norm = G.col(j).norm();
      if (norm < 1e-12) throw std::runtime_error("projection basis collapsed");
      G.col(j) /= norm;
    }
  }
}

}  // namespace

void update_projection(Eigen::MatrixXd& G, const Eigen::MatrixXd& samples, double lr) {
  if (samples.rows() == 0) throw std::invalid_argument("projection update needs samples");
  if (samples.cols() != G.rows()) throw std::invalid_argument("sample dimension mismatch");
  const Eigen::MatrixXd xi =
      samples.transpose() * samples / static_cast<double>(samples.rows());
  const Eigen::MatrixXd xg = xi * G;
  const Eigen::MatrixXd s = G.transpose() * xg;
  // Sanger's rule: column j is deflated by the projections onto columns <= j,
  // which orders the basis by captured variance.
  const Eigen::MatrixXd delta =
      xg - G * s.triangularView<Eigen::Upper>().toDenseMatrix();
  if (delta.norm() == 0.0) return;  // zero samples leave G bit-identical
  G += lr * delta;
  reorthonormalize(G);
}

void update_projection_exact(Eigen::MatrixXd& G, const Eigen::MatrixXd& second_moment) {
  if (second_moment.rows() != G.rows() || second_moment.cols() != G.rows()) {
    throw std::invalid_argument("second moment must be d x d");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(second_moment);
  if (eig.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
  const int d = static_cast<int>(G.rows());
  const int p = static_cast<int>(G.cols());
  // Eigenvalues come back ascending; take the top p in descending order.
  for (int j = 0; j < p; ++j) G.col(j) = eig.eigenvectors().col(d - 1 - j);
}

double captured_variance(const Eigen::MatrixXd& G, const Eigen::MatrixXd& second_moment) {
  return (G.transpose() * second_moment * G).trace();
}

VfnSet init_vfns_annealed(const MaxAffinePredictor& model, const ProblemInstance& inst,
                          int gamma) {
  if (gamma != 0 && gamma != 1) throw std::invalid_argument("gamma must be 0 or 1");
  if (gamma == 0) return initial_vfns(inst);
  if (model.n_stages != inst.T - 1) throw std::invalid_argument("predictor horizon mismatch");
  VfnSet vfns;
  for (int t = 2; t <= inst.T; ++t) {
    if (inst.dim(t - 1) != model.action_dim) {
      throw std::invalid_argument("predictor action dimension mismatch");
    }
    vfns.push_back(
        predict_value_function(model, inst.context.at(static_cast<std::size_t>(t - 1)), t));
  }
  vfns.push_back(ValueFunctionApprox::zero(inst.dim(inst.T)));
  return vfns;
}

namespace {

Eigen::MatrixXd stack_actions(const TrainingRecord& rec) {
  long rows = 0;
  for (const auto& stage : rec.actions) rows += static_cast<long>(stage.size());
  if (rows == 0) return Eigen::MatrixXd();
  const Eigen::Index d = rec.actions.front().front().size();
  Eigen::MatrixXd out(rows, d);
  long r = 0;
  for (const auto& stage : rec.actions) {
    for (const auto& x : stage) out.row(r++) = x.transpose();
  }
  return out;
}

}  // namespace

MetaTrainResult meta_train(const InstanceSampler& sampler, const TrainConfig& cfg,
                           int n_epochs, std::uint64_t seed, const SddpOptions& solve_opts) {
  cfg.validate();
  if (n_epochs < 0) throw std::invalid_argument("epoch count must be nonnegative");

  // Probe the meta-distribution for dimensions and context standardization.
  std::vector<ProblemInstance> probes;
  for (int i = 0; i < cfg.standardization_probes; ++i) {
    probes.push_back(sampler(derive_seed(seed, "probe", static_cast<std::uint64_t>(i))));
  }
  const ProblemInstance& head = probes.front();
  const int T = head.T;
  const int d = head.dim(1);
  const int ctx_dim = static_cast<int>(head.context.front().size());

  Eigen::VectorXd lo = Eigen::VectorXd::Constant(ctx_dim, kInf);
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(ctx_dim, -kInf);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(ctx_dim);
  long count = 0;
  for (const ProblemInstance& inst : probes) {
    for (const Eigen::VectorXd& u : inst.context) {
      lo = lo.cwiseMin(u);
      hi = hi.cwiseMax(u);
      mean += u;
      ++count;
    }
  }
  mean /= static_cast<double>(count);

  MetaTrainResult result;
  result.model = MaxAffinePredictor::create(ctx_dim, d, cfg.K, T - 1, cfg,
                                            derive_seed(seed, "model"));
  result.model.ctx_shift = mean;
  result.model.ctx_scale =
      (hi - lo).unaryExpr([](double r) { return r > 1e-12 ? 1.0 / r : 1.0; });

  const int p = cfg.projection_rank > 0 ? std::min(cfg.projection_rank, d) : d;
  result.G = random_orthonormal(d, p, derive_seed(seed, "projection"));

  // Held-out validation instances, solved once from the floor initialization.
  std::vector<TrainingRecord> validation;
  for (int i = 0; i < cfg.validation_count; ++i) {
    ProblemInstance inst =
        sampler(derive_seed(seed, "validation-instance", static_cast<std::uint64_t>(i)));
    SddpOptions opts = solve_opts;
    opts.seed = derive_seed(seed, "validation-solve", static_cast<std::uint64_t>(i));
    validation.push_back(make_training_record(inst, sddp_solve(inst, opts)));
    result.validation_ids.push_back(inst.id);
  }
  const auto validation_emd = [&]() {
    double sum = 0.0;
    for (const TrainingRecord& rec : validation) {
      sum += emd_term(result.model, rec, cfg.window(), 1.0, nullptr);
    }
    return sum / static_cast<double>(validation.size());
  };

  MaxAffinePredictor best = result.model;
  double best_emd = kInf;
  if (!validation.empty()) {
    best_emd = validation_emd();
    result.validation_history.push_back(best_emd);
  }
  result.best_epoch = -1;

  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(d, d);  // for the exact path
  long pooled_count = 0;

  for (int epoch = 0; epoch < n_epochs; ++epoch) {
    Rng epoch_rng(derive_seed(seed, "epoch", static_cast<std::uint64_t>(epoch)));
    const double anneal_p =
        n_epochs > 1 ? cfg.anneal_max * std::min(1.0, 2.0 * epoch / n_epochs) : 0.0;
    const int gamma = epoch_rng.uniform() < anneal_p ? 1 : 0;

    ProblemInstance inst =
        sampler(derive_seed(seed, "train-instance", static_cast<std::uint64_t>(epoch)));
    SddpOptions opts = solve_opts;
    opts.seed = derive_seed(seed, "train-solve", static_cast<std::uint64_t>(epoch));
    try {
      VfnSet start = init_vfns_annealed(result.model, inst, gamma);
      result.dataset.push_back(make_training_record(inst, sddp_solve(inst, std::move(start), opts)));
    } catch (const std::exception&) {
      ++result.failed_instances;
      continue;
    }

    const Eigen::MatrixXd actions = stack_actions(result.dataset.back());
    if (actions.rows() > 0) {
      if (cfg.exact_projection) {
        pooled.noalias() += actions.transpose() * actions;
        pooled_count += actions.rows();
        update_projection_exact(result.G, pooled / static_cast<double>(pooled_count));
      } else {
        update_projection(result.G, actions, cfg.projection_lr);
      }
    }

    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      std::vector<const TrainingRecord*> batch;
      for (int j = 0; j < cfg.batch_size; ++j) {
        const int idx = epoch_rng.uniform_int(0, static_cast<int>(result.dataset.size()) - 1);
        batch.push_back(&result.dataset[static_cast<std::size_t>(idx)]);
      }
      grad_step(result.model, batch, cfg);
    }

    if (!validation.empty()) {
      const double emd = validation_emd();
      result.validation_history.push_back(emd);
      if (emd < best_emd) {
        best_emd = emd;
        best = result.model;
        result.best_epoch = epoch;
      }
    }
  }

  if (!validation.empty()) result.model = best;
  return result;
}

}  // namespace sddp
