#include "sddp/environments.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sddp/common.hpp"

namespace sddp {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void check_range(const Range& r, const std::string& name) {
  require(std::isfinite(r.lo) && std::isfinite(r.hi) && r.lo <= r.hi,
          name + " range must be finite with lo <= hi");
}

double draw(Rng& rng, const Range& r) { return rng.uniform(r.lo, r.hi); }

}  // namespace

void InventoryConfig::validate() const {
  require(S >= 1 && I >= 1 && C >= 1, "need at least one supplier, inventory and customer");
  require(T >= 2, "horizon must be at least 2");
  check_range(mu_d, "demand mean");
  check_range(sigma_d, "demand stddev");
  check_range(mu_c, "transport cost mean");
  require(sigma_d.lo >= 0.0 && sigma_c >= 0.0, "stddev must be nonnegative");
  check_range(sales_price, "sales price");
  check_range(procurement_price, "procurement price");
  check_range(holding_cost, "holding cost");
  check_range(supplier_capacity, "supplier capacity");
  check_range(inventory_capacity, "inventory capacity");
  check_range(initial_inventory, "initial inventory");
  require(sales_price.lo >= 0.0 && procurement_price.lo >= 0.0 && holding_cost.lo >= 0.0,
          "prices and costs must be nonnegative");
  require(supplier_capacity.lo >= 0.0 && inventory_capacity.lo > 0.0, "capacities must be positive");
  // The all-zeros action keeps w_t = w_{t-1}, which must satisfy the capacity
  // row; bounding w_0 by the smallest possible capacity guarantees recourse.
  require(initial_inventory.lo >= 0.0 && initial_inventory.hi <= inventory_capacity.lo,
          "initial inventory must fit under every inventory capacity");
  if (n_clusters != 0) {
    require(n_clusters >= 1 && n_clusters <= C && C % n_clusters == 0,
            "customer count must divide evenly into clusters");
  }
}

ProblemInstance make_inventory_instance(const InventoryConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int S = cfg.S;
  const int I = cfg.I;
  const int C = cfg.C;
  const int d = cfg.action_dim();
  const int K = cfg.n_clusters == 0 ? C : cfg.n_clusters;  // distinct demand streams
  const int members = C / K;

  const auto iy = [&](int v, int c) { return v * C + c; };
  const auto iz = [&](int s, int v) { return I * C + s * I + v; };
  const auto iw = [&](int v) { return I * C + S * I + v; };
  const auto cluster_of = [&](int c) { return c / members; };

  Rng rng(derive_seed(seed, "inventory-instance"));

  const double mu_d = draw(rng, cfg.mu_d);
  const double sigma_d = draw(rng, cfg.sigma_d);
  const double mu_c = draw(rng, cfg.mu_c);

  // Static economics, constant across stages. Sales prices are drawn per
  // (inventory, cluster) so customers inside a cluster are interchangeable.
  Eigen::MatrixXd q(I, C);
  for (int v = 0; v < I; ++v) {
    for (int k = 0; k < K; ++k) {
      const double qk = draw(rng, cfg.sales_price);
      for (int j = 0; j < members; ++j) q(v, k * members + j) = qk;
    }
  }
  Eigen::MatrixXd p(S, I);
  for (int s = 0; s < S; ++s) {
    for (int v = 0; v < I; ++v) p(s, v) = draw(rng, cfg.procurement_price);
  }
  Eigen::VectorXd h(I);
  for (int v = 0; v < I; ++v) h(v) = draw(rng, cfg.holding_cost);
  Eigen::VectorXd u(S);
  for (int s = 0; s < S; ++s) u(s) = draw(rng, cfg.supplier_capacity);
  Eigen::VectorXd vbar(I);
  for (int v = 0; v < I; ++v) vbar(v) = draw(rng, cfg.inventory_capacity);
  Eigen::VectorXd w0(I);
  for (int v = 0; v < I; ++v) w0(v) = draw(rng, cfg.initial_inventory);

  // One demand and one transport-cost component per cluster.
  StageDistribution dist;
  dist.mean.resize(2 * K);
  dist.stddev.resize(2 * K);
  dist.floor = Eigen::VectorXd::Zero(2 * K);
  dist.mean.head(K).setConstant(mu_d);
  dist.mean.tail(K).setConstant(mu_c);
  dist.stddev.head(K).setConstant(sigma_d);
  dist.stddev.tail(K).setConstant(cfg.sigma_c);

  StageTemplate body;
  body.base_c = Eigen::VectorXd::Zero(d);
  for (int s = 0; s < S; ++s) {
    for (int v = 0; v < I; ++v) body.base_c(iz(s, v)) = p(s, v);
  }
  for (int v = 0; v < I; ++v) body.base_c(iw(v)) = h(v);

  // Inventory transition per site: sum_s z - sum_c y - w_t = -w_{t-1}.
  body.base_A = Eigen::MatrixXd::Zero(I, d);
  for (int v = 0; v < I; ++v) {
    for (int c = 0; c < C; ++c) body.base_A(v, iy(v, c)) = -1.0;
    for (int s = 0; s < S; ++s) body.base_A(v, iz(s, v)) = 1.0;
    body.base_A(v, iw(v)) = -1.0;
  }
  body.base_b = Eigen::VectorXd::Zero(I);

  // Native >= rows: demand caps, supplier caps, holding caps, and the sales
  // bound restated through the transition so it needs no x_{t-1} columns:
  // sum_c y <= w_{t-1}  <=>  w_t - sum_s z >= 0.
  const int mg = C + S + I + I;
  body.base_A_ge = Eigen::MatrixXd::Zero(mg, d);
  body.base_b_ge = Eigen::VectorXd::Zero(mg);
  for (int c = 0; c < C; ++c) {
    for (int v = 0; v < I; ++v) body.base_A_ge(c, iy(v, c)) = -1.0;
    body.injections.push_back(XiBinding{XiTarget::RhsGe, c, 0, cluster_of(c), -1.0, 0.0});
  }
  for (int s = 0; s < S; ++s) {
    for (int v = 0; v < I; ++v) body.base_A_ge(C + s, iz(s, v)) = -1.0;
    body.base_b_ge(C + s) = -u(s);
  }
  for (int v = 0; v < I; ++v) {
    body.base_A_ge(C + S + v, iw(v)) = -1.0;
    body.base_b_ge(C + S + v) = -vbar(v);
  }
  for (int v = 0; v < I; ++v) {
    body.base_A_ge(C + S + I + v, iw(v)) = 1.0;
    for (int s = 0; s < S; ++s) body.base_A_ge(C + S + I + v, iz(s, v)) = -1.0;
  }

  // Stochastic transport cost lands on the sales coefficient: c_t - q.
  for (int v = 0; v < I; ++v) {
    for (int c = 0; c < C; ++c) {
      body.injections.push_back(
          XiBinding{XiTarget::Cost, iy(v, c), 0, K + cluster_of(c), 1.0, -q(v, c)});
    }
  }

  ProblemInstance inst;
  inst.T = cfg.T;

  StageTemplate first = body;
  first.base_B = Eigen::MatrixXd::Zero(I, I);
  for (int v = 0; v < I; ++v) first.base_B(v, v) = 1.0;
  inst.stages.push_back(std::move(first));

  StageTemplate later = body;
  later.base_B = Eigen::MatrixXd::Zero(I, d);
  for (int v = 0; v < I; ++v) later.base_B(v, iw(v)) = 1.0;
  for (int t = 2; t <= cfg.T; ++t) inst.stages.push_back(later);

  inst.dist.stationary = true;
  inst.dist.stages = {dist};
  inst.xi_1 = sample_truncated_normal(dist, rng);
  inst.x0 = w0;

  Eigen::VectorXd ctx(3);
  ctx << mu_d, sigma_d, mu_c;
  inst.context.assign(static_cast<std::size_t>(cfg.T), ctx);

  // Per-stage revenue can never exceed selling every unit of maximal holding
  // at the best price, which bounds the cost-to-go from below.
  const double stage_revenue_cap = q.maxCoeff() * vbar.sum();
  inst.value_floors.resize(cfg.T - 1);
  for (int t = 2; t <= cfg.T; ++t) {
    inst.value_floors(t - 2) = -stage_revenue_cap * static_cast<double>(cfg.T - t + 1);
  }

  std::ostringstream id;
  id << "inv-" << S << "-" << I << "-" << C << "-T" << cfg.T;
  if (cfg.n_clusters != 0) id << "-k" << cfg.n_clusters;
  id << "-s" << seed;
  inst.id = id.str();
  inst.validate();
  return inst;
}

ProblemInstance make_clustered_inventory_instance(InventoryConfig cfg, int n_clusters,
                                                  std::uint64_t seed) {
  cfg.n_clusters = n_clusters;
  return make_inventory_instance(cfg, seed);
}

ArFit fit_ar(const Eigen::MatrixXd& prices, int order) {
  const int days = static_cast<int>(prices.rows());
  const int assets = static_cast<int>(prices.cols());
  require(order >= 1, "AR order must be at least 1");
  require(assets >= 1, "need at least one asset");
  require(days > order + 2, "price series too short for the requested order");
  require(all_finite(prices), "non-finite price in series");

  const int n = days - order;
  ArFit fit;
  fit.phi.resize(assets, order);
  fit.sigma.resize(assets);

  for (int i = 0; i < assets; ++i) {
    Eigen::MatrixXd X(n, order);
    Eigen::VectorXd y(n);
    for (int r = 0; r < n; ++r) {
      const int t = order + r;
      for (int k = 0; k < order; ++k) X(r, k) = prices(t - 1 - k, i);
      y(r) = prices(t, i);
    }
    const Eigen::MatrixXd gram = X.transpose() * X;
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
    if (lu.rank() < order) {
      throw std::invalid_argument("AR regression is singular (constant or degenerate series)");
    }
    const Eigen::VectorXd phi = lu.solve(X.transpose() * y);
    fit.phi.row(i) = phi.transpose();
    const double ssr = (y - X * phi).squaredNorm();
    fit.sigma(i) = std::sqrt(ssr / static_cast<double>(n));
  }
  return fit;
}

Eigen::MatrixXd simulate_ar(const ArFit& fit, const Eigen::MatrixXd& window, int steps,
                            std::uint64_t seed) {
  const int order = static_cast<int>(fit.phi.cols());
  const int assets = static_cast<int>(fit.phi.rows());
  require(steps >= 1, "need at least one simulation step");
  require(window.rows() >= order && window.cols() == assets,
          "window must hold `order` rows per asset");

  Rng rng(derive_seed(seed, "ar-path"));
  Eigen::MatrixXd hist(order + steps, assets);
  hist.topRows(order) = window.bottomRows(order);
  for (int t = 0; t < steps; ++t) {
    for (int i = 0; i < assets; ++i) {
      double v = 0.0;
      for (int k = 0; k < order; ++k) v += fit.phi(i, k) * hist(order + t - 1 - k, i);
      hist(order + t, i) = v + rng.normal(0.0, fit.sigma(i));
    }
  }
  return hist.bottomRows(steps);
}

void PortfolioConfig::validate() const {
  require(I >= 1, "need at least one asset");
  require(T >= 2, "horizon must be at least 2");
  require(order >= 1, "AR order must be at least 1");
  require(ar.phi.rows() == I && ar.phi.cols() == order, "AR coefficient shape mismatch");
  require(ar.sigma.size() == I && (ar.sigma.array() >= 0.0).all(), "invalid AR noise stddev");
  require(all_finite(ar.phi) && all_finite(ar.sigma), "non-finite AR fit");
  require(spread >= 1.0, "spread must keep ask at or above bid");
  require(price_floor > 0.0, "price floor must be positive");
  require(initial_cash >= 0.0, "initial cash must be nonnegative");
  require(initial_holdings.size() == I && (initial_holdings.array() >= 0.0).all(),
          "initial holdings must be nonnegative per asset");
  require(context_window.rows() == order && context_window.cols() == I,
          "context window must hold `order` rows per asset");
  require(all_finite(context_window) && (context_window.array() > 0.0).all(),
          "context prices must be positive");
}

ProblemInstance make_portfolio_instance(const PortfolioConfig& cfg) {
  cfg.validate();
  const int I = cfg.I;
  const int d = cfg.action_dim();
  const int order = cfg.order;

  // Marginal mean and variance per stage from the AR recursion, treating the
  // stages as independent (cross-stage covariance dropped).
  Eigen::MatrixXd mean(order + cfg.T - 1, I);
  Eigen::MatrixXd var = Eigen::MatrixXd::Zero(order + cfg.T - 1, I);
  mean.topRows(order) = cfg.context_window;
  for (int step = 0; step < cfg.T - 1; ++step) {
    for (int i = 0; i < I; ++i) {
      double m = 0.0;
      double v = cfg.ar.sigma(i) * cfg.ar.sigma(i);
      for (int k = 0; k < order; ++k) {
        m += cfg.ar.phi(i, k) * mean(order + step - 1 - k, i);
        v += cfg.ar.phi(i, k) * cfg.ar.phi(i, k) * var(order + step - 1 - k, i);
      }
      mean(order + step, i) = m;
      var(order + step, i) = v;
    }
  }

  ProblemInstance inst;
  inst.T = cfg.T;
  inst.dist.stationary = false;
  for (int t = 2; t <= cfg.T; ++t) {
    StageDistribution sd;
    sd.mean = mean.row(order + t - 2).transpose();
    sd.stddev = var.row(order + t - 2).transpose().array().sqrt();
    sd.floor = Eigen::VectorXd::Constant(I, cfg.price_floor);
    inst.dist.stages.push_back(std::move(sd));
  }

  // Columns: y (sell) 0..I-1, z (buy) I..2I-1, w (hold) 2I..3I-1, r (cash) 3I.
  StageTemplate body;
  body.base_c = Eigen::VectorXd::Zero(d);
  body.base_A = Eigen::MatrixXd::Zero(I + 1, d);
  body.base_b = Eigen::VectorXd::Zero(I + 1);
  for (int i = 0; i < I; ++i) {
    body.base_A(i, i) = 1.0;           // position: y - z + w = w_prev
    body.base_A(i, I + i) = -1.0;
    body.base_A(i, 2 * I + i) = 1.0;
  }
  body.base_A(I, 3 * I) = -1.0;        // cash: q'y - p'z - r = -r_prev

  // Coupling rows restated through the transitions: y <= w_prev becomes
  // w - z >= 0, and p'z <= r_prev becomes r - q'y >= 0.
  body.base_A_ge = Eigen::MatrixXd::Zero(I + 1, d);
  body.base_b_ge = Eigen::VectorXd::Zero(I + 1);
  for (int i = 0; i < I; ++i) {
    body.base_A_ge(i, 2 * I + i) = 1.0;
    body.base_A_ge(i, I + i) = -1.0;
  }
  body.base_A_ge(I, 3 * I) = 1.0;

  const double bid_scale = 1.0 / cfg.spread;
  for (int i = 0; i < I; ++i) {
    body.injections.push_back(XiBinding{XiTarget::Cost, I + i, 0, i, 1.0, 0.0});        // buy at ask
    body.injections.push_back(XiBinding{XiTarget::Cost, i, 0, i, -bid_scale, 0.0});     // sell at bid
    body.injections.push_back(XiBinding{XiTarget::MatEq, I, i, i, bid_scale, 0.0});     // cash in
    body.injections.push_back(XiBinding{XiTarget::MatEq, I, I + i, i, -1.0, 0.0});      // cash out
    body.injections.push_back(XiBinding{XiTarget::MatGe, I, i, i, -bid_scale, 0.0});    // budget row
  }

  StageTemplate first = body;
  first.base_B = Eigen::MatrixXd::Zero(I + 1, I + 1);
  for (int i = 0; i < I; ++i) first.base_B(i, i) = -1.0;
  first.base_B(I, I) = 1.0;
  inst.stages.push_back(std::move(first));

  StageTemplate later = body;
  later.base_B = Eigen::MatrixXd::Zero(I + 1, d);
  for (int i = 0; i < I; ++i) later.base_B(i, 2 * I + i) = -1.0;
  later.base_B(I, 3 * I) = 1.0;
  for (int t = 2; t <= cfg.T; ++t) inst.stages.push_back(later);

  inst.xi_1 = cfg.context_window.bottomRows(1).transpose();
  inst.x0.resize(I + 1);
  inst.x0 << cfg.initial_holdings, cfg.initial_cash;

  Eigen::VectorXd ctx(order * I);
  for (int r = 0; r < order; ++r) {
    for (int i = 0; i < I; ++i) ctx(r * I + i) = cfg.context_window(r, i);
  }
  inst.context.assign(static_cast<std::size_t>(cfg.T), ctx);

  // Trading profit is bounded by terminal wealth. Marking holdings to the
  // stage price, wealth grows per stage by at most the ratio of the next
  // stage's highest price to this stage's lowest; ten-sigma bands make that
  // ratio certain up to negligible tail mass.
  double wealth_cap = cfg.initial_cash + inst.xi_1.dot(cfg.initial_holdings);
  double lo_prev = std::max(cfg.price_floor, inst.xi_1.minCoeff());
  for (int t = 2; t <= cfg.T; ++t) {
    const StageDistribution& sd = inst.dist.stages[static_cast<std::size_t>(t - 2)];
    const double hi = (sd.mean + 10.0 * sd.stddev).maxCoeff();
    wealth_cap *= std::max(1.0, hi / lo_prev);
    lo_prev = std::max(cfg.price_floor, (sd.mean - 10.0 * sd.stddev).minCoeff());
  }
  inst.value_floors = Eigen::VectorXd::Constant(cfg.T - 1, -wealth_cap);

  std::ostringstream id;
  id << "port-I" << I << "-T" << cfg.T << "-o" << order;
  inst.id = id.str();
  inst.validate();
  return inst;
}

Eigen::MatrixXd load_price_csv(const std::string& path, std::vector<std::string>* tickers) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open price file: " + path);

  const auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
  };

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split(line);
  if (header.empty()) throw std::runtime_error(path + ": header row has no tickers");
  const std::size_t n_cols = header.size();

  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line);
    if (cells.size() != n_cols) {
      throw std::runtime_error(path + ": row " + std::to_string(line_no) + " has " +
                               std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(n_cols));
    }
    std::vector<double> parsed(n_cols);
    for (std::size_t c = 0; c < n_cols; ++c) {
      const std::string& cell = cells[c];
      std::size_t consumed = 0;
      double value = 0.0;
      bool ok = !cell.empty();
      if (ok) {
        try {
          value = std::stod(cell, &consumed);
        } catch (const std::exception&) {
          ok = false;
        }
      }
      if (!ok || consumed != cell.size() || !std::isfinite(value)) {
        throw std::runtime_error(path + ": row " + std::to_string(line_no) + ", column " +
                                 std::to_string(c + 1) + " (" + header[c] +
                                 "): not a number: '" + cell + "'");
      }
      parsed[c] = value;
    }
    rows.push_back(std::move(parsed));
  }
  if (rows.empty()) throw std::runtime_error(path + ": no data rows");

  Eigen::MatrixXd prices(static_cast<int>(rows.size()), static_cast<int>(n_cols));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < n_cols; ++c) {
      prices(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
    }
  }
  if (tickers != nullptr) *tickers = header;
  return prices;
}

}  // namespace sddp
