#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "sddp/model.hpp"

namespace sddp {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

// Supply chain with S suppliers, I inventories, C customers. Actions per
// stage are [sales y (I*C), procurement z (S*I), holdings w (I)]; profit is
// q'y - p'z - h'w with stochastic demand and per-customer transport cost.
struct InventoryConfig {
  int S = 2;
  int I = 2;
  int C = 4;
  int T = 5;

  // Meta-distribution of the per-instance demand/cost parameters.
  Range mu_d{11.0, 20.0};
  Range sigma_d{0.0, 5.0};
  Range mu_c{0.3, 0.7};
  double sigma_c = 0.2;

  // Static economics drawn once per instance, constant across stages.
  Range sales_price{1.5, 2.0};
  Range procurement_price{0.4, 0.8};
  Range holding_cost{0.05, 0.15};
  Range supplier_capacity{25.0, 40.0};
  Range inventory_capacity{25.0, 40.0};
  Range initial_inventory{5.0, 15.0};

  // 0 means no clustering; otherwise customers split into equal clusters
  // sharing demand, transport cost and sales prices.
  int n_clusters = 0;

  int action_dim() const { return S * I + I * C + I; }
  void validate() const;
};

ProblemInstance make_inventory_instance(const InventoryConfig& cfg, std::uint64_t seed);
ProblemInstance make_clustered_inventory_instance(InventoryConfig cfg, int n_clusters,
                                                  std::uint64_t seed);

// Least-squares AR(order) fit, one model per asset (column); no intercept.
// Separate noise sources would not be identifiable from the residuals, so
// each asset gets a single collapsed Gaussian.
struct ArFit {
  Eigen::MatrixXd phi;    // I x order, phi(i, k) multiplies p_{t-1-k}
  Eigen::VectorXd sigma;  // per-asset residual stddev (maximum likelihood)
};

ArFit fit_ar(const Eigen::MatrixXd& prices, int order);

// Simulates one AR path forward from the final rows of `window`.
Eigen::MatrixXd simulate_ar(const ArFit& fit, const Eigen::MatrixXd& window, int steps,
                            std::uint64_t seed);

// Trading across I assets: actions [sales y (I), purchases z (I), holdings
// w (I), cash r]; ask prices follow per-asset AR forecasts, bids are
// ask/spread. Objective minimizes p'z - q'y (maximizes trading profit).
struct PortfolioConfig {
  int I = 0;
  int T = 5;
  int order = 2;
  ArFit ar;
  double spread = 1.001;
  double price_floor = 1e-3;
  double initial_cash = 100.0;
  Eigen::VectorXd initial_holdings;  // size I
  Eigen::MatrixXd context_window;    // order x I, oldest row first

  int action_dim() const { return 3 * I + 1; }
  void validate() const;
};

ProblemInstance make_portfolio_instance(const PortfolioConfig& cfg);

// CSV with a header row of tickers and one row of decimal prices per day.
// Returns a day x ticker matrix; any missing or malformed cell is an error
// naming its row and column.
Eigen::MatrixXd load_price_csv(const std::string& path,
                               std::vector<std::string>* tickers = nullptr);

}  // namespace sddp
