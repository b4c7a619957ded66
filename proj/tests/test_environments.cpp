#include "sddp/environments.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "sddp/common.hpp"
#include "sddp/engine.hpp"
#include "sddp/model.hpp"
#include "support/oracle_tree.hpp"

using namespace sddp;

namespace {

// Stall-only stopping with a window wide enough that tiny sampled trees
// converge exactly before it fires.
SddpOptions tree_match_options(std::uint64_t seed, int m) {
  SddpOptions opts;
  opts.n_scenarios = m;
  opts.ub_trajectories = 100;
  opts.ub_interval = 40;
  opts.seed = seed;
  opts.stopping.gap_rel = 1e-10;
  opts.stopping.stall_rel = 1e-12;
  opts.stopping.stall_window = 30;
  opts.stopping.max_iterations = 150;
  return opts;
}

// Provider that records every observation it hands out, so trajectory
// constraints can be replayed against the realized scenarios.
struct RecordedScenarios {
  std::shared_ptr<std::vector<std::vector<Eigen::VectorXd>>> draws;
  ScenarioProvider provider;
};

RecordedScenarios recording_provider(const ProblemInstance& inst, std::uint64_t seed) {
  RecordedScenarios rec;
  rec.draws = std::make_shared<std::vector<std::vector<Eigen::VectorXd>>>();
  auto inner = fresh_scenario_provider(inst, seed);
  auto draws = rec.draws;
  int T = inst.T;
  rec.provider = [inner, draws, T](int stage, int trajectory) {
    Eigen::VectorXd xi = inner(stage, trajectory);
    if (static_cast<int>(draws->size()) <= trajectory) {
      draws->resize(static_cast<std::size_t>(trajectory) + 1,
                    std::vector<Eigen::VectorXd>(static_cast<std::size_t>(T - 1)));
    }
    (*draws)[static_cast<std::size_t>(trajectory)][static_cast<std::size_t>(stage - 2)] = xi;
    return xi;
  };
  return rec;
}

InventoryConfig small_inventory() {
  InventoryConfig cfg;
  cfg.S = 1;
  cfg.I = 1;
  cfg.C = 2;
  cfg.T = 3;
  return cfg;
}

PortfolioConfig tiny_portfolio(int assets, int horizon, double phi, double sigma,
                               double start_price, double spread) {
  PortfolioConfig cfg;
  cfg.I = assets;
  cfg.T = horizon;
  cfg.order = 1;
  cfg.ar.phi = Eigen::MatrixXd::Constant(assets, 1, phi);
  cfg.ar.sigma = Eigen::VectorXd::Constant(assets, sigma);
  cfg.spread = spread;
  cfg.initial_cash = 100.0;
  cfg.initial_holdings = Eigen::VectorXd::Zero(assets);
  cfg.context_window = Eigen::MatrixXd::Constant(1, assets, start_price);
  return cfg;
}

}  // namespace

TEST_CASE("inventory instances have the documented shape") {
  InventoryConfig sml;  // defaults are the 2-2-4, T=5 configuration
  CHECK(sml.action_dim() == 14);
  ProblemInstance inst = make_inventory_instance(sml, 11);
  CHECK(inst.T == 5);
  CHECK(inst.stages.size() == 5);
  for (int t = 1; t <= 5; ++t) CHECK(inst.dim(t) == 14);
  CHECK(inst.stages[0].prev_dim() == 2);
  CHECK(inst.stages[1].prev_dim() == 14);
  CHECK(inst.dist.stationary);
  CHECK(inst.dist.dim(2) == 8);  // demand and transport cost per customer
  CHECK(inst.xi_1.size() == 8);
  CHECK(inst.context.size() == 5);
  for (const auto& u : inst.context) CHECK(u.size() == 3);
  CHECK(inst.value_floors.size() == 4);
  // Nearer stages have more sales opportunities left, hence deeper floors.
  for (int k = 0; k + 1 < 4; ++k) CHECK(inst.value_floors(k) < inst.value_floors(k + 1));
  CHECK(inst.value_floors(3) < 0.0);

  InventoryConfig mid;
  mid.S = 10;
  mid.I = 10;
  mid.C = 20;
  mid.T = 10;
  CHECK(mid.action_dim() == 310);
  ProblemInstance big = make_inventory_instance(mid, 3);
  CHECK(big.T == 10);
  CHECK(big.dim(4) == 310);
  CHECK(big.dist.dim(2) == 40);
}

TEST_CASE("inventory generation is deterministic in the seed") {
  InventoryConfig cfg;
  ProblemInstance a = make_inventory_instance(cfg, 42);
  ProblemInstance b = make_inventory_instance(cfg, 42);
  ProblemInstance c = make_inventory_instance(cfg, 43);
  CHECK(a.xi_1 == b.xi_1);
  CHECK(a.stages[1].base_c == b.stages[1].base_c);
  CHECK(a.stages[1].base_b_ge == b.stages[1].base_b_ge);
  CHECK(a.value_floors == b.value_floors);
  CHECK(a.context[0] == b.context[0]);
  bool differs = a.stages[1].base_b_ge != c.stages[1].base_b_ge ||
                 a.context[0] != c.context[0] || a.xi_1 != c.xi_1;
  CHECK(differs);
}

TEST_CASE("zero demand spread makes all demand scenarios identical") {
  InventoryConfig cfg;
  cfg.sigma_d = Range{0.0, 0.0};
  ProblemInstance inst = make_inventory_instance(cfg, 5);
  ScenarioBatch batch = sample_scenarios(inst, 6, 99);
  const int C = cfg.C;
  for (int t = 2; t <= inst.T; ++t) {
    for (int j = 0; j < batch.m; ++j) {
      CHECK(batch.at(t, j).head(C) == batch.at(t, 0).head(C));
    }
  }
  // Transport costs still fluctuate.
  bool cost_varies = false;
  for (int j = 1; j < batch.m; ++j) {
    if (batch.at(2, j).tail(C) != batch.at(2, 0).tail(C)) cost_varies = true;
  }
  CHECK(cost_varies);
}

TEST_CASE("inventory trajectories satisfy the stated physics") {
  InventoryConfig cfg;  // 2-2-4, T=5
  ProblemInstance inst = make_inventory_instance(cfg, 17);
  const int S = cfg.S;
  const int I = cfg.I;
  const int C = cfg.C;
  auto rec = recording_provider(inst, 7);
  RolloutResult roll = rollout_policy(inst, initial_vfns(inst), 4, rec.provider, false);
  CHECK(roll.dropped == 0);
  CHECK(roll.actions.size() == 4);

  // Capacities live in the template's >= rows: rows C+S.. hold -vbar.
  const Eigen::VectorXd vbar = -inst.stages[1].base_b_ge.segment(C + S, I);

  for (std::size_t k = 0; k < roll.actions.size(); ++k) {
    Eigen::VectorXd w_prev = inst.x0;
    for (int t = 1; t <= inst.T; ++t) {
      const Eigen::VectorXd& a = roll.actions[k][static_cast<std::size_t>(t - 1)];
      REQUIRE(a.size() == cfg.action_dim());
      CHECK(a.minCoeff() >= -1e-9);
      const Eigen::VectorXd xi =
          t == 1 ? inst.xi_1 : (*rec.draws)[k][static_cast<std::size_t>(t - 2)];
      for (int v = 0; v < I; ++v) {
        double sold = 0.0;
        for (int c = 0; c < C; ++c) sold += a(v * C + c);
        double bought = 0.0;
        for (int s = 0; s < S; ++s) bought += a(I * C + s * I + v);
        const double w = a(I * C + S * I + v);
        CHECK(std::abs(w - (w_prev(v) + bought - sold)) <= 1e-7);
        CHECK(sold <= w_prev(v) + 1e-7);
        CHECK(w <= vbar(v) + 1e-7);
      }
      for (int c = 0; c < C; ++c) {
        double y_c = 0.0;
        for (int v = 0; v < I; ++v) y_c += a(v * C + c);
        CHECK(y_c <= xi(c) + 1e-7);
      }
      w_prev = a.tail(I);
    }
  }
}

TEST_CASE("inventory sddp matches the extensive-form tree optimum") {
  ProblemInstance inst = make_inventory_instance(small_inventory(), 23);
  const int m = 3;
  SddpOptions opts = tree_match_options(2023, m);
  ScenarioBatch batch = sample_scenarios(inst, m, derive_seed(opts.seed, "saa-tree"));
  const double opt = testing::extensive_form_value(inst, batch);
  SddpResult result = sddp_solve(inst, opts);
  CHECK(result.lower_bound <= opt + 1e-7 * (1.0 + std::abs(opt)));
  CHECK(result.lower_bound == doctest::Approx(opt).epsilon(1e-6));
  CHECK(opt < 0.0);  // profitable instance, exercises the revenue floors
}

TEST_CASE("clustering with one cluster per customer changes nothing") {
  InventoryConfig cfg;  // C = 4
  ProblemInstance plain = make_inventory_instance(cfg, 31);
  ProblemInstance clustered = make_clustered_inventory_instance(cfg, 4, 31);
  REQUIRE(plain.stages.size() == clustered.stages.size());
  for (std::size_t i = 0; i < plain.stages.size(); ++i) {
    CHECK(plain.stages[i].base_c == clustered.stages[i].base_c);
    CHECK(plain.stages[i].base_A == clustered.stages[i].base_A);
    CHECK(plain.stages[i].base_B == clustered.stages[i].base_B);
    CHECK(plain.stages[i].base_A_ge == clustered.stages[i].base_A_ge);
    CHECK(plain.stages[i].base_b_ge == clustered.stages[i].base_b_ge);
    REQUIRE(plain.stages[i].injections.size() == clustered.stages[i].injections.size());
    for (std::size_t j = 0; j < plain.stages[i].injections.size(); ++j) {
      const XiBinding& x = plain.stages[i].injections[j];
      const XiBinding& y = clustered.stages[i].injections[j];
      CHECK(x.target == y.target);
      CHECK(x.row == y.row);
      CHECK(x.xi_index == y.xi_index);
      CHECK(x.scale == y.scale);
      CHECK(x.offset == y.offset);
    }
  }
  CHECK(plain.xi_1 == clustered.xi_1);
  CHECK(plain.value_floors == clustered.value_floors);
  CHECK(plain.dist.stages[0].mean == clustered.dist.stages[0].mean);
}

TEST_CASE("single-cluster instances share one demand stream") {
  InventoryConfig cfg;  // 2-2-4
  ProblemInstance inst = make_clustered_inventory_instance(cfg, 1, 13);
  CHECK(inst.dist.dim(2) == 2);  // one demand, one cost component
  CHECK(inst.xi_1.size() == 2);

  Eigen::VectorXd xi(2);
  xi << 9.5, 0.4;
  StageData data = realize_stage(inst.stages[1], xi);
  const int C = cfg.C;
  for (int c = 0; c < C; ++c) CHECK(data.b_ge(c) == -9.5);
  // Shared transport cost and shared sales price within the single cluster
  // make every customer's sales coefficient identical per inventory.
  for (int v = 0; v < cfg.I; ++v) {
    for (int c = 1; c < C; ++c) CHECK(data.c(v * C + c) == data.c(v * C));
  }

  InventoryConfig bad;
  bad.C = 4;
  CHECK_THROWS_AS(make_clustered_inventory_instance(bad, 3, 1), std::invalid_argument);
}

TEST_CASE("ar fit recovers known coefficients and flags degenerate series") {
  ArFit truth;
  truth.phi.resize(1, 2);
  truth.phi << 0.55, 0.35;
  truth.sigma = Eigen::VectorXd::Constant(1, 0.02);
  Eigen::MatrixXd window(2, 1);
  window << 10.0, 10.2;
  // Coefficient precision scales like 1/sqrt(length) regardless of the noise
  // level, so the series must be long for a 1e-2 recovery tolerance.
  Eigen::MatrixXd path = simulate_ar(truth, window, 200000, 77);
  REQUIRE(path.rows() == 200000);

  ArFit fit = fit_ar(path, 2);
  CHECK(std::abs(fit.phi(0, 0) - 0.55) <= 1e-2);
  CHECK(std::abs(fit.phi(0, 1) - 0.35) <= 1e-2);
  CHECK(fit.sigma(0) == doctest::Approx(0.02).epsilon(0.1));

  CHECK_THROWS_AS(fit_ar(Eigen::MatrixXd::Constant(50, 1, 3.0), 2), std::invalid_argument);
  CHECK_THROWS_AS(fit_ar(Eigen::MatrixXd::Zero(50, 1), 1), std::invalid_argument);
  CHECK_THROWS_AS(fit_ar(Eigen::MatrixXd::Constant(4, 1, 1.0), 2), std::invalid_argument);
}

TEST_CASE("ar fit on white noise finds no signal") {
  Rng rng(123);
  const int n = 4000;
  Eigen::MatrixXd series(n, 1);
  for (int t = 0; t < n; ++t) series(t, 0) = rng.normal(0.0, 1.0);
  ArFit fit = fit_ar(series, 1);
  double sum_sq = 0.0;
  for (int t = 0; t < n - 1; ++t) sum_sq += series(t, 0) * series(t, 0);
  const double stderr_phi = fit.sigma(0) / std::sqrt(sum_sq);
  CHECK(std::abs(fit.phi(0, 0)) <= 3.0 * stderr_phi);
}

TEST_CASE("portfolio instances encode the ar forecast marginals") {
  PortfolioConfig cfg;
  cfg.I = 2;
  cfg.T = 4;
  cfg.order = 2;
  cfg.ar.phi.resize(2, 2);
  cfg.ar.phi << 0.6, 0.3, 0.5, 0.2;
  cfg.ar.sigma.resize(2);
  cfg.ar.sigma << 0.3, 0.2;
  cfg.initial_holdings = Eigen::VectorXd::Zero(2);
  cfg.context_window.resize(2, 2);
  cfg.context_window << 10.0, 8.0, 10.5, 8.2;  // oldest row first
  CHECK(cfg.action_dim() == 7);

  ProblemInstance inst = make_portfolio_instance(cfg);
  CHECK(inst.T == 4);
  CHECK(inst.dim(2) == 7);
  CHECK(inst.stages[0].prev_dim() == 3);
  CHECK(inst.stages[1].prev_dim() == 7);
  CHECK_FALSE(inst.dist.stationary);
  REQUIRE(inst.dist.stages.size() == 3);
  CHECK(inst.xi_1 == cfg.context_window.row(1).transpose());
  REQUIRE(inst.context.size() == 4);
  CHECK(inst.context[0].size() == 4);
  CHECK(inst.context[0](0) == 10.0);
  CHECK(inst.context[0](3) == 8.2);

  // Stage-2 marginal: mean phi1 p_last + phi2 p_prev, variance sigma^2.
  const double m2 = 0.6 * 10.5 + 0.3 * 10.0;
  CHECK(inst.dist.stages[0].mean(0) == doctest::Approx(m2).epsilon(1e-12));
  CHECK(inst.dist.stages[0].stddev(0) == doctest::Approx(0.3).epsilon(1e-12));
  // Stage-3 marginal chains the recursion on means and variances.
  const double m3 = 0.6 * m2 + 0.3 * 10.5;
  const double v3 = 0.6 * 0.6 * 0.3 * 0.3 + 0.3 * 0.3;
  CHECK(inst.dist.stages[1].mean(0) == doctest::Approx(m3).epsilon(1e-12));
  CHECK(inst.dist.stages[1].stddev(0) == doctest::Approx(std::sqrt(v3)).epsilon(1e-12));
  CHECK((inst.dist.stages[2].floor.array() == cfg.price_floor).all());
  CHECK(inst.value_floors.size() == 3);
  CHECK((inst.value_floors.array() < 0.0).all());
}

TEST_CASE("portfolio trajectories conserve cash and positions") {
  PortfolioConfig cfg;
  cfg.I = 2;
  cfg.T = 4;
  cfg.order = 2;
  cfg.ar.phi.resize(2, 2);
  cfg.ar.phi << 0.6, 0.3, 0.5, 0.2;
  cfg.ar.sigma.resize(2);
  cfg.ar.sigma << 0.3, 0.2;
  cfg.initial_cash = 100.0;
  cfg.initial_holdings.resize(2);
  cfg.initial_holdings << 1.0, 2.0;
  cfg.context_window.resize(2, 2);
  cfg.context_window << 10.0, 8.0, 10.5, 8.2;

  ProblemInstance inst = make_portfolio_instance(cfg);
  const int I = cfg.I;
  auto rec = recording_provider(inst, 3);
  RolloutResult roll = rollout_policy(inst, initial_vfns(inst), 4, rec.provider, false);
  CHECK(roll.dropped == 0);

  for (std::size_t k = 0; k < roll.actions.size(); ++k) {
    Eigen::VectorXd w_prev = inst.x0.head(I);
    double r_prev = inst.x0(I);
    for (int t = 1; t <= inst.T; ++t) {
      const Eigen::VectorXd& a = roll.actions[k][static_cast<std::size_t>(t - 1)];
      REQUIRE(a.size() == 3 * I + 1);
      CHECK(a.minCoeff() >= -1e-9);
      const Eigen::VectorXd p =
          t == 1 ? inst.xi_1 : (*rec.draws)[k][static_cast<std::size_t>(t - 2)];
      const Eigen::VectorXd q = p / cfg.spread;
      const Eigen::VectorXd y = a.head(I);
      const Eigen::VectorXd z = a.segment(I, I);
      const Eigen::VectorXd w = a.segment(2 * I, I);
      const double r = a(3 * I);
      CHECK((w - (w_prev - y + z)).cwiseAbs().maxCoeff() <= 1e-7);
      CHECK(std::abs(r - (r_prev + q.dot(y) - p.dot(z))) <= 1e-7);
      CHECK((y - w_prev).maxCoeff() <= 1e-7);
      CHECK(p.dot(z) <= r_prev + 1e-7);
      w_prev = w;
      r_prev = r;
    }
  }
}

TEST_CASE("portfolio sddp matches the extensive-form tree optimum") {
  PortfolioConfig cfg = tiny_portfolio(1, 3, 0.9, 0.5, 10.0, 1.001);
  cfg.initial_cash = 50.0;
  cfg.initial_holdings = Eigen::VectorXd::Constant(1, 1.0);
  ProblemInstance inst = make_portfolio_instance(cfg);
  const int m = 3;
  SddpOptions opts = tree_match_options(404, m);
  ScenarioBatch batch = sample_scenarios(inst, m, derive_seed(opts.seed, "saa-tree"));
  const double opt = testing::extensive_form_value(inst, batch);
  SddpResult result = sddp_solve(inst, opts);
  CHECK(result.lower_bound <= opt + 1e-7 * (1.0 + std::abs(opt)));
  CHECK(result.lower_bound == doctest::Approx(opt).epsilon(1e-6));
}

TEST_CASE("deterministic rising prices reward buy and hold") {
  // Zero noise, zero spread, one asset: investing all cash at the first
  // stage and liquidating at the end multiplies wealth by p_T / p_1.
  PortfolioConfig cfg = tiny_portfolio(1, 4, 1.05, 0.0, 10.0, 1.0);
  ProblemInstance inst = make_portfolio_instance(cfg);
  const double ratio = std::pow(1.05, 3);
  const double expected = -cfg.initial_cash * (ratio - 1.0);

  SddpOptions opts = tree_match_options(9, 1);
  SddpResult result = sddp_solve(inst, opts);
  CHECK(result.lower_bound == doctest::Approx(expected).epsilon(1e-7));
  CostStats cost = evaluate_policy(inst, result.vfns, 3, 99);
  CHECK(cost.mean == doctest::Approx(expected).epsilon(1e-7));
  CHECK(cost.stddev == 0.0);
}

TEST_CASE("flat prices with no spread admit no profit") {
  // Every trade is wealth neutral, so starting from pure cash no policy can
  // gain or lose anything.
  PortfolioConfig cfg = tiny_portfolio(1, 3, 1.0, 0.0, 10.0, 1.0);
  ProblemInstance inst = make_portfolio_instance(cfg);
  SddpOptions opts = tree_match_options(5, 1);
  SddpResult result = sddp_solve(inst, opts);
  CHECK(std::abs(result.lower_bound) <= 1e-8);
  CostStats cost = evaluate_policy(inst, result.vfns, 3, 4);
  CHECK(std::abs(cost.mean) <= 1e-8);

  // Starting holdings shift the optimum by exactly their liquidation value.
  cfg.initial_holdings = Eigen::VectorXd::Constant(1, 2.0);
  ProblemInstance endowed = make_portfolio_instance(cfg);
  SddpResult sold = sddp_solve(endowed, opts);
  CHECK(sold.lower_bound == doctest::Approx(-20.0).epsilon(1e-9));
}

TEST_CASE("price csv loading round trips and names bad cells") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path();

  const fs::path small = dir / "sddp_prices_small.csv";
  {
    std::ofstream out(small);
    out << "AAA\n1.5\n2.25\n";
  }
  std::vector<std::string> tickers;
  Eigen::MatrixXd series = load_price_csv(small.string(), &tickers);
  CHECK(series.rows() == 2);
  CHECK(series.cols() == 1);
  CHECK(series(0, 0) == 1.5);
  CHECK(series(1, 0) == 2.25);
  REQUIRE(tickers.size() == 1);
  CHECK(tickers[0] == "AAA");

  // Synthetic multi-asset export reloads bit-identically at full precision.
  Rng rng(2024);
  Eigen::MatrixXd data(40, 5);
  for (int r = 0; r < 40; ++r) {
    for (int c = 0; c < 5; ++c) data(r, c) = rng.uniform(1.0, 200.0);
  }
  const fs::path round = dir / "sddp_prices_round.csv";
  {
    std::ofstream out(round);
    out.precision(17);
    out << "A,B,C,D,E\n";
    for (int r = 0; r < 40; ++r) {
      for (int c = 0; c < 5; ++c) out << data(r, c) << (c + 1 < 5 ? "," : "\n");
    }
  }
  Eigen::MatrixXd reloaded = load_price_csv(round.string());
  CHECK(reloaded == data);

  const fs::path bad = dir / "sddp_prices_bad.csv";
  {
    std::ofstream out(bad);
    out << "AAA,BBB\n1.0,2.0\n3.0,oops\n";
  }
  CHECK_THROWS_WITH_AS(load_price_csv(bad.string()),
                       doctest::Contains("row 3, column 2 (BBB)"), std::runtime_error);

  const fs::path ragged = dir / "sddp_prices_ragged.csv";
  {
    std::ofstream out(ragged);
    out << "AAA,BBB\n1.0\n";
  }
  CHECK_THROWS_AS(load_price_csv(ragged.string()), std::runtime_error);
  CHECK_THROWS_AS(load_price_csv((dir / "sddp_prices_missing.csv").string()),
                  std::runtime_error);

  fs::remove(small);
  fs::remove(round);
  fs::remove(bad);
  fs::remove(ragged);
}
