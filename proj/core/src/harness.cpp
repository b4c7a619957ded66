#include "sddp/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "sddp/common.hpp"
#include "sddp/serialize.hpp"

namespace sddp {
namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path);
}

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

json config_echo(const ExperimentConfig& cfg) {
  json env;
  if (cfg.family == EnvFamily::Inventory) {
    const InventoryConfig& v = cfg.inventory;
    env = json{{"suppliers", v.S},
               {"inventories", v.I},
               {"customers", v.C},
               {"horizon", v.T},
               {"mu_d", range_json(v.mu_d)},
               {"sigma_d", range_json(v.sigma_d)},
               {"mu_c", range_json(v.mu_c)},
               {"sigma_c", v.sigma_c},
               {"sales_price", range_json(v.sales_price)},
               {"procurement_price", range_json(v.procurement_price)},
               {"holding_cost", range_json(v.holding_cost)},
               {"supplier_capacity", range_json(v.supplier_capacity)},
               {"inventory_capacity", range_json(v.inventory_capacity)},
               {"initial_inventory", range_json(v.initial_inventory)},
               {"clusters", v.n_clusters}};
  } else {
    const PortfolioFamily& p = cfg.portfolio;
    env = json{{"assets", p.assets},
               {"horizon", p.horizon},
               {"order", p.order},
               {"phi", p.phi},
               {"sigma", p.sigma},
               {"start_price", range_json(p.start_price)},
               {"spread", p.spread},
               {"price_floor", p.price_floor},
               {"initial_cash", p.initial_cash},
               {"initial_holdings", p.initial_holdings},
               {"drift_steps", p.drift_steps}};
  }
  const SddpOptions& s = cfg.sddp;
  const TrainConfig& t = cfg.train;
  return json{{"name", cfg.name},
              {"family", cfg.family == EnvFamily::Inventory ? "inventory" : "portfolio"},
              {"environment", std::move(env)},
              {"train_instances", cfg.train_instances},
              {"test_instances", cfg.test_instances},
              {"eval_trajectories", cfg.eval_trajectories},
              {"refine_iterations", cfg.refine_iterations},
              {"output_dir", cfg.output_dir},
              {"master_seed", cfg.master_seed},
              {"sddp",
               {{"scenarios", s.n_scenarios},
                {"incumbents", s.n_incumbents},
                {"ub_trajectories", s.ub_trajectories},
                {"ub_interval", s.ub_interval},
                {"gap_rel", s.stopping.gap_rel},
                {"stall_rel", s.stopping.stall_rel},
                {"stall_window", s.stopping.stall_window},
                {"max_iterations", s.stopping.max_iterations}}},
              {"train",
               {{"cuts", t.K},
                {"embed", t.embed},
                {"hidden", t.hidden},
                {"learning_rate", t.learning_rate},
                {"weight_decay", t.weight_decay},
                {"emd_window", t.emd_window},
                {"steps_per_epoch", t.steps_per_epoch},
                {"batch_size", t.batch_size},
                {"anneal_max", t.anneal_max},
                {"projection_rank", t.projection_rank},
                {"projection_lr", t.projection_lr},
                {"exact_projection", t.exact_projection},
                {"validation_count", t.validation_count},
                {"standardization_probes", t.standardization_probes}}}};
}

void assert_disjoint(const std::vector<std::string>& a, const std::vector<std::string>& b,
                     const char* what) {
  const std::set<std::string> seen(a.begin(), a.end());
  for (const std::string& id : b) {
    if (seen.count(id) > 0) {
      throw std::logic_error("instance split leak (" + std::string(what) + "): " + id);
    }
  }
}

// Keeps first occurrences; duplicates are a config mistake worth flagging but
// not failing a long run over.
std::vector<int> dedupe(const std::vector<int>& list, const char* what) {
  std::vector<int> out;
  std::set<int> seen;
  for (int v : list) {
    if (!seen.insert(v).second) {
      std::cerr << "[harness] duplicate " << what << " entry " << v << " ignored\n";
      continue;
    }
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument(std::string(what) + " list must not be empty");
  return out;
}

struct TimedSolve {
  SddpResult result;
  double wall_ms = 0.0;
};

TimedSolve timed_solve(const ProblemInstance& inst, const SddpOptions& opts) {
  const auto t0 = Clock::now();
  TimedSolve out{sddp_solve(inst, opts), 0.0};
  out.wall_ms = ms_since(t0);
  return out;
}

// Exactly n iterations: gap check disabled, stall window larger than the run.
SddpOptions fixed_budget(SddpOptions opts, int n) {
  opts.stopping.gap_rel = 0.0;
  opts.stopping.stall_window = n + 1;
  opts.stopping.max_iterations = n;
  opts.ub_interval = n;
  return opts;
}

}  // namespace

double error_ratio(double candidate_mean, double optimal_mean) {
  if (optimal_mean == 0.0) {
    throw std::invalid_argument("error ratio undefined for zero optimal mean");
  }
  return (candidate_mean - optimal_mean) / std::abs(optimal_mean);
}

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  std::ostringstream out;
  out << "instance_id,method,mean_cost,stddev,error_ratio\n";
  for (const MetricRow& r : rows) {
    out << r.instance_id << ',' << r.method << ',' << format_double(r.mean_cost) << ','
        << format_double(r.stddev) << ',' << format_double(r.error_ratio) << '\n';
  }
  write_text(path, out.str());
}

void write_walltimes_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  std::ostringstream out;
  out << "instance_id,method,wall_ms\n";
  for (const MetricRow& r : rows) {
    out << r.instance_id << ',' << r.method << ',' << format_double(r.wall_ms) << '\n';
  }
  write_text(path, out.str());
}

void write_timing_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  std::ostringstream out;
  out << "instance_id,method,mean_cost,stddev,error_ratio,wall_ms\n";
  for (const MetricRow& r : rows) {
    out << r.instance_id << ',' << r.method << ',' << format_double(r.mean_cost) << ','
        << format_double(r.stddev) << ',' << format_double(r.error_ratio) << ','
        << format_double(r.wall_ms) << '\n';
  }
  write_text(path, out.str());
}

InstanceSampler make_instance_sampler(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.family == EnvFamily::Inventory) {
    return [inv = cfg.inventory](std::uint64_t seed) { return make_inventory_instance(inv, seed); };
  }
  return [pf = cfg.portfolio](std::uint64_t seed) {
    PortfolioConfig pc = pf.base();
    Rng rng(derive_seed(seed, "start-price"));
    Eigen::MatrixXd window(pf.order, pf.assets);
    for (int i = 0; i < pf.assets; ++i) {
      window.col(i).setConstant(rng.uniform(pf.start_price.lo, pf.start_price.hi));
    }
    if (pf.drift_steps > 0) {
      const Eigen::MatrixXd path = simulate_ar(pc.ar, window, pf.drift_steps,
                                               derive_seed(seed, "drift"));
      Eigen::MatrixXd stacked(window.rows() + path.rows(), pf.assets);
      stacked << window, path;
      window = stacked.bottomRows(pf.order).cwiseMax(pf.price_floor);
    }
    pc.context_window = window;
    ProblemInstance inst = make_portfolio_instance(pc);
    inst.id += "-s" + std::to_string(seed);
    return inst;
  };
}

ProblemInstance make_mean_instance(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.family == EnvFamily::Inventory) {
    InventoryConfig inv = cfg.inventory;
    const auto collapse = [](Range& r) { r = Range{0.5 * (r.lo + r.hi), 0.5 * (r.lo + r.hi)}; };
    collapse(inv.mu_d);
    collapse(inv.sigma_d);
    collapse(inv.mu_c);
    collapse(inv.sales_price);
    collapse(inv.procurement_price);
    collapse(inv.holding_cost);
    collapse(inv.supplier_capacity);
    collapse(inv.inventory_capacity);
    collapse(inv.initial_inventory);
    return make_inventory_instance(inv, derive_seed(cfg.master_seed, "mean-instance"));
  }
  const PortfolioFamily& pf = cfg.portfolio;
  PortfolioConfig pc = pf.base();
  pc.context_window = Eigen::MatrixXd::Constant(pf.order, pf.assets,
                                                0.5 * (pf.start_price.lo + pf.start_price.hi));
  ProblemInstance inst = make_portfolio_instance(pc);
  inst.id += "-mean";
  return inst;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  const fs::path out(cfg.output_dir);
  fs::create_directories(out / "bounds");

  const InstanceSampler sampler = make_instance_sampler(cfg);
  MetaTrainResult trained = meta_train(sampler, cfg.train, cfg.train_instances,
                                       derive_seed(cfg.master_seed, "train"), cfg.sddp);

  const ProblemInstance mean_inst = make_mean_instance(cfg);
  SddpOptions mean_opts = cfg.sddp;
  mean_opts.seed = derive_seed(cfg.master_seed, "mean-solve");
  const SddpResult mean_solved = sddp_solve(mean_inst, mean_opts);
  write_bound_history_csv((out / "bounds" / ("mean-" + mean_inst.id + ".csv")).string(),
                          mean_solved.history);

  ExperimentResult result;
  result.mean_instance_id = mean_inst.id;

  std::vector<std::string> test_ids;
  for (int i = 0; i < cfg.test_instances; ++i) {
    const std::uint64_t inst_seed =
        derive_seed(cfg.master_seed, "test-instance", static_cast<std::uint64_t>(i));
    const std::uint64_t eval_seed =
        derive_seed(cfg.master_seed, "test-eval", static_cast<std::uint64_t>(i));
    try {
      const ProblemInstance inst = sampler(inst_seed);
      SddpOptions opt = cfg.sddp;
      opt.seed = derive_seed(cfg.master_seed, "test-solve", static_cast<std::uint64_t>(i));
      const TimedSolve optimal = timed_solve(inst, opt);
      const CostStats opt_stats =
          evaluate_policy(inst, optimal.result.vfns, cfg.eval_trajectories, eval_seed);

      const CostStats mean_stats =
          evaluate_policy(inst, mean_solved.vfns, cfg.eval_trajectories, eval_seed);
      const InferenceResult fast =
          fast_infer(trained.model, trained.G, inst, cfg.eval_trajectories, eval_seed);
      const InferenceResult acc = refine(trained.model, inst, cfg.refine_iterations,
                                         cfg.sddp.n_scenarios, cfg.eval_trajectories, eval_seed);

      // Rows land only after every method succeeded, so each surviving
      // instance carries its sddp-optimal reference row.
      result.metrics.push_back(
          {inst.id, "sddp-optimal", opt_stats.mean, opt_stats.stddev, 0.0, optimal.wall_ms});
      result.metrics.push_back({inst.id, "sddp-mean", mean_stats.mean, mean_stats.stddev,
                                error_ratio(mean_stats.mean, opt_stats.mean), 0.0});
      result.metrics.push_back({inst.id, "fast", fast.stats.mean, fast.stats.stddev,
                                error_ratio(fast.stats.mean, opt_stats.mean),
                                1e3 * fast.timings.total()});
      result.metrics.push_back({inst.id, "accurate", acc.stats.mean, acc.stats.stddev,
                                error_ratio(acc.stats.mean, opt_stats.mean),
                                1e3 * acc.timings.total()});
      write_bound_history_csv((out / "bounds" / (inst.id + ".csv")).string(),
                              optimal.result.history);
      test_ids.push_back(inst.id);
    } catch (const std::exception& e) {
      std::cerr << "[harness] test instance " << i << " dropped: " << e.what() << "\n";
      ++result.failed_test_instances;
    }
  }

  std::vector<std::string> train_ids;
  for (const TrainingRecord& rec : trained.dataset) train_ids.push_back(rec.instance_id);
  assert_disjoint(train_ids, trained.validation_ids, "train/validation");
  assert_disjoint(train_ids, test_ids, "train/test");
  assert_disjoint(trained.validation_ids, test_ids, "validation/test");

  write_metrics_csv((out / "metrics.csv").string(), result.metrics);
  write_walltimes_csv((out / "walltimes.csv").string(), result.metrics);
  save_dataset((out / "dataset.jsonl").string(), trained.dataset);
  save_checkpoint((out / "checkpoint.json").string(),
                  Checkpoint{trained.model, trained.G, cfg.train});

  const json manifest{
      {"format", "sddp-manifest"},
      {"version", 1},
      {"config", config_echo(cfg)},
      {"splits",
       {{"train", train_ids}, {"validation", trained.validation_ids}, {"test", test_ids}}},
      {"mean_instance", mean_inst.id},
      {"failed_train_instances", trained.failed_instances},
      {"failed_test_instances", result.failed_test_instances},
      {"optimal_definition", "sddp-optimal rows are solves converged per the configured "
                             "stopping rule, not exact optima"},
      {"file_formats", {{"instance", 1}, {"dataset", 1}, {"checkpoint", 1}, {"manifest", 1}}}};
  write_text((out / "manifest.json").string(), manifest.dump(2) + "\n");

  result.trained = std::move(trained);
  return result;
}

std::vector<MetricRow> sweep_num_cuts(const ExperimentConfig& cfg, std::vector<int> k_list) {
  cfg.validate();
  const std::vector<int> ks = dedupe(k_list, "cut count");
  const InstanceSampler sampler = make_instance_sampler(cfg);

  // One shared test set with one reference solve per instance.
  std::vector<MetricRow> rows;
  std::vector<ProblemInstance> insts;
  std::vector<double> opt_means;
  std::vector<std::uint64_t> eval_seeds;
  for (int i = 0; i < cfg.test_instances; ++i) {
    const std::uint64_t inst_seed =
        derive_seed(cfg.master_seed, "test-instance", static_cast<std::uint64_t>(i));
    const std::uint64_t eval_seed =
        derive_seed(cfg.master_seed, "test-eval", static_cast<std::uint64_t>(i));
    try {
      ProblemInstance inst = sampler(inst_seed);
      SddpOptions opt = cfg.sddp;
      opt.seed = derive_seed(cfg.master_seed, "test-solve", static_cast<std::uint64_t>(i));
      const TimedSolve optimal = timed_solve(inst, opt);
      const CostStats stats =
          evaluate_policy(inst, optimal.result.vfns, cfg.eval_trajectories, eval_seed);
      rows.push_back({inst.id, "sddp-optimal", stats.mean, stats.stddev, 0.0, optimal.wall_ms});
      insts.push_back(std::move(inst));
      opt_means.push_back(stats.mean);
      eval_seeds.push_back(eval_seed);
    } catch (const std::exception& e) {
      std::cerr << "[harness] test instance " << i << " dropped: " << e.what() << "\n";
    }
  }

  for (int k : ks) {
    ExperimentConfig c = cfg;
    c.train.K = k;
    const MetaTrainResult trained = meta_train(sampler, c.train, c.train_instances,
                                               derive_seed(c.master_seed, "train"), c.sddp);
    for (std::size_t i = 0; i < insts.size(); ++i) {
      try {
        const InferenceResult fast =
            fast_infer(trained.model, trained.G, insts[i], cfg.eval_trajectories, eval_seeds[i]);
        rows.push_back({insts[i].id, "fast-K" + std::to_string(k), fast.stats.mean,
                        fast.stats.stddev, error_ratio(fast.stats.mean, opt_means[i]),
                        1e3 * fast.timings.total()});
      } catch (const std::exception& e) {
        std::cerr << "[harness] fast K=" << k << " on " << insts[i].id << " dropped: " << e.what()
                  << "\n";
      }
    }
  }
  return rows;
}

std::vector<MetricRow> sweep_projection_rank(const ExperimentConfig& cfg,
                                             std::vector<int> p_list) {
  cfg.validate();
  const std::vector<int> ps = dedupe(p_list, "projection rank");
  const InstanceSampler sampler = make_instance_sampler(cfg);

  const ProblemInstance mean_inst = make_mean_instance(cfg);
  SddpOptions mean_opts = cfg.sddp;
  mean_opts.seed = derive_seed(cfg.master_seed, "mean-solve");
  const SddpResult mean_solved = sddp_solve(mean_inst, mean_opts);

  std::vector<MetricRow> rows;
  std::vector<ProblemInstance> insts;
  std::vector<double> opt_means;
  std::vector<std::uint64_t> eval_seeds;
  for (int i = 0; i < cfg.test_instances; ++i) {
    const std::uint64_t inst_seed =
        derive_seed(cfg.master_seed, "test-instance", static_cast<std::uint64_t>(i));
    const std::uint64_t eval_seed =
        derive_seed(cfg.master_seed, "test-eval", static_cast<std::uint64_t>(i));
    try {
      ProblemInstance inst = sampler(inst_seed);
      SddpOptions opt = cfg.sddp;
      opt.seed = derive_seed(cfg.master_seed, "test-solve", static_cast<std::uint64_t>(i));
      const TimedSolve optimal = timed_solve(inst, opt);
      const CostStats stats =
          evaluate_policy(inst, optimal.result.vfns, cfg.eval_trajectories, eval_seed);
      const CostStats mean_stats =
          evaluate_policy(inst, mean_solved.vfns, cfg.eval_trajectories, eval_seed);
      rows.push_back({inst.id, "sddp-optimal", stats.mean, stats.stddev, 0.0, optimal.wall_ms});
      rows.push_back({inst.id, "sddp-mean", mean_stats.mean, mean_stats.stddev,
                      error_ratio(mean_stats.mean, stats.mean), 0.0});
      insts.push_back(std::move(inst));
      opt_means.push_back(stats.mean);
      eval_seeds.push_back(eval_seed);
    } catch (const std::exception& e) {
      std::cerr << "[harness] test instance " << i << " dropped: " << e.what() << "\n";
    }
  }

  for (int p : ps) {
    ExperimentConfig c = cfg;
    c.train.projection_rank = p;
    const MetaTrainResult trained = meta_train(sampler, c.train, c.train_instances,
                                               derive_seed(c.master_seed, "train"), c.sddp);
    for (std::size_t i = 0; i < insts.size(); ++i) {
      try {
        const InferenceResult fast =
            fast_infer(trained.model, trained.G, insts[i], cfg.eval_trajectories, eval_seeds[i]);
        rows.push_back({insts[i].id, "fast-p" + std::to_string(p), fast.stats.mean,
                        fast.stats.stddev, error_ratio(fast.stats.mean, opt_means[i]),
                        1e3 * fast.timings.total()});
      } catch (const std::exception& e) {
        std::cerr << "[harness] fast p=" << p << " on " << insts[i].id << " dropped: " << e.what()
                  << "\n";
      }
    }
  }
  return rows;
}

std::vector<MetricRow> timing_report(const ExperimentConfig& cfg,
                                     const std::vector<int>& sddp_iters) {
  cfg.validate();
  const std::vector<int> budgets = dedupe(sddp_iters, "iteration budget");
  for (int n : budgets) {
    if (n < 1) throw std::invalid_argument("iteration budgets must be positive");
  }
  const InstanceSampler sampler = make_instance_sampler(cfg);
  const MetaTrainResult trained = meta_train(sampler, cfg.train, cfg.train_instances,
                                             derive_seed(cfg.master_seed, "train"), cfg.sddp);

  const ProblemInstance mean_inst = make_mean_instance(cfg);
  SddpOptions mean_opts = cfg.sddp;
  mean_opts.seed = derive_seed(cfg.master_seed, "mean-solve");
  const SddpResult mean_solved = sddp_solve(mean_inst, mean_opts);

  std::vector<MetricRow> rows;
  for (int i = 0; i < cfg.test_instances; ++i) {
    const std::uint64_t inst_seed =
        derive_seed(cfg.master_seed, "test-instance", static_cast<std::uint64_t>(i));
    const std::uint64_t eval_seed =
        derive_seed(cfg.master_seed, "test-eval", static_cast<std::uint64_t>(i));
    const std::uint64_t solve_seed =
        derive_seed(cfg.master_seed, "test-solve", static_cast<std::uint64_t>(i));
    try {
      const ProblemInstance inst = sampler(inst_seed);
      SddpOptions opt = cfg.sddp;
      opt.seed = solve_seed;
      const TimedSolve optimal = timed_solve(inst, opt);
      const CostStats opt_stats =
          evaluate_policy(inst, optimal.result.vfns, cfg.eval_trajectories, eval_seed);
      rows.push_back(
          {inst.id, "sddp-optimal", opt_stats.mean, opt_stats.stddev, 0.0, optimal.wall_ms});

      // One forward sweep of eval_trajectories trajectories under the
      // converged value functions: the marginal cost of continuing SDDP,
      // which is what fast inference's wall-time is compared against.
      {
        const ScenarioBatch batch = sample_scenarios(inst, cfg.sddp.n_scenarios,
                                                     derive_seed(solve_seed, "saa-tree"));
        Rng rng(derive_seed(cfg.master_seed, "forward-pass", static_cast<std::uint64_t>(i)));
        const auto t0 = Clock::now();
        forward_pass(inst, optimal.result.vfns, batch, cfg.eval_trajectories, rng, cfg.sddp.lp);
        rows.push_back({inst.id, "forward-pass", kNan, kNan, kNan, ms_since(t0)});
      }

      for (int n : budgets) {
        SddpOptions budget = fixed_budget(cfg.sddp, n);
        budget.seed = derive_seed(solve_seed, "budget", static_cast<std::uint64_t>(n));
        const TimedSolve run = timed_solve(inst, budget);
        const CostStats stats =
            evaluate_policy(inst, run.result.vfns, cfg.eval_trajectories, eval_seed);
        rows.push_back({inst.id, "sddp-" + std::to_string(n), stats.mean, stats.stddev,
                        error_ratio(stats.mean, opt_stats.mean), run.wall_ms});
      }

      const CostStats mean_stats =
          evaluate_policy(inst, mean_solved.vfns, cfg.eval_trajectories, eval_seed);
      rows.push_back({inst.id, "sddp-mean", mean_stats.mean, mean_stats.stddev,
                      error_ratio(mean_stats.mean, opt_stats.mean), 0.0});

      const InferenceResult fast =
          fast_infer(trained.model, trained.G, inst, cfg.eval_trajectories, eval_seed);
      rows.push_back({inst.id, "fast", fast.stats.mean, fast.stats.stddev,
                      error_ratio(fast.stats.mean, opt_stats.mean), 1e3 * fast.timings.total()});

      const InferenceResult acc = refine(trained.model, inst, cfg.refine_iterations,
                                         cfg.sddp.n_scenarios, cfg.eval_trajectories, eval_seed);
      rows.push_back({inst.id, "accurate", acc.stats.mean, acc.stats.stddev,
                      error_ratio(acc.stats.mean, opt_stats.mean), 1e3 * acc.timings.total()});
    } catch (const std::exception& e) {
      std::cerr << "[harness] test instance " << i << " dropped: " << e.what() << "\n";
    }
  }
  return rows;
}

}  // namespace sddp
