#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sddp/config.hpp"
#include "sddp/engine.hpp"
#include "sddp/inference.hpp"
#include "sddp/learning.hpp"
#include "sddp/model.hpp"

namespace sddp {

struct MetricRow {
  std::string instance_id;
  std::string method;
  double mean_cost = 0.0;
  double stddev = 0.0;
  double error_ratio = 0.0;  // vs the sddp-optimal row of the same instance
  double wall_ms = 0.0;      // solver or inference time only, never I/O
};

// (candidate - optimal) / |optimal|; positive means worse, for minimization.
double error_ratio(double candidate_mean, double optimal_mean);

// Deterministic columns only (instance_id,method,mean_cost,stddev,
// error_ratio): rerunning a seed must reproduce this file bit for bit, so
// wall-times go to the separate writers below.
void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows);

// instance_id,method,wall_ms.
void write_walltimes_csv(const std::string& path, const std::vector<MetricRow>& rows);

// All six columns, for the timing report.
void write_timing_csv(const std::string& path, const std::vector<MetricRow>& rows);

// seed -> instance generator for the configured family. Inventory seeds feed
// the generator directly; portfolio seeds pick start prices and drift the
// shared AR process, with the seed appended to the instance id.
InstanceSampler make_instance_sampler(const ExperimentConfig& cfg);

// The instance at the meta-distribution means: every sampled parameter range
// collapsed to its midpoint. The scenario distribution keeps its width.
ProblemInstance make_mean_instance(const ExperimentConfig& cfg);

struct ExperimentResult {
  std::vector<MetricRow> metrics;
  MetaTrainResult trained;
  std::string mean_instance_id;
  int failed_test_instances = 0;
};

// The full pipeline: meta-train on train_instances freshly sampled instances,
// solve the mean-parameter baseline once, then score sddp-optimal, sddp-mean,
// fast and accurate on test_instances held-out instances under common random
// numbers. Writes metrics.csv, walltimes.csv, per-instance bound histories,
// dataset.jsonl, checkpoint.json and manifest.json under cfg.output_dir. A
// test instance whose evaluation throws is logged to stderr, dropped whole
// (so every surviving instance has all four rows), and counted. Bit
// reproducible from cfg.master_seed except walltimes.csv.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Fast-inference quality per model capacity: retrains with each K and emits
// "fast-K<k>" rows next to shared sddp-optimal rows. Duplicate entries are
// dropped with a warning.
std::vector<MetricRow> sweep_num_cuts(const ExperimentConfig& cfg, std::vector<int> k_list);

// Fast-inference quality per projection rank: retrains with each p and emits
// "fast-p<p>" rows next to shared sddp-optimal and sddp-mean rows. Duplicate
// entries are dropped with a warning.
std::vector<MetricRow> sweep_projection_rank(const ExperimentConfig& cfg,
                                             std::vector<int> p_list);

// Wall-time versus quality on the test split: "sddp-<n>" rows for each
// iteration budget, a "forward-pass" row timing one multi-trajectory forward
// sweep under the converged value functions (quality fields NaN), plus
// sddp-mean, fast and accurate rows. Trains one model first.
std::vector<MetricRow> timing_report(const ExperimentConfig& cfg,
                                     const std::vector<int>& sddp_iters = {1, 2, 5, 10, 20});

}  // namespace sddp
