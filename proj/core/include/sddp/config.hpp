#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sddp/engine.hpp"
#include "sddp/environments.hpp"
#include "sddp/learning.hpp"

namespace sddp {

// Minimal INI reader: [section] headers, key = value lines, full-line # or ;
// comments. Lookups are fallback-based so struct defaults stay the single
// source of truth; every key must be consumed, so a typo in a config file
// fails loudly instead of silently keeping a default.
class IniFile {
 public:
  static IniFile parse(const std::string& text);
  static IniFile load(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;

  std::string get_string(const std::string& section, const std::string& key,
                         std::string fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  int get_int(const std::string& section, const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& section, const std::string& key,
                        std::uint64_t fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  // One number collapses the range to a point; two give lo and hi.
  Range get_range(const std::string& section, const std::string& key, Range fallback) const;
  std::vector<double> get_list(const std::string& section, const std::string& key,
                               std::vector<double> fallback) const;

  // Throws if any key was never read, naming the leftovers.
  void require_all_consumed() const;

 private:
  std::map<std::string, std::map<std::string, std::string>> values_;
  mutable std::set<std::string> consumed_;

  const std::string* find(const std::string& section, const std::string& key) const;
};

// Synthetic AR price family for generated portfolio instances. All assets
// share the per-lag coefficients and noise scale; per-instance variation
// comes from the sampled start prices and a short simulated drift of the
// shared process.
struct PortfolioFamily {
  int assets = 4;
  int horizon = 5;
  int order = 2;
  std::vector<double> phi{0.7, 0.3};
  double sigma = 0.4;
  Range start_price{10.0, 14.0};
  double spread = 1.001;
  double price_floor = 1e-3;
  double initial_cash = 100.0;
  double initial_holdings = 0.0;
  int drift_steps = 8;

  // Shared parameters with the context window left empty.
  PortfolioConfig base() const;
  void validate() const;
};

enum class EnvFamily { Inventory, Portfolio };

struct ExperimentConfig {
  std::string name = "experiment";
  EnvFamily family = EnvFamily::Inventory;
  InventoryConfig inventory;
  PortfolioFamily portfolio;

  int train_instances = 200;  // one meta-training epoch per instance
  int test_instances = 30;
  int eval_trajectories = 50;
  int refine_iterations = 10;
  std::string output_dir = "out";
  std::uint64_t master_seed = 1;

  SddpOptions sddp;  // per-solve seeds are derived from master_seed
  TrainConfig train;

  void validate() const;
};

ExperimentConfig experiment_from_ini(const IniFile& ini);
ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace sddp
