#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sddp/engine.hpp"
#include "sddp/environments.hpp"
#include "sddp/inference.hpp"
#include "sddp/learning.hpp"
#include "sddp/serialize.hpp"

using namespace sddp;
namespace fs = std::filesystem;

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// == would conflate -0.0 with 0.0; round trips must keep the exact bits.
bool bits_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool bits_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return a.size() == 0 ||
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

bool bits_equal(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) return false;
  return a.size() == 0 ||
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string temp_file(const char* name) {
  return (fs::temp_directory_path() / name).string();
}

void check_instances_equal(const ProblemInstance& a, const ProblemInstance& b) {
  REQUIRE(a.T == b.T);
  CHECK(a.id == b.id);
  REQUIRE(a.stages.size() == b.stages.size());
  for (std::size_t i = 0; i < a.stages.size(); ++i) {
    const StageTemplate& s = a.stages[i];
    const StageTemplate& l = b.stages[i];
    CHECK(bits_equal(s.base_c, l.base_c));
    CHECK(bits_equal(s.base_A, l.base_A));
    CHECK(bits_equal(s.base_B, l.base_B));
    CHECK(bits_equal(s.base_b, l.base_b));
    CHECK(bits_equal(s.base_A_ge, l.base_A_ge));
    CHECK(bits_equal(s.base_b_ge, l.base_b_ge));
    CHECK(s.free_vars == l.free_vars);
    REQUIRE(s.injections.size() == l.injections.size());
    for (std::size_t k = 0; k < s.injections.size(); ++k) {
      CHECK(s.injections[k].target == l.injections[k].target);
      CHECK(s.injections[k].row == l.injections[k].row);
      CHECK(s.injections[k].col == l.injections[k].col);
      CHECK(s.injections[k].xi_index == l.injections[k].xi_index);
      CHECK(bits_equal(s.injections[k].scale, l.injections[k].scale));
      CHECK(bits_equal(s.injections[k].offset, l.injections[k].offset));
    }
  }
  CHECK(a.dist.stationary == b.dist.stationary);
  REQUIRE(a.dist.stages.size() == b.dist.stages.size());
  for (std::size_t i = 0; i < a.dist.stages.size(); ++i) {
    CHECK(bits_equal(a.dist.stages[i].mean, b.dist.stages[i].mean));
    CHECK(bits_equal(a.dist.stages[i].stddev, b.dist.stages[i].stddev));
    CHECK(bits_equal(a.dist.stages[i].floor, b.dist.stages[i].floor));
  }
  CHECK(bits_equal(a.xi_1, b.xi_1));
  CHECK(bits_equal(a.x0, b.x0));
  CHECK(bits_equal(a.value_floors, b.value_floors));
  REQUIRE(a.context.size() == b.context.size());
  for (std::size_t i = 0; i < a.context.size(); ++i) CHECK(bits_equal(a.context[i], b.context[i]));
}

ProblemInstance small_inventory(std::uint64_t seed) {
  InventoryConfig cfg;
  cfg.S = 1;
  cfg.I = 1;
  cfg.C = 2;
  cfg.T = 3;
  return make_inventory_instance(cfg, seed);
}

ProblemInstance two_asset_portfolio() {
  PortfolioConfig cfg;
  cfg.I = 2;
  cfg.T = 4;
  cfg.order = 2;
  cfg.ar.phi = (Eigen::MatrixXd(2, 2) << 0.6, 0.3, 0.5, 0.2).finished();
  cfg.ar.sigma = (Eigen::VectorXd(2) << 0.4, 0.3).finished();
  cfg.spread = 1.002;
  cfg.initial_cash = 50.0;
  cfg.initial_holdings = (Eigen::VectorXd(2) << 1.0, 0.0).finished();
  cfg.context_window = (Eigen::MatrixXd(2, 2) << 10.0, 12.0, 11.0, 12.5).finished();
  return make_portfolio_instance(cfg);
}

}  // namespace

TEST_CASE("instance files round trip bit for bit") {
  for (const ProblemInstance& inst :
       {make_inventory_instance(InventoryConfig{}, 42), two_asset_portfolio()}) {
    const std::string text = instance_to_json(inst);
    const ProblemInstance parsed = instance_from_json(text);
    check_instances_equal(inst, parsed);
    CHECK(instance_to_json(parsed) == text);

    const std::string path = temp_file("sddp_roundtrip_instance.json");
    save_instance(path, inst);
    const ProblemInstance loaded = load_instance(path);
    check_instances_equal(inst, loaded);
    CHECK(slurp(path) == text + "\n");
  }
}

TEST_CASE("awkward doubles survive the decimal codec") {
  ProblemInstance inst = small_inventory(7);
  inst.stages[0].base_c(0) = 0.1;
  inst.stages[0].base_c(1) = 1.0 / 3.0;
  inst.stages[1].base_b(0) = -0.0;
  inst.stages[1].base_b_ge(0) = 1e-300;
  inst.stages[2].injections[0].scale = 5e-324;  // smallest denormal
  inst.stages[2].injections[0].offset = 1.7976931348623157e308;
  inst.value_floors(0) = -1.2345678901234567e8;
  inst.dist.stages[0].floor(0) = kNegInf;  // untruncated component, encoded as null

  const std::string text = instance_to_json(inst);
  const ProblemInstance parsed = instance_from_json(text);
  check_instances_equal(inst, parsed);
  CHECK(std::isinf(parsed.dist.stages[0].floor(0)));
  CHECK(parsed.dist.stages[0].floor(0) < 0.0);
  CHECK(std::signbit(parsed.stages[1].base_b(0)));
}

TEST_CASE("instance parsing rejects malformed documents") {
  const ProblemInstance inst = small_inventory(3);
  const std::string text = instance_to_json(inst);

  CHECK_THROWS_AS(instance_from_json("not json"), std::runtime_error);
  CHECK_THROWS_AS(instance_from_json("{}"), std::runtime_error);

  std::string wrong_format = text;
  REQUIRE(wrong_format.find("sddp-instance") != std::string::npos);
  wrong_format.replace(wrong_format.find("sddp-instance"), 13, "sddp-whatever");
  CHECK_THROWS_AS(instance_from_json(wrong_format), std::runtime_error);

  std::string wrong_version = text;
  REQUIRE(wrong_version.find("\"version\": 1") != std::string::npos);
  wrong_version.replace(wrong_version.find("\"version\": 1"), 12, "\"version\": 3");
  CHECK_THROWS_AS(instance_from_json(wrong_version), std::runtime_error);

  std::string bad_target = text;
  REQUIRE(bad_target.find("\"target\": \"cost\"") != std::string::npos);
  bad_target.replace(bad_target.find("\"target\": \"cost\""), 16, "\"target\": \"misc\"");
  CHECK_THROWS_AS(instance_from_json(bad_target), std::runtime_error);

  // Extra entry in the first matrix payload breaks the rows*cols contract.
  std::string bad_shape = text;
  REQUIRE(bad_shape.find("\"data\": [") != std::string::npos);
  bad_shape.replace(bad_shape.find("\"data\": ["), 9, "\"data\": [7,");
  CHECK_THROWS_AS(instance_from_json(bad_shape), std::runtime_error);

  // Structurally sound JSON with inconsistent dimensions fails validation.
  std::string bad_horizon = text;
  REQUIRE(bad_horizon.find("\"T\": 3") != std::string::npos);
  bad_horizon.replace(bad_horizon.find("\"T\": 3"), 6, "\"T\": 4");
  CHECK_THROWS(instance_from_json(bad_horizon));

  CHECK_THROWS_AS(load_instance(temp_file("sddp_does_not_exist.json")), std::runtime_error);
}

TEST_CASE("dataset files round trip exactly") {
  SddpOptions opts;
  opts.n_scenarios = 3;
  opts.n_incumbents = 2;
  opts.ub_trajectories = 10;
  opts.ub_interval = 5;
  opts.seed = 11;
  opts.stopping.max_iterations = 12;

  std::vector<TrainingRecord> records;
  for (std::uint64_t seed : {1ull, 2ull}) {
    const ProblemInstance inst = small_inventory(seed);
    records.push_back(make_training_record(inst, sddp_solve(inst, opts)));
  }

  const std::string path = temp_file("sddp_roundtrip_dataset.jsonl");
  save_dataset(path, records);
  const std::vector<TrainingRecord> loaded = load_dataset(path);
  REQUIRE(loaded.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const TrainingRecord& r = records[i];
    const TrainingRecord& l = loaded[i];
    CHECK(r.instance_id == l.instance_id);
    CHECK(r.iterations == l.iterations);
    CHECK(bits_equal(r.lower_bound, l.lower_bound));
    CHECK(bits_equal(r.upper_mean, l.upper_mean));
    REQUIRE(r.context.size() == l.context.size());
    for (std::size_t k = 0; k < r.context.size(); ++k) CHECK(bits_equal(r.context[k], l.context[k]));
    REQUIRE(r.cuts.size() == l.cuts.size());
    for (std::size_t s = 0; s < r.cuts.size(); ++s) {
      REQUIRE(r.cuts[s].size() == l.cuts[s].size());
      for (std::size_t k = 0; k < r.cuts[s].size(); ++k) {
        CHECK(bits_equal(r.cuts[s][k].beta, l.cuts[s][k].beta));
        CHECK(bits_equal(r.cuts[s][k].alpha, l.cuts[s][k].alpha));
      }
    }
    REQUIRE(r.actions.size() == l.actions.size());
    for (std::size_t j = 0; j < r.actions.size(); ++j) {
      REQUIRE(r.actions[j].size() == l.actions[j].size());
      for (std::size_t t = 0; t < r.actions[j].size(); ++t) {
        CHECK(bits_equal(r.actions[j][t], l.actions[j][t]));
      }
    }
  }

  // The header's record count guards against silent truncation.
  std::string text = slurp(path);
  const std::size_t first = text.find('\n');
  const std::size_t second = text.find('\n', first + 1);
  REQUIRE(second != std::string::npos);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text.substr(0, second + 1);
  }
  CHECK_THROWS_AS(load_dataset(path), std::runtime_error);
}

TEST_CASE("empty datasets are just a header") {
  const std::string path = temp_file("sddp_empty_dataset.jsonl");
  save_dataset(path, {});
  CHECK(load_dataset(path).empty());

  // A record line without the header is not a dataset file.
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "{\"instance_id\":\"x\"}\n";
  }
  CHECK_THROWS_AS(load_dataset(path), std::runtime_error);
}

TEST_CASE("checkpoint files round trip bit for bit") {
  TrainConfig cfg;
  cfg.K = 4;
  cfg.embed = 8;
  cfg.hidden = 16;
  cfg.learning_rate = 3e-4;
  cfg.weight_decay = 1e-5;
  cfg.emd_window = 5;
  cfg.steps_per_epoch = 7;
  cfg.batch_size = 3;
  cfg.anneal_max = 0.25;
  cfg.projection_rank = 2;
  cfg.projection_lr = 0.125;
  cfg.exact_projection = true;
  cfg.validation_count = 2;
  cfg.standardization_probes = 4;

  Checkpoint ckpt;
  ckpt.model = MaxAffinePredictor::create(3, 5, cfg.K, 3, cfg, 99);
  ckpt.model.ctx_shift = (Eigen::VectorXd(3) << -1.0, 0.75, 2.5).finished();
  ckpt.model.ctx_scale = (Eigen::VectorXd(3) << 0.5, 2.0, 7.25).finished();
  ckpt.G = random_orthonormal(5, 2, 7);
  ckpt.config = cfg;

  const std::string path = temp_file("sddp_roundtrip_checkpoint.json");
  save_checkpoint(path, ckpt);
  const Checkpoint loaded = load_checkpoint(path);

  CHECK(loaded.model.ctx_dim == 3);
  CHECK(loaded.model.action_dim == 5);
  CHECK(loaded.model.K == 4);
  CHECK(loaded.model.n_stages == 3);
  CHECK(bits_equal(loaded.model.ctx_shift, ckpt.model.ctx_shift));
  CHECK(bits_equal(loaded.model.ctx_scale, ckpt.model.ctx_scale));
  CHECK(bits_equal(loaded.model.Wp, ckpt.model.Wp));
  CHECK(bits_equal(loaded.model.bp, ckpt.model.bp));
  CHECK(bits_equal(loaded.model.TE, ckpt.model.TE));
  CHECK(bits_equal(loaded.model.W1, ckpt.model.W1));
  CHECK(bits_equal(loaded.model.b1, ckpt.model.b1));
  CHECK(bits_equal(loaded.model.W2, ckpt.model.W2));
  CHECK(bits_equal(loaded.model.b2, ckpt.model.b2));
  CHECK(bits_equal(loaded.model.W3, ckpt.model.W3));
  CHECK(bits_equal(loaded.model.b3, ckpt.model.b3));
  CHECK(bits_equal(loaded.G, ckpt.G));

  CHECK(loaded.config.K == cfg.K);
  CHECK(loaded.config.embed == cfg.embed);
  CHECK(loaded.config.hidden == cfg.hidden);
  CHECK(bits_equal(loaded.config.learning_rate, cfg.learning_rate));
  CHECK(bits_equal(loaded.config.weight_decay, cfg.weight_decay));
  CHECK(loaded.config.emd_window == cfg.emd_window);
  CHECK(loaded.config.steps_per_epoch == cfg.steps_per_epoch);
  CHECK(loaded.config.batch_size == cfg.batch_size);
  CHECK(bits_equal(loaded.config.anneal_max, cfg.anneal_max));
  CHECK(loaded.config.projection_rank == cfg.projection_rank);
  CHECK(bits_equal(loaded.config.projection_lr, cfg.projection_lr));
  CHECK(loaded.config.exact_projection == cfg.exact_projection);
  CHECK(loaded.config.validation_count == cfg.validation_count);
  CHECK(loaded.config.standardization_probes == cfg.standardization_probes);

  // The reloaded predictor is the same function.
  const Eigen::VectorXd u = (Eigen::VectorXd(3) << 0.3, -1.7, 2.2).finished();
  for (int t = 2; t <= 4; ++t) {
    const ValueFunctionApprox a = predict_value_function(ckpt.model, u, t);
    const ValueFunctionApprox b = predict_value_function(loaded.model, u, t);
    REQUIRE(a.cuts().size() == b.cuts().size());
    for (std::size_t k = 0; k < a.cuts().size(); ++k) {
      CHECK(bits_equal(a.cuts()[k].beta, b.cuts()[k].beta));
      CHECK(bits_equal(a.cuts()[k].alpha, b.cuts()[k].alpha));
    }
  }

  // Declared dimensions must match the stored tensor shapes.
  std::string text = slurp(path);
  REQUIRE(text.find("\"K\": 4") != std::string::npos);
  text.replace(text.find("\"K\": 4"), 6, "\"K\": 6");
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
  }
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
}

TEST_CASE("bound history csv leaves unchecked iterations blank") {
  const std::vector<BoundRecord> history = {{0, 1.5, kNan, kNan}, {9, 2.25, 3.5, 0.25}};
  const std::string path = temp_file("sddp_bounds.csv");
  write_bound_history_csv(path, history);
  CHECK(slurp(path) ==
        "iteration,lower_bound,upper_mean,upper_stderr\n"
        "0,1.5,,\n"
        "9,2.25,3.5,0.25\n");
}

TEST_CASE("inference csv reports the timing breakdown in milliseconds") {
  InferenceResult fast;
  fast.mode = InferenceMode::Fast;
  fast.instance_id = "demo-1";
  fast.stats.mean = 12.5;
  fast.stats.stddev = 0.5;
  fast.timings.prediction = 0.25;
  fast.timings.projection = 0.125;
  fast.timings.lp = 2.0;
  fast.dropped = 1;

  InferenceResult accurate;
  accurate.mode = InferenceMode::Accurate;
  accurate.instance_id = "demo-1";
  accurate.stats.mean = 11.25;
  accurate.stats.stddev = 0.75;
  accurate.timings.prediction = 0.25;
  accurate.timings.lp = 1.5;
  accurate.timings.refinement = 4.0;

  const std::string path = temp_file("sddp_inference.csv");
  write_inference_csv(path, {fast, accurate});
  CHECK(slurp(path) ==
        "instance_id,mode,mean_cost,stddev,prediction_ms,projection_ms,lp_ms,refinement_ms,"
        "total_ms,dropped\n"
        "demo-1,fast,12.5,0.5,250,125,2000,0,2375,1\n"
        "demo-1,accurate,11.25,0.75,250,0,1500,4000,5750,0\n");
  CHECK(std::string(to_string(InferenceMode::Fast)) == "fast");
  CHECK(std::string(to_string(InferenceMode::Accurate)) == "accurate");
}
