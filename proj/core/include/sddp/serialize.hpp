#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "sddp/engine.hpp"
#include "sddp/inference.hpp"
#include "sddp/learning.hpp"
#include "sddp/model.hpp"

namespace sddp {

// Persistence for everything the toolkit writes to disk. Documents are JSON
// with a format tag and version; doubles serialize as shortest round-trip
// decimals, so every load reproduces the saved object bit for bit. Datasets
// are line-delimited (one record per line after a header line). CSV schemas
// are fixed by the header row each writer emits and documented in the README.

std::string instance_to_json(const ProblemInstance& inst);
ProblemInstance instance_from_json(const std::string& text);

void save_instance(const std::string& path, const ProblemInstance& inst);
ProblemInstance load_instance(const std::string& path);

void save_dataset(const std::string& path, const std::vector<TrainingRecord>& records);
std::vector<TrainingRecord> load_dataset(const std::string& path);

// A trained artifact in one file: predictor tensors with their shapes, the
// shared projection basis (0x0 when none was learned), the standardization
// constants, and the training config.
struct Checkpoint {
  MaxAffinePredictor model;
  Eigen::MatrixXd G;
  TrainConfig config;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// iteration,lower_bound,upper_mean,upper_stderr; iterations without an upper
// bound estimate leave those two cells empty.
void write_bound_history_csv(const std::string& path, const std::vector<BoundRecord>& history);

// instance_id,mode,mean_cost,stddev,prediction_ms,projection_ms,lp_ms,
// refinement_ms,total_ms,dropped. Wall-times in milliseconds.
void write_inference_csv(const std::string& path, const std::vector<InferenceResult>& results);

const char* to_string(InferenceMode mode);

// Shortest decimal that parses back to the same double ("0.1", "2375",
// "5e-324"); what every CSV cell and JSON number here uses.
std::string format_double(double v);

}  // namespace sddp
