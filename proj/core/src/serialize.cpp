#include "sddp/serialize.hpp"

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <utility>

#include <json.hpp>

namespace sddp {
namespace {

using json = nlohmann::json;

// JSON has no encoding for non-finite numbers, so any that slip in would
// silently turn into null. Reject them at the door instead.
void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw std::invalid_argument(what + " is not finite");
}

json vec_json(const Eigen::VectorXd& v, const std::string& what) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    require_finite(v(i), what);
    arr.push_back(v(i));
  }
  return arr;
}

Eigen::VectorXd vec_from(const json& j, const std::string& what) {
  if (!j.is_array()) throw std::runtime_error(what + ": expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  Eigen::Index i = 0;
  for (const json& cell : j) v(i++) = cell.get<double>();
  return v;
}

json mat_json(const Eigen::MatrixXd& m, const std::string& what) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      require_finite(m(r, c), what);
      data.push_back(m(r, c));
    }
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd mat_from(const json& j, const std::string& what) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const json& data = j.at("data");
  if (rows < 0 || cols < 0 || !data.is_array() ||
      static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw std::runtime_error(what + ": data length does not match rows*cols");
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
  }
  return m;
}

// floor(i) of -inf means untruncated; serialized as null.
json floor_json(const Eigen::VectorXd& f) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    if (std::isinf(f(i)) && f(i) < 0.0) {
      arr.push_back(nullptr);
    } else {
      require_finite(f(i), "distribution floor");
      arr.push_back(f(i));
    }
  }
  return arr;
}

Eigen::VectorXd floor_from(const json& j) {
  if (!j.is_array()) throw std::runtime_error("distribution floor: expected an array");
  Eigen::VectorXd f(static_cast<Eigen::Index>(j.size()));
  Eigen::Index i = 0;
  for (const json& cell : j) {
    f(i++) = cell.is_null() ? -std::numeric_limits<double>::infinity() : cell.get<double>();
  }
  return f;
}

const char* target_name(XiTarget t) {
  switch (t) {
    case XiTarget::Cost: return "cost";
    case XiTarget::RhsEq: return "rhs_eq";
    case XiTarget::RhsGe: return "rhs_ge";
    case XiTarget::MatEq: return "mat_eq";
    case XiTarget::MatGe: return "mat_ge";
  }
  throw std::logic_error("unhandled injection target");
}

XiTarget target_from(const std::string& s) {
  if (s == "cost") return XiTarget::Cost;
  if (s == "rhs_eq") return XiTarget::RhsEq;
  if (s == "rhs_ge") return XiTarget::RhsGe;
  if (s == "mat_eq") return XiTarget::MatEq;
  if (s == "mat_ge") return XiTarget::MatGe;
  throw std::runtime_error("unknown injection target: " + s);
}

json stage_json(const StageTemplate& s, int t) {
  const std::string where = "stage " + std::to_string(t);
  json inj = json::array();
  for (const XiBinding& b : s.injections) {
    require_finite(b.scale, where + " injection scale");
    require_finite(b.offset, where + " injection offset");
    inj.push_back(json{{"target", target_name(b.target)},
                       {"row", b.row},
                       {"col", b.col},
                       {"xi_index", b.xi_index},
                       {"scale", b.scale},
                       {"offset", b.offset}});
  }
  return json{{"c", vec_json(s.base_c, where + " c")},
              {"A", mat_json(s.base_A, where + " A")},
              {"B", mat_json(s.base_B, where + " B")},
              {"b", vec_json(s.base_b, where + " b")},
              {"A_ge", mat_json(s.base_A_ge, where + " A_ge")},
              {"b_ge", vec_json(s.base_b_ge, where + " b_ge")},
              {"injections", std::move(inj)},
              {"free_vars", s.free_vars}};
}

StageTemplate stage_from(const json& j, int t) {
  const std::string where = "stage " + std::to_string(t);
  StageTemplate s;
  s.base_c = vec_from(j.at("c"), where + " c");
  s.base_A = mat_from(j.at("A"), where + " A");
  s.base_B = mat_from(j.at("B"), where + " B");
  s.base_b = vec_from(j.at("b"), where + " b");
  s.base_A_ge = mat_from(j.at("A_ge"), where + " A_ge");
  s.base_b_ge = vec_from(j.at("b_ge"), where + " b_ge");
  s.free_vars = j.at("free_vars").get<bool>();
  for (const json& jb : j.at("injections")) {
    XiBinding b;
    b.target = target_from(jb.at("target").get<std::string>());
    b.row = jb.at("row").get<int>();
    b.col = jb.at("col").get<int>();
    b.xi_index = jb.at("xi_index").get<int>();
    b.scale = jb.at("scale").get<double>();
    b.offset = jb.at("offset").get<double>();
    s.injections.push_back(b);
  }
  return s;
}

json dist_json(const ScenarioDistribution& d) {
  json stages = json::array();
  for (const StageDistribution& s : d.stages) {
    stages.push_back(json{{"mean", vec_json(s.mean, "distribution mean")},
                          {"stddev", vec_json(s.stddev, "distribution stddev")},
                          {"floor", floor_json(s.floor)}});
  }
  return json{{"stationary", d.stationary}, {"stages", std::move(stages)}};
}

ScenarioDistribution dist_from(const json& j) {
  ScenarioDistribution d;
  d.stationary = j.at("stationary").get<bool>();
  for (const json& js : j.at("stages")) {
    StageDistribution s;
    s.mean = vec_from(js.at("mean"), "distribution mean");
    s.stddev = vec_from(js.at("stddev"), "distribution stddev");
    s.floor = floor_from(js.at("floor"));
    d.stages.push_back(std::move(s));
  }
  return d;
}

// Parses one document and checks its format tag and version before any field
// access, so stale or foreign files fail with a clear message.
json parse_document(const std::string& text, const char* format, int version,
                    const std::string& where) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(where + ": " + e.what());
  }
  if (!doc.is_object() || doc.value("format", std::string{}) != format) {
    throw std::runtime_error(where + ": not a " + format + " document");
  }
  const int v = doc.value("version", -1);
  if (v != version) {
    throw std::runtime_error(where + ": unsupported " + std::string(format) + " version " +
                             std::to_string(v));
  }
  return doc;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path);
}

json record_json(const TrainingRecord& r) {
  require_finite(r.lower_bound, "record lower_bound");
  require_finite(r.upper_mean, "record upper_mean");
  json ctx = json::array();
  for (const Eigen::VectorXd& u : r.context) ctx.push_back(vec_json(u, "record context"));
  json cuts = json::array();
  for (const std::vector<Cut>& stage_cuts : r.cuts) {
    json arr = json::array();
    for (const Cut& c : stage_cuts) {
      require_finite(c.alpha, "cut alpha");
      arr.push_back(json{{"beta", vec_json(c.beta, "cut beta")}, {"alpha", c.alpha}});
    }
    cuts.push_back(std::move(arr));
  }
  json actions = json::array();
  for (const std::vector<Eigen::VectorXd>& traj : r.actions) {
    json arr = json::array();
    for (const Eigen::VectorXd& x : traj) arr.push_back(vec_json(x, "record action"));
    actions.push_back(std::move(arr));
  }
  return json{{"instance_id", r.instance_id},
              {"context", std::move(ctx)},
              {"cuts", std::move(cuts)},
              {"actions", std::move(actions)},
              {"iterations", r.iterations},
              {"lower_bound", r.lower_bound},
              {"upper_mean", r.upper_mean}};
}

TrainingRecord record_from(const json& j) {
  TrainingRecord r;
  r.instance_id = j.at("instance_id").get<std::string>();
  for (const json& ju : j.at("context")) r.context.push_back(vec_from(ju, "record context"));
  for (const json& js : j.at("cuts")) {
    std::vector<Cut> stage_cuts;
    for (const json& jc : js) {
      Cut c;
      c.beta = vec_from(jc.at("beta"), "cut beta");
      c.alpha = jc.at("alpha").get<double>();
      stage_cuts.push_back(std::move(c));
    }
    r.cuts.push_back(std::move(stage_cuts));
  }
  for (const json& jt : j.at("actions")) {
    std::vector<Eigen::VectorXd> traj;
    for (const json& jx : jt) traj.push_back(vec_from(jx, "record action"));
    r.actions.push_back(std::move(traj));
  }
  r.iterations = j.at("iterations").get<int>();
  r.lower_bound = j.at("lower_bound").get<double>();
  r.upper_mean = j.at("upper_mean").get<double>();
  return r;
}

json config_json(const TrainConfig& c) {
  return json{{"K", c.K},
              {"embed", c.embed},
              {"hidden", c.hidden},
              {"learning_rate", c.learning_rate},
              {"weight_decay", c.weight_decay},
              {"emd_window", c.emd_window},
              {"steps_per_epoch", c.steps_per_epoch},
              {"batch_size", c.batch_size},
              {"anneal_max", c.anneal_max},
              {"projection_rank", c.projection_rank},
              {"projection_lr", c.projection_lr},
              {"exact_projection", c.exact_projection},
              {"validation_count", c.validation_count},
              {"standardization_probes", c.standardization_probes}};
}

TrainConfig config_from(const json& j) {
  TrainConfig c;
  c.K = j.at("K").get<int>();
  c.embed = j.at("embed").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.emd_window = j.at("emd_window").get<int>();
  c.steps_per_epoch = j.at("steps_per_epoch").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.anneal_max = j.at("anneal_max").get<double>();
  c.projection_rank = j.at("projection_rank").get<int>();
  c.projection_lr = j.at("projection_lr").get<double>();
  c.exact_projection = j.at("exact_projection").get<bool>();
  c.validation_count = j.at("validation_count").get<int>();
  c.standardization_probes = j.at("standardization_probes").get<int>();
  c.validate();
  return c;
}

void check_shape(const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols,
                 const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw std::runtime_error("checkpoint tensor " + std::string(name) + " has shape " +
                             std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                             ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

void check_size(const Eigen::VectorXd& v, Eigen::Index n, const char* name) {
  if (v.size() != n) {
    throw std::runtime_error("checkpoint tensor " + std::string(name) + " has length " +
                             std::to_string(v.size()) + ", expected " + std::to_string(n));
  }
}

}  // namespace

std::string instance_to_json(const ProblemInstance& inst) {
  inst.validate();
  json stages = json::array();
  for (int t = 1; t <= inst.T; ++t) stages.push_back(stage_json(inst.stages[t - 1], t));
  json ctx = json::array();
  for (const Eigen::VectorXd& u : inst.context) ctx.push_back(vec_json(u, "context"));
  const json doc{{"format", "sddp-instance"},
                 {"version", 1},
                 {"id", inst.id},
                 {"T", inst.T},
                 {"stages", std::move(stages)},
                 {"dist", dist_json(inst.dist)},
                 {"xi_1", vec_json(inst.xi_1, "xi_1")},
                 {"context", std::move(ctx)},
                 {"x0", vec_json(inst.x0, "x0")},
                 {"value_floors", vec_json(inst.value_floors, "value_floors")}};
  return doc.dump(2);
}

ProblemInstance instance_from_json(const std::string& text) {
  const json doc = parse_document(text, "sddp-instance", 1, "instance");
  try {
    ProblemInstance inst;
    inst.id = doc.at("id").get<std::string>();
    inst.T = doc.at("T").get<int>();
    int t = 1;
    for (const json& js : doc.at("stages")) inst.stages.push_back(stage_from(js, t++));
    inst.dist = dist_from(doc.at("dist"));
    inst.xi_1 = vec_from(doc.at("xi_1"), "xi_1");
    for (const json& ju : doc.at("context")) inst.context.push_back(vec_from(ju, "context"));
    inst.x0 = vec_from(doc.at("x0"), "x0");
    inst.value_floors = vec_from(doc.at("value_floors"), "value_floors");
    inst.validate();
    return inst;
  } catch (const json::exception& e) {
    throw std::runtime_error("instance: " + std::string(e.what()));
  }
}

void save_instance(const std::string& path, const ProblemInstance& inst) {
  write_file(path, instance_to_json(inst) + "\n");
}

ProblemInstance load_instance(const std::string& path) {
  try {
    return instance_from_json(read_file(path));
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void save_dataset(const std::string& path, const std::vector<TrainingRecord>& records) {
  std::ostringstream out;
  out << json{{"format", "sddp-dataset"},
              {"version", 1},
              {"count", records.size()}}
             .dump()
      << '\n';
  for (const TrainingRecord& r : records) out << record_json(r).dump() << '\n';
  write_file(path, out.str());
}

std::vector<TrainingRecord> load_dataset(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty dataset file");
  const json header = parse_document(line, "sddp-dataset", 1, path);
  const auto count = header.at("count").get<std::size_t>();

  std::vector<TrainingRecord> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(record_from(json::parse(line)));
    } catch (const json::exception& e) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (records.size() != count) {
    throw std::runtime_error(path + ": header promises " + std::to_string(count) +
                             " records, file holds " + std::to_string(records.size()));
  }
  return records;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  ckpt.config.validate();
  const MaxAffinePredictor& m = ckpt.model;
  json tensors{{"Wp", mat_json(m.Wp, "Wp")}, {"bp", vec_json(m.bp, "bp")},
               {"TE", mat_json(m.TE, "TE")}, {"W1", mat_json(m.W1, "W1")},
               {"b1", vec_json(m.b1, "b1")}, {"W2", mat_json(m.W2, "W2")},
               {"b2", vec_json(m.b2, "b2")}, {"W3", mat_json(m.W3, "W3")},
               {"b3", vec_json(m.b3, "b3")}};
  const json doc{{"format", "sddp-checkpoint"},
                 {"version", 1},
                 {"ctx_dim", m.ctx_dim},
                 {"action_dim", m.action_dim},
                 {"K", m.K},
                 {"n_stages", m.n_stages},
                 {"ctx_shift", vec_json(m.ctx_shift, "ctx_shift")},
                 {"ctx_scale", vec_json(m.ctx_scale, "ctx_scale")},
                 {"tensors", std::move(tensors)},
                 {"projection", mat_json(ckpt.G, "projection")},
                 {"config", config_json(ckpt.config)}};
  write_file(path, doc.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
  const json doc = parse_document(read_file(path), "sddp-checkpoint", 1, path);
  try {
    Checkpoint ckpt;
    MaxAffinePredictor& m = ckpt.model;
    m.ctx_dim = doc.at("ctx_dim").get<int>();
    m.action_dim = doc.at("action_dim").get<int>();
    m.K = doc.at("K").get<int>();
    m.n_stages = doc.at("n_stages").get<int>();
    if (m.ctx_dim < 1 || m.action_dim < 1 || m.K < 1 || m.n_stages < 1) {
      throw std::runtime_error("checkpoint dimensions must be positive");
    }
    m.ctx_shift = vec_from(doc.at("ctx_shift"), "ctx_shift");
    m.ctx_scale = vec_from(doc.at("ctx_scale"), "ctx_scale");
    const json& tensors = doc.at("tensors");
    m.Wp = mat_from(tensors.at("Wp"), "Wp");
    m.bp = vec_from(tensors.at("bp"), "bp");
    m.TE = mat_from(tensors.at("TE"), "TE");
    m.W1 = mat_from(tensors.at("W1"), "W1");
    m.b1 = vec_from(tensors.at("b1"), "b1");
    m.W2 = mat_from(tensors.at("W2"), "W2");
    m.b2 = vec_from(tensors.at("b2"), "b2");
    m.W3 = mat_from(tensors.at("W3"), "W3");
    m.b3 = vec_from(tensors.at("b3"), "b3");
    ckpt.G = mat_from(doc.at("projection"), "projection");
    ckpt.config = config_from(doc.at("config"));

    const Eigen::Index embed = m.Wp.rows();
    const Eigen::Index hidden = m.W1.rows();
    const Eigen::Index head = static_cast<Eigen::Index>(m.K) * (m.action_dim + 1);
    check_size(m.ctx_shift, m.ctx_dim, "ctx_shift");
    check_size(m.ctx_scale, m.ctx_dim, "ctx_scale");
    check_shape(m.Wp, embed, m.ctx_dim, "Wp");
    check_size(m.bp, embed, "bp");
    check_shape(m.TE, embed, m.n_stages, "TE");
    check_shape(m.W1, hidden, embed, "W1");
    check_size(m.b1, hidden, "b1");
    check_shape(m.W2, hidden, hidden, "W2");
    check_size(m.b2, hidden, "b2");
    check_shape(m.W3, head, hidden, "W3");
    check_size(m.b3, head, "b3");
    return ckpt;
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void write_bound_history_csv(const std::string& path, const std::vector<BoundRecord>& history) {
  std::ostringstream out;
  out << "iteration,lower_bound,upper_mean,upper_stderr\n";
  for (const BoundRecord& r : history) {
    out << r.iteration << ',' << format_double(r.lower_bound) << ',';
    if (!std::isnan(r.upper_mean)) out << format_double(r.upper_mean);
    out << ',';
    if (!std::isnan(r.upper_stderr)) out << format_double(r.upper_stderr);
    out << '\n';
  }
  write_file(path, out.str());
}

void write_inference_csv(const std::string& path, const std::vector<InferenceResult>& results) {
  std::ostringstream out;
  out << "instance_id,mode,mean_cost,stddev,prediction_ms,projection_ms,lp_ms,refinement_ms,"
         "total_ms,dropped\n";
  for (const InferenceResult& r : results) {
    out << r.instance_id << ',' << to_string(r.mode) << ',' << format_double(r.stats.mean) << ','
        << format_double(r.stats.stddev) << ',' << format_double(1e3 * r.timings.prediction) << ','
        << format_double(1e3 * r.timings.projection) << ',' << format_double(1e3 * r.timings.lp) << ','
        << format_double(1e3 * r.timings.refinement) << ',' << format_double(1e3 * r.timings.total())
        << ',' << r.dropped << '\n';
  }
  write_file(path, out.str());
}

const char* to_string(InferenceMode mode) {
  return mode == InferenceMode::Fast ? "fast" : "accurate";
}

// to_chars never overflows 32 bytes for doubles.
std::string format_double(double v) {
  char buf[32];
  const std::to_chars_result res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace sddp
