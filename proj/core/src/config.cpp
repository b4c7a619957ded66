#include "sddp/config.hpp"

#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace sddp {
namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

std::string trim(const std::string& s) {
  const std::size_t first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const std::size_t last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw std::runtime_error(where + ": not a number: '" + s + "'");
  }
  if (used != s.size()) throw std::runtime_error(where + ": trailing junk in '" + s + "'");
  return v;
}

long long parse_integer(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    throw std::runtime_error(where + ": not an integer: '" + s + "'");
  }
  if (used != s.size()) throw std::runtime_error(where + ": trailing junk in '" + s + "'");
  return v;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream ss(s);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

}  // namespace

IniFile IniFile::parse(const std::string& text) {
  IniFile ini;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const std::string where = "config line " + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw std::runtime_error(where + ": malformed section header '" + line + "'");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw std::runtime_error(where + ": empty section name");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(where + ": expected 'key = value', got '" + line + "'");
    }
    if (section.empty()) throw std::runtime_error(where + ": key outside any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw std::runtime_error(where + ": empty key");
    if (!ini.values_[section].emplace(key, value).second) {
      throw std::runtime_error(where + ": duplicate key '" + section + "." + key + "'");
    }
  }
  return ini;
}

IniFile IniFile::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse(buf.str());
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

const std::string* IniFile::find(const std::string& section, const std::string& key) const {
  const auto sec = values_.find(section);
  if (sec == values_.end()) return nullptr;
  const auto kv = sec->second.find(key);
  if (kv == sec->second.end()) return nullptr;
  consumed_.insert(section + "." + key);
  return &kv->second;
}

bool IniFile::has(const std::string& section, const std::string& key) const {
  const auto sec = values_.find(section);
  return sec != values_.end() && sec->second.count(key) > 0;
}

std::string IniFile::get_string(const std::string& section, const std::string& key,
                                std::string fallback) const {
  const std::string* v = find(section, key);
  return v ? *v : std::move(fallback);
}

double IniFile::get_double(const std::string& section, const std::string& key,
                           double fallback) const {
  const std::string* v = find(section, key);
  return v ? parse_double(*v, section + "." + key) : fallback;
}

int IniFile::get_int(const std::string& section, const std::string& key, int fallback) const {
  const std::string* v = find(section, key);
  if (!v) return fallback;
  const long long n = parse_integer(*v, section + "." + key);
  if (n < std::numeric_limits<int>::min() || n > std::numeric_limits<int>::max()) {
    throw std::runtime_error(section + "." + key + ": out of int range: " + *v);
  }
  return static_cast<int>(n);
}

std::uint64_t IniFile::get_u64(const std::string& section, const std::string& key,
                               std::uint64_t fallback) const {
  const std::string* v = find(section, key);
  if (!v) return fallback;
  const std::string where = section + "." + key;
  std::size_t used = 0;
  std::uint64_t n = 0;
  try {
    n = std::stoull(*v, &used);
  } catch (const std::exception&) {
    throw std::runtime_error(where + ": not an unsigned integer: '" + *v + "'");
  }
  if (used != v->size()) throw std::runtime_error(where + ": trailing junk in '" + *v + "'");
  return n;
}

bool IniFile::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  const std::string* v = find(section, key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw std::runtime_error(section + "." + key + ": not a boolean: '" + *v + "'");
}

Range IniFile::get_range(const std::string& section, const std::string& key,
                         Range fallback) const {
  const std::string* v = find(section, key);
  if (!v) return fallback;
  const std::string where = section + "." + key;
  const std::vector<std::string> parts = split_ws(*v);
  if (parts.empty() || parts.size() > 2) {
    throw std::runtime_error(where + ": expected one or two numbers, got '" + *v + "'");
  }
  Range r;
  r.lo = parse_double(parts[0], where);
  r.hi = parts.size() == 2 ? parse_double(parts[1], where) : r.lo;
  if (r.lo > r.hi) throw std::runtime_error(where + ": lo exceeds hi in '" + *v + "'");
  return r;
}

std::vector<double> IniFile::get_list(const std::string& section, const std::string& key,
                                      std::vector<double> fallback) const {
  const std::string* v = find(section, key);
  if (!v) return fallback;
  const std::string where = section + "." + key;
  std::vector<double> out;
  for (const std::string& tok : split_ws(*v)) out.push_back(parse_double(tok, where));
  if (out.empty()) throw std::runtime_error(where + ": empty list");
  return out;
}

void IniFile::require_all_consumed() const {
  std::string leftovers;
  for (const auto& [section, kv] : values_) {
    for (const auto& [key, value] : kv) {
      if (consumed_.count(section + "." + key) == 0) {
        leftovers += (leftovers.empty() ? "" : ", ") + section + "." + key;
      }
    }
  }
  if (!leftovers.empty()) throw std::runtime_error("unknown config keys: " + leftovers);
}

PortfolioConfig PortfolioFamily::base() const {
  PortfolioConfig pc;
  pc.I = assets;
  pc.T = horizon;
  pc.order = order;
  pc.ar.phi = Eigen::MatrixXd(assets, order);
  for (int i = 0; i < assets; ++i) {
    for (int k = 0; k < order; ++k) pc.ar.phi(i, k) = phi[static_cast<std::size_t>(k)];
  }
  pc.ar.sigma = Eigen::VectorXd::Constant(assets, sigma);
  pc.spread = spread;
  pc.price_floor = price_floor;
  pc.initial_cash = initial_cash;
  pc.initial_holdings = Eigen::VectorXd::Constant(assets, initial_holdings);
  return pc;
}

void PortfolioFamily::validate() const {
  require(assets >= 1, "portfolio family needs at least one asset");
  require(horizon >= 2, "portfolio horizon must be at least 2");
  require(order >= 1, "AR order must be positive");
  require(phi.size() == static_cast<std::size_t>(order), "need one AR coefficient per lag");
  require(sigma >= 0.0, "AR noise scale must be nonnegative");
  require(start_price.lo > 0.0 && start_price.lo <= start_price.hi, "invalid start price range");
  require(spread >= 1.0, "spread must be at least 1");
  require(price_floor > 0.0, "price floor must be positive");
  require(initial_cash >= 0.0 && initial_holdings >= 0.0, "negative initial position");
  require(drift_steps >= 0, "drift steps must be nonnegative");
}

void ExperimentConfig::validate() const {
  require(!name.empty(), "experiment name must not be empty");
  require(train_instances >= 1, "need at least one training instance");
  require(test_instances >= 1, "need at least one test instance");
  require(eval_trajectories >= 1, "need at least one evaluation trajectory");
  require(refine_iterations >= 1, "need at least one refinement iteration");
  require(!output_dir.empty(), "output directory must not be empty");
  train.validate();
  if (family == EnvFamily::Inventory) {
    inventory.validate();
  } else {
    portfolio.validate();
  }
}

ExperimentConfig experiment_from_ini(const IniFile& ini) {
  ExperimentConfig cfg;
  cfg.name = ini.get_string("experiment", "name", cfg.name);
  const std::string family = ini.get_string("experiment", "family", "inventory");
  if (family == "inventory") {
    cfg.family = EnvFamily::Inventory;
  } else if (family == "portfolio") {
    cfg.family = EnvFamily::Portfolio;
  } else {
    throw std::runtime_error("experiment.family: unknown family '" + family + "'");
  }
  cfg.train_instances = ini.get_int("experiment", "train_instances", cfg.train_instances);
  cfg.test_instances = ini.get_int("experiment", "test_instances", cfg.test_instances);
  cfg.eval_trajectories = ini.get_int("experiment", "eval_trajectories", cfg.eval_trajectories);
  cfg.refine_iterations = ini.get_int("experiment", "refine_iterations", cfg.refine_iterations);
  cfg.output_dir = ini.get_string("experiment", "output_dir", cfg.output_dir);
  cfg.master_seed = ini.get_u64("experiment", "master_seed", cfg.master_seed);

  SddpOptions& s = cfg.sddp;
  s.n_scenarios = ini.get_int("sddp", "scenarios", s.n_scenarios);
  s.n_incumbents = ini.get_int("sddp", "incumbents", s.n_incumbents);
  s.ub_trajectories = ini.get_int("sddp", "ub_trajectories", s.ub_trajectories);
  s.ub_interval = ini.get_int("sddp", "ub_interval", s.ub_interval);
  s.stopping.gap_rel = ini.get_double("sddp", "gap_rel", s.stopping.gap_rel);
  s.stopping.stall_rel = ini.get_double("sddp", "stall_rel", s.stopping.stall_rel);
  s.stopping.stall_window = ini.get_int("sddp", "stall_window", s.stopping.stall_window);
  s.stopping.max_iterations = ini.get_int("sddp", "max_iterations", s.stopping.max_iterations);

  TrainConfig& t = cfg.train;
  t.K = ini.get_int("train", "cuts", t.K);
  t.embed = ini.get_int("train", "embed", t.embed);
  t.hidden = ini.get_int("train", "hidden", t.hidden);
  t.learning_rate = ini.get_double("train", "learning_rate", t.learning_rate);
  t.weight_decay = ini.get_double("train", "weight_decay", t.weight_decay);
  t.emd_window = ini.get_int("train", "emd_window", t.emd_window);
  t.steps_per_epoch = ini.get_int("train", "steps_per_epoch", t.steps_per_epoch);
  t.batch_size = ini.get_int("train", "batch_size", t.batch_size);
  t.anneal_max = ini.get_double("train", "anneal_max", t.anneal_max);
  t.projection_rank = ini.get_int("train", "projection_rank", t.projection_rank);
  t.projection_lr = ini.get_double("train", "projection_lr", t.projection_lr);
  t.exact_projection = ini.get_bool("train", "exact_projection", t.exact_projection);
  t.validation_count = ini.get_int("train", "validation_count", t.validation_count);
  t.standardization_probes =
      ini.get_int("train", "standardization_probes", t.standardization_probes);

  InventoryConfig& inv = cfg.inventory;
  inv.S = ini.get_int("inventory", "suppliers", inv.S);
  inv.I = ini.get_int("inventory", "inventories", inv.I);
  inv.C = ini.get_int("inventory", "customers", inv.C);
  inv.T = ini.get_int("inventory", "horizon", inv.T);
  inv.mu_d = ini.get_range("inventory", "mu_d", inv.mu_d);
  inv.sigma_d = ini.get_range("inventory", "sigma_d", inv.sigma_d);
  inv.mu_c = ini.get_range("inventory", "mu_c", inv.mu_c);
  inv.sigma_c = ini.get_double("inventory", "sigma_c", inv.sigma_c);
  inv.sales_price = ini.get_range("inventory", "sales_price", inv.sales_price);
  inv.procurement_price = ini.get_range("inventory", "procurement_price", inv.procurement_price);
  inv.holding_cost = ini.get_range("inventory", "holding_cost", inv.holding_cost);
  inv.supplier_capacity = ini.get_range("inventory", "supplier_capacity", inv.supplier_capacity);
  inv.inventory_capacity = ini.get_range("inventory", "inventory_capacity", inv.inventory_capacity);
  inv.initial_inventory = ini.get_range("inventory", "initial_inventory", inv.initial_inventory);
  inv.n_clusters = ini.get_int("inventory", "clusters", inv.n_clusters);

  PortfolioFamily& pf = cfg.portfolio;
  pf.assets = ini.get_int("portfolio", "assets", pf.assets);
  pf.horizon = ini.get_int("portfolio", "horizon", pf.horizon);
  pf.order = ini.get_int("portfolio", "order", pf.order);
  pf.phi = ini.get_list("portfolio", "phi", pf.phi);
  pf.sigma = ini.get_double("portfolio", "sigma", pf.sigma);
  pf.start_price = ini.get_range("portfolio", "start_price", pf.start_price);
  pf.spread = ini.get_double("portfolio", "spread", pf.spread);
  pf.price_floor = ini.get_double("portfolio", "price_floor", pf.price_floor);
  pf.initial_cash = ini.get_double("portfolio", "initial_cash", pf.initial_cash);
  pf.initial_holdings = ini.get_double("portfolio", "initial_holdings", pf.initial_holdings);
  pf.drift_steps = ini.get_int("portfolio", "drift_steps", pf.drift_steps);

  ini.require_all_consumed();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  try {
    return experiment_from_ini(IniFile::load(path));
  } catch (const std::exception& e) {
    const std::string what = e.what();
    if (what.rfind(path, 0) == 0) throw;
    throw std::runtime_error(path + ": " + what);
  }
}

}  // namespace sddp
