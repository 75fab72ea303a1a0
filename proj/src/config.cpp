#include "euler_resnet/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "euler_resnet/csv.hpp"
#include "euler_resnet/serialization.hpp"

namespace euler_resnet {

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::euler: return "euler";
    case ExperimentKind::train: return "train";
    case ExperimentKind::gridsearch: return "gridsearch";
    case ExperimentKind::noise_sweep: return "noise-sweep";
    case ExperimentKind::diagnose: return "diagnose";
  }
  return "train";
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::euler, ExperimentKind::train, ExperimentKind::gridsearch,
                 ExperimentKind::noise_sweep, ExperimentKind::diagnose})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown experiment kind '" + s + "'");
}

RunSeeds RunSeeds::from_master(std::uint64_t master) {
  return {derive_seed(master, 1), derive_seed(master, 2), derive_seed(master, 3),
          derive_seed(master, 4), derive_seed(master, 5)};
}

void ExperimentConfig::validate() const {
  try {
    NetworkConfig probe = network;
    probe.validate();
    moons.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (plan.epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (plan.batch_size < 1 || (network.use_bn && plan.batch_size < 2))
    throw ConfigError("train.batch_size must be >= 2 with BN (>= 1 otherwise)");
  if (!(learning_rate >= 0.0)) throw ConfigError("optimizer.learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw ConfigError("optimizer.momentum must be in [0, 1)");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("data.train_fraction must be in (0, 1)");
  for (int b : snapshot_blocks)
    if (b < 0 || b > network.depth)
      throw ConfigError("snapshot block " + std::to_string(b) + " outside [0, " +
                        std::to_string(network.depth) + "]");
  if (!(euler.t_end > 0.0)) throw ConfigError("euler.t_end must be > 0");
  for (double h : euler.h_list)
    if (!(h > 0.0 && h <= euler.t_end))
      throw ConfigError("euler.h_list entries must satisfy 0 < h <= t_end");
  for (double h : sweep.h_grid)
    if (!(h > 0.0)) throw ConfigError("sweep.h_grid entries must be > 0");
  for (double level : sweep.noise_levels)
    if (!(level >= 0.0)) throw ConfigError("sweep.noise_levels entries must be >= 0");
  if (diagnose.batch_size < 1) throw ConfigError("diagnose.batch_size must be >= 1");
  if (!(diagnose.perturbation_norm > 0.0))
    throw ConfigError("diagnose.perturbation_norm must be > 0");

  switch (kind) {
    case ExperimentKind::euler:
      if (euler.h_list.empty()) throw ConfigError("euler.h_list must not be empty");
      break;
    case ExperimentKind::gridsearch:
      if (sweep.h_grid.empty()) throw ConfigError("sweep.h_grid must not be empty");
      if (sweep.seeds.empty()) throw ConfigError("sweep.seeds must not be empty");
      break;
    case ExperimentKind::noise_sweep:
      if (sweep.noise_levels.empty())
        throw ConfigError("sweep.noise_levels must not be empty");
      if (sweep.h_grid.empty()) throw ConfigError("sweep.h_grid must not be empty");
      if (sweep.seeds.empty()) throw ConfigError("sweep.seeds must not be empty");
      break;
    default:
      break;
  }
}

namespace {

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

template <typename T, typename F>
std::string join(const std::vector<T>& v, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += fmt(v[i]);
  }
  return out;
}

std::string fmt_doubles(const std::vector<double>& v) { return join(v, format_double); }
std::string fmt_u64s(const std::vector<std::uint64_t>& v) {
  return join(v, [](std::uint64_t x) { return std::to_string(x); });
}
std::string fmt_ints(const std::vector<int>& v) {
  return join(v, [](int x) { return std::to_string(x); });
}

double parse_double(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + key + ": '" + s + "'");
  }
}

long long parse_int(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad integer for " + key + ": '" + s + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    if (!s.empty() && s.front() == '-') throw std::invalid_argument(s);
    const unsigned long long v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad unsigned integer for " + key + ": '" + s + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("bad boolean for " + key + ": '" + s + "'");
}

std::vector<std::string> list_items(const std::string& s) {
  if (trim(s).empty()) return {};
  return split_trimmed(s, ',');
}

std::vector<double> parse_doubles(const std::string& key, const std::string& s) {
  std::vector<double> out;
  for (const auto& item : list_items(s)) out.push_back(parse_double(key, item));
  return out;
}

std::vector<std::uint64_t> parse_u64s(const std::string& key, const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& item : list_items(s)) out.push_back(parse_u64(key, item));
  return out;
}

std::vector<int> parse_ints(const std::string& key, const std::string& s) {
  std::vector<int> out;
  for (const auto& item : list_items(s)) out.push_back(static_cast<int>(parse_int(key, item)));
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["experiment.kind"] = [](auto& c, const auto& v) { c.kind = experiment_kind_from_string(v); };
    t["experiment.out"] = [](auto& c, const auto& v) { c.out = v; };
    t["experiment.seed"] = [](auto& c, const auto& v) { c.seed = parse_u64("seed", v); };
    t["experiment.snapshot_blocks"] = [](auto& c, const auto& v) {
      c.snapshot_blocks = parse_ints("snapshot_blocks", v);
    };
    t["network.depth"] = [](auto& c, const auto& v) { c.network.depth = static_cast<int>(parse_int("depth", v)); };
    t["network.h"] = [](auto& c, const auto& v) { c.network.h = parse_double("h", v); };
    t["network.width"] = [](auto& c, const auto& v) { c.network.width = static_cast<int>(parse_int("width", v)); };
    t["network.use_bn"] = [](auto& c, const auto& v) { c.network.use_bn = parse_bool("use_bn", v); };
    t["network.num_classes"] = [](auto& c, const auto& v) {
      c.network.num_classes = static_cast<int>(parse_int("num_classes", v));
    };
    t["network.input_dim"] = [](auto& c, const auto& v) {
      c.network.input_dim = static_cast<int>(parse_int("input_dim", v));
    };
    t["network.init_gain"] = [](auto& c, const auto& v) { c.network.init_gain = parse_double("init_gain", v); };
    t["network.init_rule"] = [](auto& c, const auto& v) {
      try {
        c.network.init_rule = init_rule_from_string(v);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    };
    t["network.activation"] = [](auto& c, const auto& v) {
      try {
        c.network.activation = activation_from_string(v);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    };
    t["optimizer.learning_rate"] = [](auto& c, const auto& v) { c.learning_rate = parse_double("learning_rate", v); };
    t["optimizer.momentum"] = [](auto& c, const auto& v) { c.momentum = parse_double("momentum", v); };
    t["train.epochs"] = [](auto& c, const auto& v) { c.plan.epochs = static_cast<int>(parse_int("epochs", v)); };
    t["train.batch_size"] = [](auto& c, const auto& v) {
      c.plan.batch_size = static_cast<int>(parse_int("batch_size", v));
    };
    t["train.record_gradient_norms"] = [](auto& c, const auto& v) {
      c.plan.record_gradient_norms = parse_bool("record_gradient_norms", v);
    };
    t["train.record_trajectories"] = [](auto& c, const auto& v) {
      c.plan.record_trajectories = parse_bool("record_trajectories", v);
    };
    t["data.n_per_class"] = [](auto& c, const auto& v) {
      c.moons.n_per_class = static_cast<int>(parse_int("n_per_class", v));
    };
    t["data.radius"] = [](auto& c, const auto& v) { c.moons.radius = parse_double("radius", v); };
    t["data.noise_std"] = [](auto& c, const auto& v) { c.moons.noise_std = parse_double("noise_std", v); };
    t["data.train_fraction"] = [](auto& c, const auto& v) { c.train_fraction = parse_double("train_fraction", v); };
    t["sweep.h_grid"] = [](auto& c, const auto& v) { c.sweep.h_grid = parse_doubles("h_grid", v); };
    t["sweep.seeds"] = [](auto& c, const auto& v) { c.sweep.seeds = parse_u64s("seeds", v); };
    t["sweep.noise_levels"] = [](auto& c, const auto& v) {
      c.sweep.noise_levels = parse_doubles("noise_levels", v);
    };
    t["euler.h_list"] = [](auto& c, const auto& v) { c.euler.h_list = parse_doubles("h_list", v); };
    t["euler.t_end"] = [](auto& c, const auto& v) { c.euler.t_end = parse_double("t_end", v); };
    t["euler.rate"] = [](auto& c, const auto& v) { c.euler.rate = parse_double("rate", v); };
    t["euler.x0"] = [](auto& c, const auto& v) { c.euler.x0 = parse_double("x0", v); };
    t["diagnose.params"] = [](auto& c, const auto& v) { c.diagnose.params = v; };
    t["diagnose.seeds"] = [](auto& c, const auto& v) { c.diagnose.seeds = parse_u64s("seeds", v); };
    t["diagnose.batch_size"] = [](auto& c, const auto& v) {
      c.diagnose.batch_size = static_cast<int>(parse_int("batch_size", v));
    };
    t["diagnose.perturbation_norm"] = [](auto& c, const auto& v) {
      c.diagnose.perturbation_norm = parse_double("perturbation_norm", v);
    };
    return t;
  }();
  return table;
}

}  // namespace

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "[experiment]\n"
    << "kind = " << to_string(c.kind) << "\n"
    << "out = " << c.out << "\n"
    << "seed = " << c.seed << "\n"
    << "snapshot_blocks = " << fmt_ints(c.snapshot_blocks) << "\n\n"
    << "[network]\n"
    << "depth = " << c.network.depth << "\n"
    << "h = " << format_double(c.network.h) << "\n"
    << "width = " << c.network.width << "\n"
    << "use_bn = " << fmt_bool(c.network.use_bn) << "\n"
    << "num_classes = " << c.network.num_classes << "\n"
    << "input_dim = " << c.network.input_dim << "\n"
    << "init_gain = " << format_double(c.network.init_gain) << "\n"
    << "init_rule = " << to_string(c.network.init_rule) << "\n"
    << "activation = " << to_string(c.network.activation) << "\n\n"
    << "[optimizer]\n"
    << "learning_rate = " << format_double(c.learning_rate) << "\n"
    << "momentum = " << format_double(c.momentum) << "\n\n"
    << "[train]\n"
    << "epochs = " << c.plan.epochs << "\n"
    << "batch_size = " << c.plan.batch_size << "\n"
    << "record_gradient_norms = " << fmt_bool(c.plan.record_gradient_norms) << "\n"
    << "record_trajectories = " << fmt_bool(c.plan.record_trajectories) << "\n\n"
    << "[data]\n"
    << "n_per_class = " << c.moons.n_per_class << "\n"
    << "radius = " << format_double(c.moons.radius) << "\n"
    << "noise_std = " << format_double(c.moons.noise_std) << "\n"
    << "train_fraction = " << format_double(c.train_fraction) << "\n\n"
    << "[sweep]\n"
    << "h_grid = " << fmt_doubles(c.sweep.h_grid) << "\n"
    << "seeds = " << fmt_u64s(c.sweep.seeds) << "\n"
    << "noise_levels = " << fmt_doubles(c.sweep.noise_levels) << "\n\n"
    << "[euler]\n"
    << "h_list = " << fmt_doubles(c.euler.h_list) << "\n"
    << "t_end = " << format_double(c.euler.t_end) << "\n"
    << "rate = " << format_double(c.euler.rate) << "\n"
    << "x0 = " << format_double(c.euler.x0) << "\n\n"
    << "[diagnose]\n"
    << "params = " << c.diagnose.params << "\n"
    << "seeds = " << fmt_u64s(c.diagnose.seeds) << "\n"
    << "batch_size = " << c.diagnose.batch_size << "\n"
    << "perturbation_norm = " << format_double(c.diagnose.perturbation_norm) << "\n";
  return o.str();
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = section + "." + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end())
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    it->second(c, value);
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_config(buf.str());
}

std::string run_directory_name(const ExperimentConfig& config) {
  ExperimentConfig keyed = config;
  keyed.out.clear();
  const std::string text = serialize_config(keyed);
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(fnv1a64(text.data(), text.size())));
  return to_string(config.kind) + "-" + hex;
}

}  // namespace euler_resnet
