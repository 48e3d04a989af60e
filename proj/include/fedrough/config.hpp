#pragma once

// JSON experiment configuration.
//
// Parsing is strict: unknown keys are rejected, and algorithm-specific keys
// are accepted only for the algorithm that uses them. Every omitted field
// takes its default, and to_json() echoes the fully resolved configuration.
// The schema is documented in README.md.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <type_traits>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedrough/algorithms.hpp"
#include "fedrough/errors.hpp"
#include "fedrough/harness.hpp"

namespace fedrough {

/// Grid axes for the sweep command; an empty axis keeps the base value.
struct SweepSpec {
  std::vector<std::size_t> M;
  std::vector<std::size_t> m;
  std::vector<double> lambda;
  std::vector<double> eta;
};

struct SweepPoint {
  std::size_t M;
  std::size_t m;
  double lambda;
  double eta;
  ExperimentConfig cfg;
};

struct ParsedConfig {
  ExperimentConfig experiment;
  std::optional<SweepSpec> sweep;
};

namespace config_detail {

using nlohmann::json;

inline void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items())
    if (!ok.count(key)) throw ConfigError("config: unknown key '" + key + "' in " + where);
}

inline std::string path_of(const std::string& where, const char* key) {
  return where.empty() ? std::string(key) : where + "." + key;
}

inline double get_double(const json& obj, const std::string& where, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ConfigError("config: '" + path_of(where, key) + "' must be a number");
  return v.get<double>();
}

inline std::uint64_t get_uint(const json& obj, const std::string& where, const char* key, std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    throw ConfigError("config: '" + path_of(where, key) + "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

inline bool get_bool(const json& obj, const std::string& where, const char* key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError("config: '" + path_of(where, key) + "' must be true or false");
  return v.get<bool>();
}

inline std::string get_string(const json& obj, const std::string& where, const char* key, std::string fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_string()) throw ConfigError("config: '" + path_of(where, key) + "' must be a string");
  return v.get<std::string>();
}

inline std::optional<std::size_t> get_opt_uint(const json& obj, const std::string& where, const char* key,
                                               std::optional<std::size_t> fallback) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  return static_cast<std::size_t>(get_uint(obj, where, key, 0));
}

template <class T>
std::vector<T> get_list(const json& obj, const std::string& where, const char* key) {
  if (!obj.contains(key)) return {};
  const auto& v = obj.at(key);
  if (!v.is_array()) throw ConfigError("config: '" + path_of(where, key) + "' must be an array");
  std::vector<T> out;
  for (const auto& x : v) {
    if constexpr (std::is_floating_point_v<T>) {
      if (!x.is_number()) throw ConfigError("config: '" + path_of(where, key) + "' entries must be numbers");
    } else {
      if (!x.is_number_unsigned())
        throw ConfigError("config: '" + path_of(where, key) + "' entries must be non-negative integers");
    }
    out.push_back(x.get<T>());
  }
  return out;
}

inline RoughnessConfig parse_roughness(const json& obj, const std::string& where, RoughnessConfig r) {
  r.M = get_uint(obj, where, "M", r.M);
  r.l = get_double(obj, where, "l", r.l);
  r.m = get_uint(obj, where, "m", r.m);
  r.I_max = get_double(obj, where, "I_max", r.I_max);
  return r;
}

inline void parse_dataset(const json& j, DatasetSpec& d, const std::filesystem::path& base_dir) {
  const std::string kind = get_string(j, "dataset", "kind", "synthetic");
  if (kind == "synthetic") {
    check_keys(j, "dataset", {"kind", "num_classes", "dim", "n_train", "n_test", "noise"});
    d.kind = DatasetSpec::Kind::synthetic;
    d.num_classes = get_uint(j, "dataset", "num_classes", d.num_classes);
    d.dim = get_uint(j, "dataset", "dim", d.dim);
    d.n_train = get_uint(j, "dataset", "n_train", d.n_train);
    d.n_test = get_uint(j, "dataset", "n_test", d.n_test);
    d.noise = get_double(j, "dataset", "noise", d.noise);
  } else if (kind == "mnist") {
    check_keys(j, "dataset",
               {"kind", "train_images", "train_labels", "test_images", "test_labels", "train_subset", "test_subset"});
    d.kind = DatasetSpec::Kind::mnist;
    auto resolve = [&](const char* key) {
      const std::string p = get_string(j, "dataset", key, "");
      if (p.empty()) throw ConfigError("config: 'dataset." + std::string(key) + "' is required for mnist");
      std::filesystem::path path(p);
      return path.is_absolute() ? path : base_dir / path;
    };
    d.train_images = resolve("train_images");
    d.train_labels = resolve("train_labels");
    d.test_images = resolve("test_images");
    d.test_labels = resolve("test_labels");
    d.train_subset = get_opt_uint(j, "dataset", "train_subset", std::nullopt);
    d.test_subset = get_opt_uint(j, "dataset", "test_subset", std::nullopt);
  } else {
    throw ConfigError("config: unknown dataset kind '" + kind + "'");
  }
}

inline void parse_model(const json& j, ModelSpec& m) {
  const std::string kind = get_string(j, "model", "kind", "mlp");
  if (kind == "mlp") {
    check_keys(j, "model", {"kind", "hidden"});
    m.kind = ModelKind::mlp;
    if (j.contains("hidden")) m.hidden = get_list<std::size_t>(j, "model", "hidden");
  } else if (kind == "logistic_regression") {
    check_keys(j, "model", {"kind"});
    m.kind = ModelKind::logistic_regression;
    m.hidden.clear();
  } else {
    throw ConfigError("config: unknown model kind '" + kind + "'");
  }
}

inline AlgoConfig parse_algorithm(const json& j) {
  const std::string name = get_string(j, "algorithm", "kind", "ri_fedavg");
  const auto kind = parse_algo_kind(name);
  if (!kind) throw ConfigError("config: unknown algorithm kind '" + name + "'");
  AlgoConfig a = AlgoConfig::make(*kind);
  switch (*kind) {
    case AlgoKind::ri_fedavg:
      check_keys(j, "algorithm", {"kind", "eta", "epochs", "batch_size", "lambda", "roughness", "fixed_ri"});
      break;
    case AlgoKind::fedprox:
      check_keys(j, "algorithm", {"kind", "eta", "epochs", "batch_size", "mu"});
      break;
    case AlgoKind::feddyn:
      check_keys(j, "algorithm", {"kind", "eta", "epochs", "batch_size", "feddyn_alpha"});
      break;
    case AlgoKind::dp_fedavg:
      check_keys(j, "algorithm", {"kind", "eta", "epochs", "batch_size", "dp_clip", "dp_sigma"});
      break;
    default:
      check_keys(j, "algorithm", {"kind", "eta", "epochs", "batch_size"});
  }
  a.eta = get_double(j, "algorithm", "eta", a.eta);
  a.E = get_uint(j, "algorithm", "epochs", a.E);
  a.B = get_uint(j, "algorithm", "batch_size", a.B);
  if (a.ri) {
    a.ri->lambda = get_double(j, "algorithm", "lambda", a.ri->lambda);
    if (j.contains("roughness")) {
      const auto& r = j.at("roughness");
      check_keys(r, "algorithm.roughness", {"M", "l", "m", "I_max", "probe_rows"});
      a.ri->roughness = parse_roughness(r, "algorithm.roughness", a.ri->roughness);
      a.ri->probe_rows = get_opt_uint(r, "algorithm.roughness", "probe_rows", std::nullopt);
    }
    if (j.contains("fixed_ri") && !j.at("fixed_ri").is_null())
      a.ri->fixed_ri = get_double(j, "algorithm", "fixed_ri", 0.0);
  }
  if (a.prox) a.prox->mu = get_double(j, "algorithm", "mu", a.prox->mu);
  if (a.dyn) a.dyn->alpha = get_double(j, "algorithm", "feddyn_alpha", a.dyn->alpha);
  if (a.dp) {
    a.dp->clip = get_double(j, "algorithm", "dp_clip", a.dp->clip);
    a.dp->sigma = get_double(j, "algorithm", "dp_sigma", a.dp->sigma);
  }
  return a;
}

}  // namespace config_detail

/// Parses and validates a configuration document. Relative dataset paths are
/// resolved against base_dir.
inline ParsedConfig parse_config_json(const nlohmann::json& root, const std::filesystem::path& base_dir = {}) {
  using namespace config_detail;
  check_keys(root, "top level",
             {"seed", "seeds", "record_wall_time", "dataset", "partition", "model", "federation", "algorithm",
              "ri_probe", "sweep"});
  ParsedConfig out;
  ExperimentConfig& c = out.experiment;
  c.master_seed = get_uint(root, "", "seed", c.master_seed);
  c.seeds = get_uint(root, "", "seeds", c.seeds);
  c.record_wall_time = get_bool(root, "", "record_wall_time", c.record_wall_time);

  if (root.contains("dataset")) parse_dataset(root.at("dataset"), c.dataset, base_dir);
  if (root.contains("partition")) {
    const auto& p = root.at("partition");
    check_keys(p, "partition", {"alpha"});
    c.alpha = get_double(p, "partition", "alpha", c.alpha);
  }
  if (root.contains("model")) parse_model(root.at("model"), c.model);
  if (root.contains("federation")) {
    const auto& f = root.at("federation");
    check_keys(f, "federation", {"clients", "fraction", "rounds", "eval_every"});
    c.K = get_uint(f, "federation", "clients", c.K);
    c.C = get_double(f, "federation", "fraction", c.C);
    c.T = get_uint(f, "federation", "rounds", c.T);
    c.eval_every = get_uint(f, "federation", "eval_every", c.eval_every);
  }
  c.algo = root.contains("algorithm") ? parse_algorithm(root.at("algorithm")) : AlgoConfig::make(AlgoKind::ri_fedavg);
  if (root.contains("ri_probe")) {
    const auto& r = root.at("ri_probe");
    check_keys(r, "ri_probe", {"M", "l", "m", "I_max", "probe_rows"});
    c.probe.roughness = parse_roughness(r, "ri_probe", c.probe.roughness);
    c.probe.probe_rows = get_opt_uint(r, "ri_probe", "probe_rows", std::nullopt);
  }
  if (root.contains("sweep")) {
    const auto& s = root.at("sweep");
    check_keys(s, "sweep", {"M", "m", "lambda", "eta"});
    SweepSpec sw;
    sw.M = get_list<std::size_t>(s, "sweep", "M");
    sw.m = get_list<std::size_t>(s, "sweep", "m");
    sw.lambda = get_list<double>(s, "sweep", "lambda");
    sw.eta = get_list<double>(s, "sweep", "eta");
    out.sweep = sw;
  }
  try {
    c.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  return out;
}

inline ParsedConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir = {}) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return parse_config_json(root, base_dir);
}

inline ParsedConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.parent_path());
}

inline nlohmann::json to_json(const RoughnessConfig& r) {
  return {{"M", r.M}, {"l", r.l}, {"m", r.m}, {"I_max", r.I_max}};
}

/// Fully resolved configuration with every default filled in.
inline nlohmann::json to_json(const ParsedConfig& pc) {
  using nlohmann::json;
  const ExperimentConfig& c = pc.experiment;
  json j;
  j["seed"] = c.master_seed;
  j["seeds"] = c.seeds;
  j["record_wall_time"] = c.record_wall_time;
  if (c.dataset.kind == DatasetSpec::Kind::synthetic) {
    j["dataset"] = {{"kind", "synthetic"},      {"num_classes", c.dataset.num_classes}, {"dim", c.dataset.dim},
                    {"n_train", c.dataset.n_train}, {"n_test", c.dataset.n_test},     {"noise", c.dataset.noise}};
  } else {
    j["dataset"] = {{"kind", "mnist"},
                    {"train_images", c.dataset.train_images.string()},
                    {"train_labels", c.dataset.train_labels.string()},
                    {"test_images", c.dataset.test_images.string()},
                    {"test_labels", c.dataset.test_labels.string()},
                    {"train_subset", c.dataset.train_subset ? json(*c.dataset.train_subset) : json(nullptr)},
                    {"test_subset", c.dataset.test_subset ? json(*c.dataset.test_subset) : json(nullptr)}};
  }
  j["partition"] = {{"alpha", c.alpha}};
  if (c.model.kind == ModelKind::mlp)
    j["model"] = {{"kind", "mlp"}, {"hidden", c.model.hidden}};
  else
    j["model"] = {{"kind", "logistic_regression"}};
  j["federation"] = {{"clients", c.K}, {"fraction", c.C}, {"rounds", c.T}, {"eval_every", c.eval_every}};
  json a = {{"kind", to_string(c.algo.kind)}, {"eta", c.algo.eta}, {"epochs", c.algo.E}, {"batch_size", c.algo.B}};
  if (c.algo.ri) {
    a["lambda"] = c.algo.ri->lambda;
    a["roughness"] = to_json(c.algo.ri->roughness);
    a["roughness"]["probe_rows"] = c.algo.ri->probe_rows ? json(*c.algo.ri->probe_rows) : json(nullptr);
    a["fixed_ri"] = c.algo.ri->fixed_ri ? json(*c.algo.ri->fixed_ri) : json(nullptr);
  }
  if (c.algo.prox) a["mu"] = c.algo.prox->mu;
  if (c.algo.dyn) a["feddyn_alpha"] = c.algo.dyn->alpha;
  if (c.algo.dp) {
    a["dp_clip"] = c.algo.dp->clip;
    a["dp_sigma"] = c.algo.dp->sigma;
  }
  j["algorithm"] = a;
  j["ri_probe"] = to_json(c.probe.roughness);
  j["ri_probe"]["probe_rows"] = c.probe.probe_rows ? json(*c.probe.probe_rows) : json(nullptr);
  if (pc.sweep) j["sweep"] = {{"M", pc.sweep->M}, {"m", pc.sweep->m}, {"lambda", pc.sweep->lambda}, {"eta", pc.sweep->eta}};
  return j;
}

/// Cartesian product over the sweep axes in (M, m, lambda, eta) order, last axis fastest.
inline std::vector<SweepPoint> expand_sweep(const ExperimentConfig& base, const SweepSpec& sweep) {
  const bool touches_ri = !sweep.M.empty() || !sweep.m.empty() || !sweep.lambda.empty();
  if (touches_ri && base.algo.kind != AlgoKind::ri_fedavg)
    throw ConfigError("config: sweeping M, m or lambda requires algorithm kind ri_fedavg");
  RiSettings ri = base.algo.ri.value_or(RiSettings{});
  auto or_base = []<class T>(const std::vector<T>& axis, T fallback) {
    return axis.empty() ? std::vector<T>{fallback} : axis;
  };
  const auto Ms = or_base(sweep.M, ri.roughness.M);
  const auto ms = or_base(sweep.m, ri.roughness.m);
  const auto lambdas = or_base(sweep.lambda, ri.lambda);
  const auto etas = or_base(sweep.eta, base.algo.eta);
  std::vector<SweepPoint> out;
  for (auto M : Ms)
    for (auto m : ms)
      for (auto lambda : lambdas)
        for (auto eta : etas) {
          ExperimentConfig c = base;
          c.algo.eta = eta;
          if (c.algo.ri) {
            c.algo.ri->roughness.M = M;
            c.algo.ri->roughness.m = m;
            c.algo.ri->lambda = lambda;
          }
          try {
            c.validate();
          } catch (const ContractError& e) {
            throw ConfigError(e.what());
          }
          out.push_back({M, m, lambda, eta, std::move(c)});
        }
  return out;
}

}  // namespace fedrough
