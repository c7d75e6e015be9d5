#pragma once

// Experiment harness: strict JSON configuration, the condition-probability
// sweep over the hexagonal network, scheduler comparisons, and CSV/metadata
// emission. All results are deterministic in the master seed and independent
// of the thread count.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "iwf/channel.hpp"
#include "iwf/conditions.hpp"
#include "iwf/dynamics.hpp"
#include "iwf/error.hpp"
#include "iwf/game.hpp"
#include "iwf/rng.hpp"

namespace iwf {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kResampleCap = 1000;

enum class NetworkKind { Hex, Random };
enum class ScheduleType { Sequential, Simultaneous, Async };
enum class WeightSpec { Ones, Perron };

struct SchedulerSpec {
  std::string name;
  ScheduleType type = ScheduleType::Simultaneous;
  double alpha = 0.0;
  int max_delay = 3;
  int max_gap = 5;
  double activation_prob = 0.5;
  int count = 1;  // seeded instances (async only)
};

struct RandomNetworkSpec {
  double direct_distance = 1.0;
  double cross_distance_min = 2.0;
  double cross_distance_max = 5.0;
  double noise = 0.1;
};

struct OutputSpec {
  std::string csv = "results.csv";
  std::string metadata;   // defaults to csv + ".meta.json"
  std::string plot_data;  // empty: not written
  bool trajectories = false;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  NetworkKind network = NetworkKind::Hex;
  int q_count = HexGeometry::kCells;
  int n_carriers = 16;
  int taps = 6;
  double gamma = 2.5;
  double snr_db = 7.0;
  double gap = 1.0;
  bool cross_links = true;  // false zeroes every cross channel
  RandomNetworkSpec random_network;
  std::vector<double> r_grid;
  int trials_per_point = 500;
  std::uint64_t master_seed = 1;
  std::vector<Condition> conditions{kAllConditions.begin(), kAllConditions.end()};
  std::vector<SchedulerSpec> schedulers;
  double tol = kDefaultTolerance;
  int horizon = kDefaultHorizonWindows;  // in full activation windows
  double max_spectral_radius = 1.0;      // scheduler trials resample until rho(S^max) is below this
  double mask_factor = kUnbounded;
  WeightSpec weight = WeightSpec::Ones;
  bool prune_support = true;
  OutputSpec output;

  bool evaluates(Condition c) const { return std::find(conditions.begin(), conditions.end(), c) != conditions.end(); }
};

inline std::vector<double> default_r_grid() {
  std::vector<double> g;
  for (int i = 1; i <= 19; ++i) g.push_back(0.05 * i);
  return g;
}

inline std::vector<SchedulerSpec> default_schedulers() {
  std::vector<SchedulerSpec> s;
  s.push_back({"sequential", ScheduleType::Sequential, 0.0, 0, 0, 1.0, 1});
  s.push_back({"simultaneous", ScheduleType::Simultaneous, 0.0, 0, 0, 1.0, 1});
  s.push_back({"smoothed", ScheduleType::Simultaneous, 0.3, 0, 0, 1.0, 1});
  s.push_back({"async", ScheduleType::Async, 0.0, 3, 5, 0.5, 5});
  return s;
}

inline ExperimentConfig default_config() {
  ExperimentConfig c;
  c.r_grid = default_r_grid();
  c.schedulers = default_schedulers();
  return c;
}

// ---------------------------------------------------------------------------
// Configuration I/O
// ---------------------------------------------------------------------------

namespace detail {

inline std::string to_string(NetworkKind k) { return k == NetworkKind::Hex ? "hex" : "random"; }
inline std::string to_string(WeightSpec w) { return w == WeightSpec::Ones ? "ones" : "perron"; }
inline std::string to_string(ScheduleType t) {
  switch (t) {
    case ScheduleType::Sequential: return "sequential";
    case ScheduleType::Simultaneous: return "simultaneous";
    case ScheduleType::Async: return "async";
  }
  return "?";
}

// Reads fields of one JSON object, remembering which keys were consumed so
// that leftovers can be rejected as unknown.
class FieldReader {
 public:
  FieldReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  void read(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    out = convert<T>(j_.at(key), field(key));
  }

  const nlohmann::json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string field(const std::string& key) const { return path_ + "/" + key; }

  void reject_unknown() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) throw ConfigError("unknown field '" + item.key() + "' at " + field(item.key()));
  }

  template <class T>
  static T convert(const nlohmann::json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path + ": expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path + ": expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        throw ConfigError(path + ": expected a nonnegative integer");
      return v.get<std::uint64_t>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(path + ": expected a number");
      return v.get<T>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported field type");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "/" : path_; }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline Condition parse_condition(const std::string& s, const std::string& path) {
  for (Condition c : kAllConditions)
    if (iwf::to_string(c) == s) return c;
  throw ConfigError(path + ": unknown condition '" + s + "'");
}

inline SchedulerSpec parse_scheduler(const nlohmann::json& j, const std::string& path) {
  FieldReader f(j, path);
  SchedulerSpec s;
  std::string type;
  if (!f.has("type")) throw ConfigError(path + ": missing field 'type'");
  f.read("type", type);
  if (type == "sequential")
    s.type = ScheduleType::Sequential;
  else if (type == "simultaneous")
    s.type = ScheduleType::Simultaneous;
  else if (type == "async")
    s.type = ScheduleType::Async;
  else
    throw ConfigError(f.field("type") + ": expected sequential, simultaneous or async");
  s.name = type;
  f.read("name", s.name);
  f.read("alpha", s.alpha);
  f.read("max_delay", s.max_delay);
  f.read("max_gap", s.max_gap);
  f.read("activation_prob", s.activation_prob);
  f.read("count", s.count);
  f.reject_unknown();
  if (!(s.alpha >= 0 && s.alpha < 1)) throw ConfigError(f.field("alpha") + ": must lie in [0, 1)");
  if (s.count < 1) throw ConfigError(f.field("count") + ": must be >= 1");
  if (s.type != ScheduleType::Async && s.count != 1)
    throw ConfigError(f.field("count") + ": only async schedulers take several instances");
  if (s.type == ScheduleType::Async) {
    if (s.max_delay < 0) throw ConfigError(f.field("max_delay") + ": must be >= 0");
    if (s.max_gap < 1) throw ConfigError(f.field("max_gap") + ": must be >= 1");
    if (!(s.activation_prob > 0 && s.activation_prob <= 1))
      throw ConfigError(f.field("activation_prob") + ": must lie in (0, 1]");
  }
  if (s.name.empty() || s.name.find_first_of(",\"\n ") != std::string::npos)
    throw ConfigError(f.field("name") + ": must be nonempty without commas, quotes or spaces");
  return s;
}

}  // namespace detail

// Validates invariants shared by file and programmatic configs.
inline void validate_config(const ExperimentConfig& c) {
  if (c.schema_version != kConfigSchemaVersion)
    throw ConfigError("/schema_version: unsupported version " + std::to_string(c.schema_version));
  if (c.network == NetworkKind::Hex && c.q_count != HexGeometry::kCells)
    throw ConfigError("/q_count: the hexagonal network has exactly 7 users");
  if (c.q_count < 1) throw ConfigError("/q_count: must be >= 1");
  if (c.n_carriers < 1) throw ConfigError("/n_carriers: must be >= 1");
  if (c.taps < 1) throw ConfigError("/taps: must be >= 1");
  if (!(c.gamma > 0)) throw ConfigError("/gamma: must be positive");
  if (!std::isfinite(c.snr_db)) throw ConfigError("/snr_db: must be finite");
  if (!(c.gap >= 1)) throw ConfigError("/gap: must be >= 1");
  if (c.r_grid.empty()) throw ConfigError("/r_grid: must not be empty");
  for (std::size_t i = 0; i < c.r_grid.size(); ++i)
    if (!(c.r_grid[i] >= 0 && c.r_grid[i] < 1))
      throw ConfigError("/r_grid/" + std::to_string(i) + ": must lie in [0, 1)");
  if (c.trials_per_point < 1) throw ConfigError("/trials_per_point: must be >= 1");
  if (c.conditions.empty()) throw ConfigError("/conditions: must not be empty");
  if (!(c.tol > 0)) throw ConfigError("/tol: must be positive");
  if (c.horizon < 1) throw ConfigError("/horizon: must be >= 1");
  if (!(c.max_spectral_radius > 0 && c.max_spectral_radius <= 1))
    throw ConfigError("/max_spectral_radius: must lie in (0, 1]");
  if (!(is_unbounded(c.mask_factor) || c.mask_factor > 1))
    throw ConfigError("/mask/factor: must exceed 1 so that the masks leave room for the budget");
  const auto& rn = c.random_network;
  if (!(rn.direct_distance > 0 && rn.cross_distance_min > 0 && rn.cross_distance_max >= rn.cross_distance_min))
    throw ConfigError("/random_network: distances must be positive with min <= max");
  if (!(rn.noise > 0)) throw ConfigError("/random_network/noise: must be positive");
  std::set<std::string> names;
  for (const auto& s : c.schedulers)
    if (!names.insert(s.name).second) throw ConfigError("/schedulers: duplicate scheduler name '" + s.name + "'");
  if (c.output.csv.empty()) throw ConfigError("/output/csv: must not be empty");
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using detail::FieldReader;
  ExperimentConfig c = default_config();
  FieldReader f(j, "");
  if (!f.has("schema_version")) throw ConfigError("/schema_version: missing");
  f.read("schema_version", c.schema_version);

  if (f.has("network")) {
    const auto kind = FieldReader::convert<std::string>(f.raw("network"), "/network");
    if (kind == "hex")
      c.network = NetworkKind::Hex;
    else if (kind == "random")
      c.network = NetworkKind::Random;
    else
      throw ConfigError("/network: expected hex or random");
  }
  f.read("q_count", c.q_count);
  f.read("n_carriers", c.n_carriers);
  f.read("taps", c.taps);
  f.read("gamma", c.gamma);
  f.read("snr_db", c.snr_db);
  f.read("gap", c.gap);
  f.read("cross_links", c.cross_links);
  if (f.has("random_network")) {
    FieldReader rn(f.raw("random_network"), "/random_network");
    rn.read("direct_distance", c.random_network.direct_distance);
    rn.read("cross_distance_min", c.random_network.cross_distance_min);
    rn.read("cross_distance_max", c.random_network.cross_distance_max);
    rn.read("noise", c.random_network.noise);
    rn.reject_unknown();
  }
  if (f.has("r_grid")) {
    const auto& g = f.raw("r_grid");
    if (!g.is_array()) throw ConfigError("/r_grid: expected an array");
    c.r_grid.clear();
    for (std::size_t i = 0; i < g.size(); ++i)
      c.r_grid.push_back(FieldReader::convert<double>(g[i], "/r_grid/" + std::to_string(i)));
  }
  f.read("trials_per_point", c.trials_per_point);
  f.read("master_seed", c.master_seed);
  if (f.has("conditions")) {
    const auto& g = f.raw("conditions");
    if (!g.is_array()) throw ConfigError("/conditions: expected an array");
    c.conditions.clear();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto path = "/conditions/" + std::to_string(i);
      const Condition cond = detail::parse_condition(FieldReader::convert<std::string>(g[i], path), path);
      if (!c.evaluates(cond)) c.conditions.push_back(cond);
    }
    std::sort(c.conditions.begin(), c.conditions.end());
  }
  if (f.has("schedulers")) {
    const auto& g = f.raw("schedulers");
    if (!g.is_array()) throw ConfigError("/schedulers: expected an array");
    c.schedulers.clear();
    for (std::size_t i = 0; i < g.size(); ++i)
      c.schedulers.push_back(detail::parse_scheduler(g[i], "/schedulers/" + std::to_string(i)));
  }
  f.read("tol", c.tol);
  f.read("horizon", c.horizon);
  f.read("max_spectral_radius", c.max_spectral_radius);
  if (f.has("mask")) {
    const auto& m = f.raw("mask");
    if (m.is_null()) {
      c.mask_factor = kUnbounded;
    } else {
      FieldReader mr(m, "/mask");
      if (!mr.has("factor")) throw ConfigError("/mask/factor: missing");
      mr.read("factor", c.mask_factor);
      mr.reject_unknown();
    }
  }
  if (f.has("weight")) {
    const auto w = FieldReader::convert<std::string>(f.raw("weight"), "/weight");
    if (w == "ones")
      c.weight = WeightSpec::Ones;
    else if (w == "perron")
      c.weight = WeightSpec::Perron;
    else
      throw ConfigError("/weight: expected ones or perron");
  }
  f.read("prune_support", c.prune_support);
  if (f.has("output")) {
    FieldReader o(f.raw("output"), "/output");
    o.read("csv", c.output.csv);
    o.read("metadata", c.output.metadata);
    o.read("plot_data", c.output.plot_data);
    o.read("trajectories", c.output.trajectories);
    o.reject_unknown();
  }
  f.reject_unknown();
  validate_config(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + path + "': malformed JSON: " + e.what());
  }
  return config_from_json(j);
}

// Canonical JSON form. Output paths are left out so that the hash identifies
// the experiment, not where its results were written.
inline nlohmann::json to_json(const ExperimentConfig& c, bool include_output = true) {
  nlohmann::json j;
  j["schema_version"] = c.schema_version;
  j["network"] = detail::to_string(c.network);
  j["q_count"] = c.q_count;
  j["n_carriers"] = c.n_carriers;
  j["taps"] = c.taps;
  j["gamma"] = c.gamma;
  j["snr_db"] = c.snr_db;
  j["gap"] = c.gap;
  j["cross_links"] = c.cross_links;
  j["random_network"] = {{"direct_distance", c.random_network.direct_distance},
                         {"cross_distance_min", c.random_network.cross_distance_min},
                         {"cross_distance_max", c.random_network.cross_distance_max},
                         {"noise", c.random_network.noise}};
  j["r_grid"] = c.r_grid;
  j["trials_per_point"] = c.trials_per_point;
  j["master_seed"] = c.master_seed;
  j["conditions"] = nlohmann::json::array();
  for (Condition cond : c.conditions) j["conditions"].push_back(iwf::to_string(cond));
  j["schedulers"] = nlohmann::json::array();
  for (const auto& s : c.schedulers)
    j["schedulers"].push_back({{"name", s.name},
                               {"type", detail::to_string(s.type)},
                               {"alpha", s.alpha},
                               {"max_delay", s.max_delay},
                               {"max_gap", s.max_gap},
                               {"activation_prob", s.activation_prob},
                               {"count", s.count}});
  j["tol"] = c.tol;
  j["horizon"] = c.horizon;
  j["max_spectral_radius"] = c.max_spectral_radius;
  j["mask"] = is_unbounded(c.mask_factor) ? nlohmann::json(nullptr) : nlohmann::json{{"factor", c.mask_factor}};
  j["weight"] = detail::to_string(c.weight);
  j["prune_support"] = c.prune_support;
  if (include_output)
    j["output"] = {{"csv", c.output.csv},
                   {"metadata", c.output.metadata},
                   {"plot_data", c.output.plot_data},
                   {"trajectories", c.output.trajectories}};
  return j;
}

// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const ExperimentConfig& c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json(c, false).dump())));
  return std::string("fnv1a64:") + buf;
}

inline std::string metadata_path(const ExperimentConfig& c) {
  return c.output.metadata.empty() ? c.output.csv + ".meta.json" : c.output.metadata;
}

// ---------------------------------------------------------------------------
// Trial construction and parallel execution
// ---------------------------------------------------------------------------

inline InterferenceChannel make_channel(const ExperimentConfig& c, double r, std::uint64_t seed) {
  InterferenceChannel ch;
  if (c.network == NetworkKind::Hex) {
    HexNetworkParams p;
    p.taps = c.taps;
    p.n_carriers = c.n_carriers;
    p.gamma = c.gamma;
    p.snr_db = c.snr_db;
    p.seed = seed;
    p.gap = c.gap;
    p.mask_factor = c.mask_factor;
    p.cross_links = c.cross_links;
    ch = build_hex_network(r, p);
  } else {
    RandomChannelParams p;
    p.q_count = c.q_count;
    p.n_carriers = c.n_carriers;
    p.taps = c.taps;
    p.gamma = c.gamma;
    p.direct_distance = c.random_network.direct_distance;
    p.cross_distance_min = c.random_network.cross_distance_min;
    p.cross_distance_max = c.random_network.cross_distance_max;
    p.noise = c.random_network.noise;
    p.seed = seed;
    ch = random_channel(p);
    ch.gap.setConstant(c.gap);
    if (!c.cross_links)
      for (int q = 0; q < ch.q_count; ++q)
        for (int s = 0; s < ch.q_count; ++s)
          if (q != s)
            for (int k = 0; k < ch.n_carriers; ++k) ch.raw(q, s, k) = {0.0, 0.0};
    if (!is_unbounded(c.mask_factor))
      for (int q = 0; q < ch.q_count; ++q) ch.mask.row(q).setConstant(c.mask_factor * ch.budget(q));
    ch.validate();
  }
  return ch;
}

inline ConditionOptions condition_options(const ExperimentConfig& c) {
  ConditionOptions o;
  o.weight = c.weight == WeightSpec::Ones ? WeightChoice{OnesWeight{}} : WeightChoice{AutoWeight{}};
  o.prune_support = c.prune_support;
  return o;
}

// Runs body(i) for i in [0, count) on up to `threads` workers. Each index is
// processed exactly once; callers write into slot i only.
inline void parallel_for(int count, int threads, const std::function<void(int)>& body) {
  const int workers = std::max(1, std::min(threads, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  for (int t = 0; t < workers; ++t)
    pool.emplace_back([&, t] {
      try {
        for (int i = next++; i < count; i = next++) body(i);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
        next = count;
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Shortest of %.15g / %.16g / %.17g that reads back as the same double.
inline std::string format_number(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[40];
  for (int digits = 15; digits <= 17; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open output file '" + path + "'");
  return out;
}

inline void write_file(const std::string& path, const std::string& content) {
  auto out = open_output(path);
  out << content;
  out.flush();
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Condition-probability sweep
// ---------------------------------------------------------------------------

struct SweepPoint {
  double r = 0;
  int trials = 0;
  std::array<int, 6> counts{};
  int marginal_count = 0;          // trials with any evaluated condition within the marginal band
  int implication_violations = 0;  // trials breaking C4=>C1, C5=>C4 or C6=>C1

  double frequency(Condition c) const { return trials ? double(counts[static_cast<std::size_t>(c)]) / trials : 0.0; }
};

struct SweepResult {
  std::vector<SweepPoint> points;
  std::vector<Condition> evaluated;
  std::uint64_t master_seed = 0;
  std::string config_hash;
};

inline std::uint64_t trial_seed(std::uint64_t master, int r_index, int trial) {
  return derive_seed(master, {static_cast<std::uint64_t>(r_index), static_cast<std::uint64_t>(trial)});
}

inline SweepResult condition_probability_sweep(const ExperimentConfig& c, int threads = 1) {
  validate_config(c);
  if (c.network != NetworkKind::Hex) throw ConfigError("/network: the sweep runs on the hexagonal network");
  const int per_point = c.trials_per_point;
  const int total = static_cast<int>(c.r_grid.size()) * per_point;
  const ConditionOptions opts = condition_options(c);

  struct Outcome {
    std::array<bool, 6> flags{};
    bool marginal = false;
    bool violation = false;
  };
  std::vector<Outcome> outcomes(static_cast<std::size_t>(total));
  parallel_for(total, threads, [&](int i) {
    const int ri = i / per_point;
    const int trial = i % per_point;
    const auto ch = make_channel(c, c.r_grid[static_cast<std::size_t>(ri)], trial_seed(c.master_seed, ri, trial));
    const ConditionReport rep = check_conditions(ch, opts);
    Outcome& o = outcomes[static_cast<std::size_t>(i)];
    for (Condition cond : c.conditions) {
      o.flags[static_cast<std::size_t>(cond)] = rep.holds(cond);
      o.marginal = o.marginal || rep.is_marginal(cond);
    }
    o.violation = (rep.holds(Condition::C4) && !rep.holds(Condition::C1)) ||
                  (rep.holds(Condition::C5) && !rep.holds(Condition::C4)) ||
                  (rep.holds(Condition::C6) && !rep.holds(Condition::C1));
  });

  SweepResult res;
  res.evaluated = c.conditions;
  res.master_seed = c.master_seed;
  res.config_hash = config_hash(c);
  for (std::size_t ri = 0; ri < c.r_grid.size(); ++ri) {
    SweepPoint pt;
    pt.r = c.r_grid[ri];
    pt.trials = per_point;
    for (int t = 0; t < per_point; ++t) {
      const Outcome& o = outcomes[ri * static_cast<std::size_t>(per_point) + static_cast<std::size_t>(t)];
      for (std::size_t k = 0; k < 6; ++k) pt.counts[k] += o.flags[k] ? 1 : 0;
      pt.marginal_count += o.marginal ? 1 : 0;
      pt.implication_violations += o.violation ? 1 : 0;
    }
    res.points.push_back(pt);
  }
  return res;
}

inline constexpr const char* kSweepHeader = "r,trials,freq_C1,freq_C2,freq_C3,freq_C4,freq_C5,freq_C6,marginal_count";

// Conditions that were not evaluated leave their column empty.
inline std::string sweep_csv(const SweepResult& res, char sep = ',') {
  std::ostringstream out;
  std::string header = kSweepHeader;
  if (sep != ',') std::replace(header.begin(), header.end(), ',', sep);
  out << header << '\n';
  for (const auto& pt : res.points) {
    out << format_number(pt.r) << sep << pt.trials;
    for (Condition cond : kAllConditions) {
      out << sep;
      if (std::find(res.evaluated.begin(), res.evaluated.end(), cond) != res.evaluated.end())
        out << format_number(pt.frequency(cond));
      else if (sep != ',')
        out << "nan";
    }
    out << sep << pt.marginal_count << '\n';
  }
  return out.str();
}

inline nlohmann::json run_metadata(const ExperimentConfig& c, const std::string& experiment) {
  return {{"schema_version", kConfigSchemaVersion},
          {"experiment", experiment},
          {"master_seed", c.master_seed},
          {"config_hash", config_hash(c)},
          {"config", to_json(c, false)}};
}

inline nlohmann::json read_metadata(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open metadata file '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + path + "': malformed metadata: " + e.what());
  }
}

// Writes the CSV, its metadata sidecar and, if configured, the plot-data file
// (whitespace separated, same columns, '#' header).
inline void emit_results(const SweepResult& res, const ExperimentConfig& c) {
  write_file(c.output.csv, sweep_csv(res));
  nlohmann::json meta = run_metadata(c, "sweep");
  int violations = 0;
  for (const auto& pt : res.points) violations += pt.implication_violations;
  meta["implication_violations"] = violations;
  write_file(metadata_path(c), meta.dump(2) + "\n");
  if (!c.output.plot_data.empty()) write_file(c.output.plot_data, "# " + sweep_csv(res, ' '));
}

// ---------------------------------------------------------------------------
// Scheduler comparison
// ---------------------------------------------------------------------------

// One concrete schedule to run: a spec expanded over its seeded instances.
struct SchedulerRun {
  std::string name;
  const SchedulerSpec* spec = nullptr;
  int instance = 0;
};

inline std::vector<SchedulerRun> expand_schedulers(const std::vector<SchedulerSpec>& specs) {
  std::vector<SchedulerRun> out;
  for (const auto& s : specs)
    for (int i = 0; i < s.count; ++i)
      out.push_back({s.count > 1 ? s.name + std::to_string(i + 1) : s.name, &s, i});
  return out;
}

inline int schedule_window(const SchedulerSpec& s, int q_count) {
  switch (s.type) {
    case ScheduleType::Sequential: return q_count;
    case ScheduleType::Simultaneous: return 1;
    case ScheduleType::Async: return s.max_gap;
  }
  return 1;
}

inline Schedule make_schedule(const SchedulerSpec& s, int q_count, int horizon, std::uint64_t seed) {
  switch (s.type) {
    case ScheduleType::Sequential: return sequential_schedule(q_count, horizon);
    case ScheduleType::Simultaneous: return simultaneous_schedule(q_count, horizon);
    case ScheduleType::Async:
      return random_async_schedule(q_count, horizon, s.max_delay, s.max_gap, s.activation_prob, seed);
  }
  throw ParameterError("unknown schedule type");
}

// Runs one scheduler for up to `horizon_windows` full windows. Schedules are
// materialized for a short horizon first and regenerated with twice the
// length while the run has not converged; a longer schedule extends the
// shorter one, so the result equals a single run over the full horizon.
inline TrajectoryLog run_scheduler(const GameInstance& game, const SchedulerSpec& spec, std::uint64_t seed,
                                   const PowerProfile& p0, double tol, int horizon_windows) {
  const int q_count = game.q_count();
  const int window = schedule_window(spec, q_count);
  const Eigen::VectorXd alpha = Eigen::VectorXd::Constant(q_count, spec.alpha);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(q_count);
  for (long windows = std::min(64, horizon_windows);; windows = std::min<long>(2 * windows, horizon_windows)) {
    const Schedule s = make_schedule(spec, q_count, static_cast<int>(windows * window), seed);
    TrajectoryLog log = run_iwfa(game, s, alpha, p0, tol, ones);
    if (log.converged || windows >= horizon_windows) return log;
  }
}

struct SchedulerTrial {
  double r = 0;
  int trial = 0;
  int resamples = 0;
  double rho_smax = 0;
  std::vector<bool> converged;
  std::vector<int> iterations;
  std::vector<int> windows;
  double max_ne_distance = 0;                  // pairwise block-max distance between final iterates
  std::optional<double> brute_force_distance;  // Q <= 3, N <= 4 only
};

struct SchedulerReport {
  std::vector<std::string> names;
  std::vector<SchedulerTrial> trials;

  // Medians over converged runs; NaN for a scheduler that never converged.
  std::vector<double> median_windows() const { return medians(&SchedulerTrial::windows); }
  std::vector<double> median_iterations() const { return medians(&SchedulerTrial::iterations); }

  double max_ne_distance() const {
    double d = 0;
    for (const auto& t : trials) d = std::max(d, t.max_ne_distance);
    return d;
  }

  bool all_converged() const {
    for (const auto& t : trials)
      for (bool b : t.converged)
        if (!b) return false;
    return true;
  }

 private:
  std::vector<double> medians(std::vector<int> SchedulerTrial::*field) const {
    std::vector<double> out;
    for (std::size_t s = 0; s < names.size(); ++s) {
      std::vector<int> v;
      for (const auto& t : trials)
        if (t.converged[s]) v.push_back((t.*field)[s]);
      if (v.empty()) {
        out.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      std::sort(v.begin(), v.end());
      const std::size_t m = v.size() / 2;
      out.push_back(v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]));
    }
    return out;
  }
};

inline std::uint64_t resample_seed(std::uint64_t master, int r_index, int trial, int attempt) {
  return derive_seed(master, {static_cast<std::uint64_t>(r_index), static_cast<std::uint64_t>(trial),
                              static_cast<std::uint64_t>(attempt)});
}

// Per trial: draws channels until rho(S^max) < max_spectral_radius, then runs
// every scheduler from the uniform profile. Hex networks iterate over r_grid;
// random networks use a single point.
inline SchedulerReport scheduler_comparison(const ExperimentConfig& c, int threads = 1) {
  validate_config(c);
  if (c.schedulers.empty()) throw ConfigError("/schedulers: must not be empty");
  const auto runs = expand_schedulers(c.schedulers);
  const std::vector<double> points = c.network == NetworkKind::Hex ? c.r_grid : std::vector<double>{0.0};
  const int per_point = c.trials_per_point;
  const int total = static_cast<int>(points.size()) * per_point;

  SchedulerReport report;
  for (const auto& run : runs) report.names.push_back(run.name);
  report.trials.resize(static_cast<std::size_t>(total));

  parallel_for(total, threads, [&](int i) {
    const int ri = i / per_point;
    const int trial = i % per_point;
    SchedulerTrial t;
    t.r = points[static_cast<std::size_t>(ri)];
    t.trial = trial;
    std::optional<InterferenceChannel> ch;
    for (int attempt = 0; attempt < kResampleCap; ++attempt) {
      auto cand = make_channel(c, t.r, resample_seed(c.master_seed, ri, trial, attempt));
      const auto smax = build_interference_matrix(
          cand, c.prune_support ? carrier_support_sets(normalize(cand)) : CarrierSupport::full(cand.q_count, cand.n_carriers));
      const bool finite = smax.allFinite();
      const double rho = finite ? spectral_radius(smax) : kUnbounded;
      if (rho < c.max_spectral_radius) {
        ch = std::move(cand);
        t.rho_smax = rho;
        t.resamples = attempt;
        break;
      }
    }
    if (!ch)
      throw ConfigError("scheduler comparison: no channel with rho(S^max) < " + format_number(c.max_spectral_radius) +
                        " within " + std::to_string(kResampleCap) + " resamples; interference too strong");

    const GameInstance game(*ch);
    const PowerProfile p0 = uniform_profile(game);
    std::vector<PowerProfile> finals;
    for (std::size_t s = 0; s < runs.size(); ++s) {
      const auto seed = derive_seed(resample_seed(c.master_seed, ri, trial, t.resamples),
                                    {0x5343ULL, static_cast<std::uint64_t>(s)});
      const TrajectoryLog log = run_scheduler(game, *runs[s].spec, seed, p0, c.tol, c.horizon);
      t.converged.push_back(log.converged);
      t.iterations.push_back(log.converged ? log.iterations_to_tol : log.iterations_used);
      t.windows.push_back(log.windows_used());
      finals.push_back(log.final_profile());
    }
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(game.q_count());
    for (std::size_t a = 0; a < finals.size(); ++a)
      for (std::size_t b = a + 1; b < finals.size(); ++b)
        t.max_ne_distance = std::max(t.max_ne_distance, block_max_norm(finals[a] - finals[b], ones));
    if (game.q_count() <= 3 && game.n_carriers() <= 4) {
      try {
        const PowerProfile oracle = brute_force_ne(game, 1e-12);
        double d = 0;
        for (const auto& p : finals) d = std::max(d, block_max_norm(p - oracle, ones));
        t.brute_force_distance = d;
      } catch (const OracleError&) {
        // left empty: the oracle could not certify this instance
      }
    }
    report.trials[static_cast<std::size_t>(i)] = std::move(t);
  });
  return report;
}

// Per-trial table. Iteration columns hold iterations to tolerance (or the
// iterations run); window columns are empty for runs that did not converge.
inline std::string scheduler_csv(const SchedulerReport& rep, bool with_r) {
  std::ostringstream out;
  out << "r,trial,resamples,rho_smax";
  for (const auto& n : rep.names) out << ',' << n << "_iterations," << n << "_windows";
  out << ",max_ne_distance,brute_force_distance\n";
  for (const auto& t : rep.trials) {
    out << (with_r ? format_number(t.r) : "") << ',' << t.trial << ',' << t.resamples << ','
        << format_number(t.rho_smax);
    for (std::size_t s = 0; s < rep.names.size(); ++s) {
      out << ',' << t.iterations[s] << ',';
      if (t.converged[s]) out << t.windows[s];
    }
    out << ',' << format_number(t.max_ne_distance) << ',';
    if (t.brute_force_distance) out << format_number(*t.brute_force_distance);
    out << '\n';
  }
  return out.str();
}

inline nlohmann::json scheduler_summary(const SchedulerReport& rep) {
  auto to_object = [&](const std::vector<double>& m) {
    nlohmann::json o = nlohmann::json::object();
    for (std::size_t s = 0; s < rep.names.size(); ++s)
      o[rep.names[s]] = std::isfinite(m[s]) ? nlohmann::json(m[s]) : nlohmann::json(nullptr);
    return o;
  };
  return {{"trials", rep.trials.size()},
          {"median_windows", to_object(rep.median_windows())},
          {"median_iterations", to_object(rep.median_iterations())},
          {"max_ne_distance", rep.max_ne_distance()},
          {"all_converged", rep.all_converged()}};
}

inline void emit_results(const SchedulerReport& rep, const ExperimentConfig& c) {
  const std::string csv = scheduler_csv(rep, c.network == NetworkKind::Hex);
  write_file(c.output.csv, csv);
  nlohmann::json meta = run_metadata(c, "schedulers");
  meta["summary"] = scheduler_summary(rep);
  write_file(metadata_path(c), meta.dump(2) + "\n");
  if (!c.output.plot_data.empty()) {
    std::string dat = csv;
    std::replace(dat.begin(), dat.end(), ',', ' ');
    write_file(c.output.plot_data, "# " + dat);
  }
}

// ---------------------------------------------------------------------------
// Single instance
// ---------------------------------------------------------------------------

struct SingleResult {
  ConditionReport conditions;
  std::vector<std::string> names;
  std::vector<TrajectoryLog> logs;
};

// One channel (first r in the grid, trial 0), its condition report, and one
// trajectory per scheduler.
inline SingleResult single_experiment(const ExperimentConfig& c) {
  validate_config(c);
  const auto ch = make_channel(c, c.r_grid.front(), trial_seed(c.master_seed, 0, 0));
  SingleResult res;
  res.conditions = check_conditions(ch, condition_options(c));
  const GameInstance game(ch);
  const PowerProfile p0 = uniform_profile(game);
  const auto runs = expand_schedulers(c.schedulers);
  for (std::size_t s = 0; s < runs.size(); ++s) {
    res.names.push_back(runs[s].name);
    const auto seed = derive_seed(trial_seed(c.master_seed, 0, 0), {0x5343ULL, static_cast<std::uint64_t>(s)});
    res.logs.push_back(run_scheduler(game, *runs[s].spec, seed, p0, c.tol, c.horizon));
  }
  return res;
}

inline std::string single_csv(const SingleResult& res) {
  std::ostringstream out;
  const auto q_count = res.logs.empty() ? 0 : res.logs.front().rates.front().size();
  out << "scheduler,converged,iterations,windows,final_residual";
  for (Eigen::Index q = 0; q < q_count; ++q) out << ",rate_" << (q + 1);
  out << '\n';
  for (std::size_t s = 0; s < res.logs.size(); ++s) {
    const auto& log = res.logs[s];
    out << res.names[s] << ',' << (log.converged ? 1 : 0) << ',' << log.iterations_used << ','
        << log.windows_used() << ',' << format_number(log.final_residual());
    for (Eigen::Index q = 0; q < q_count; ++q) out << ',' << format_number(log.rates.back()(q));
    out << '\n';
  }
  return out.str();
}

inline void emit_results(const SingleResult& res, const ExperimentConfig& c) {
  write_file(c.output.csv, single_csv(res));
  nlohmann::json meta = run_metadata(c, "single");
  meta["conditions"] = to_json(res.conditions);
  write_file(metadata_path(c), meta.dump(2) + "\n");
  if (c.output.trajectories)
    for (std::size_t s = 0; s < res.logs.size(); ++s) {
      std::ostringstream t;
      write_trajectory_table(t, res.logs[s]);
      write_file(c.output.csv + "." + res.names[s] + ".trajectory.csv", t.str());
    }
}

}  // namespace iwf
