#pragma once

// Experiment runner: flat key=value configuration, a replica pool with
// per-replica derived seeds, artifact writing and the run manifest.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <openssl/evp.h>
#include <json.hpp>

#include "smoosh/constants.hpp"
#include "smoosh/diffusion.hpp"
#include "smoosh/discrete_motion.hpp"
#include "smoosh/lattice.hpp"
#include "smoosh/permutation_stats.hpp"
#include "smoosh/random.hpp"
#include "smoosh/shadow_coupling.hpp"

#ifndef SMOOSH_CODE_VERSION
#define SMOOSH_CODE_VERSION "unknown"
#endif

namespace smoosh {

inline constexpr const char* kManifestSchema = "smoosh.run-manifest/1";

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Replica pool

/// Runs fn(r) for r in [0, n) on `threads` workers pulling indices from a
/// shared counter. Exceptions are caught per replica and returned by index
/// (empty string = success).
template <class Fn>
std::vector<std::string> parallel_replicas(std::size_t n, unsigned threads, Fn&& fn) {
  std::vector<std::string> errors(n);
  if (n == 0) return errors;
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t r = next.fetch_add(1, std::memory_order_relaxed);
      if (r >= n) return;
      try {
        fn(r);
      } catch (const std::exception& e) {
        errors[r] = e.what();
        if (errors[r].empty()) errors[r] = "unknown error";
      } catch (...) {
        errors[r] = "unknown error";
      }
    }
  };
  if (threads == 1) {
    worker();
    return errors;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return errors;
}

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  std::string model = "discrete2d";
  std::string preset;
  std::int64_t replicas = 100;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::string out_dir;
  std::string outputs = "paths,perms";

  double width = 1.0;
  double height = 1.0;
  double delta = 0.2;
  double p = 0.5;
  double sigma2 = 0.5;
  double s0 = 0.1;
  double lambda = 1.0;
  std::string direction = "uniform";
  std::string gather = "every";
  int N = 8;
  int m = 3;
  double dt = 1e-3;
  double horizon = 10.0;
  std::int64_t max_events = 0;
  std::int64_t record_every = 1;
  std::string init = "spread";
  std::string coupling = "sequential";
  std::string t_grid = "0,1,2,5,10,20";
  double frak = 0.0;
  double alpha = 0.0;
  double c1 = 0.0;

  std::vector<std::string> output_list() const;
  std::vector<double> t_values() const;
  bool wants(const std::string& kind) const {
    const auto v = output_list();
    return std::find(v.begin(), v.end(), kind) != v.end();
  }
};

inline std::string default_out_dir() {
  if (const char* env = std::getenv("SMOOSH_OUT_DIR"); env && *env) return env;
  return "smoosh_out";
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::vector<std::string> ExperimentConfig::output_list() const { return split_list(outputs); }

inline std::vector<double> ExperimentConfig::t_values() const {
  std::vector<double> ts;
  for (const auto& s : split_list(t_grid)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || !(v >= 0.0)) throw ConfigError("t_grid: bad time value '" + s + "'");
    ts.push_back(v);
  }
  return ts;
}

namespace detail {

template <class T>
T parse_value(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v{};
  in >> v;
  if (in.fail() || !(in >> std::ws).eof()) throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  return v;
}

template <class T>
std::string format_value(const T& v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

struct Field {
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <class T>
Field field(T ExperimentConfig::*member, const char* key) {
  return {[member](const ExperimentConfig& c) { return format_value(c.*member); },
          [member, key](ExperimentConfig& c, const std::string& v) {
            if constexpr (std::is_same_v<T, std::string>)
              c.*member = v;
            else
              c.*member = parse_value<T>(key, v);
          }};
}

inline const std::map<std::string, Field>& config_fields() {
  static const std::map<std::string, Field> fields = {
      {"model", field(&ExperimentConfig::model, "model")},
      {"replicas", field(&ExperimentConfig::replicas, "replicas")},
      {"seed", field(&ExperimentConfig::seed, "seed")},
      {"threads", field(&ExperimentConfig::threads, "threads")},
      {"out", field(&ExperimentConfig::out_dir, "out")},
      {"outputs", field(&ExperimentConfig::outputs, "outputs")},
      {"width", field(&ExperimentConfig::width, "width")},
      {"height", field(&ExperimentConfig::height, "height")},
      {"delta", field(&ExperimentConfig::delta, "delta")},
      {"p", field(&ExperimentConfig::p, "p")},
      {"sigma2", field(&ExperimentConfig::sigma2, "sigma2")},
      {"s0", field(&ExperimentConfig::s0, "s0")},
      {"lambda", field(&ExperimentConfig::lambda, "lambda")},
      {"direction", field(&ExperimentConfig::direction, "direction")},
      {"gather", field(&ExperimentConfig::gather, "gather")},
      {"N", field(&ExperimentConfig::N, "N")},
      {"m", field(&ExperimentConfig::m, "m")},
      {"dt", field(&ExperimentConfig::dt, "dt")},
      {"horizon", field(&ExperimentConfig::horizon, "horizon")},
      {"max_events", field(&ExperimentConfig::max_events, "max_events")},
      {"record_every", field(&ExperimentConfig::record_every, "record_every")},
      {"init", field(&ExperimentConfig::init, "init")},
      {"coupling", field(&ExperimentConfig::coupling, "coupling")},
      {"t_grid", field(&ExperimentConfig::t_grid, "t_grid")},
      {"frak_p", field(&ExperimentConfig::frak, "frak_p")},
      {"alpha", field(&ExperimentConfig::alpha, "alpha")},
      {"c1", field(&ExperimentConfig::c1, "c1")},
  };
  return fields;
}

}  // namespace detail

inline void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
  const auto& fields = detail::config_fields();
  const auto it = fields.find(key);
  if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(c, value);
}

/// Applies "key=value".
inline void apply_override(ExperimentConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: '" + assignment + "'");
  auto trim = [](std::string s) {
    s.erase(0, s.find_first_not_of(" \t\r"));
    s.erase(s.find_last_not_of(" \t\r") + 1);
    return s;
  };
  set_config_value(c, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

/// Flat key=value text; '#' starts a comment.
inline void parse_config_text(ExperimentConfig& c, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      apply_override(c, line);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline void load_config_file(ExperimentConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  parse_config_text(c, buf.str());
}

inline std::map<std::string, std::string> config_entries(const ExperimentConfig& c) {
  std::map<std::string, std::string> out;
  for (const auto& [key, f] : detail::config_fields()) out[key] = f.get(c);
  return out;
}

inline std::string config_to_text(const ExperimentConfig& c) {
  std::ostringstream out;
  for (const auto& [key, value] : config_entries(c)) out << key << " = " << value << '\n';
  return out.str();
}

inline void apply_preset(ExperimentConfig& c, const std::string& name) {
  if (name == "fig2") {
    c.model = "discrete2d";
    c.width = c.height = 5.0;
    c.delta = 0.5;
    c.s0 = 1.0;
    c.p = 0.5;
    c.lambda = 1.0;
    c.m = 250;
    c.init = "center";
    c.gather = "every";
    c.direction = "uniform";
    c.max_events = 3000;
    c.horizon = 1e9;
    c.record_every = 100;
    c.replicas = 20;
    c.outputs = "paths,clusters";
  } else if (name == "lattice") {
    c.model = "lattice1d";
    c.N = 8;
    c.m = 4;
    c.p = 0.5;
    c.horizon = 1e6;
    c.outputs = "hitting";
  } else if (name == "capture") {
    c.model = "jumpdiffusion";
    c.delta = 0.6;
    c.p = 0.5;
    c.sigma2 = 0.5;
    c.m = 2;
    c.init = "corners";
    c.horizon = 100.0;
    c.outputs = "gathers,local_times";
  } else {
    throw ConfigError("unknown preset '" + name + "' (known: fig2, lattice, capture)");
  }
  c.preset = name;
}

inline DirectionLaw direction_law(const std::string& name) {
  if (name == "uniform") return DirectionLaw::continuous_uniform();
  if (name == "four_axis") return DirectionLaw::four_axis();
  throw ConfigError("direction must be 'uniform' or 'four_axis', got '" + name + "'");
}

inline GatherMode gather_mode(const std::string& name) {
  if (name == "every") return GatherMode::EveryEvent;
  if (name == "rare") return GatherMode::RareGather;
  if (name == "never") return GatherMode::Never;
  throw ConfigError("gather must be 'every', 'rare' or 'never', got '" + name + "'");
}

inline ModelConfig model_config(const ExperimentConfig& c) {
  ModelConfig mc;
  mc.table = Table(c.width, c.height, c.delta);
  mc.s0 = c.s0;
  mc.p = c.p;
  mc.lambda = c.lambda;
  mc.direction = direction_law(c.direction);
  mc.gather_mode = gather_mode(c.gather);
  return mc;
}

inline JumpDiffusionConfig jump_config(const ExperimentConfig& c) {
  JumpDiffusionConfig jc;
  jc.params = {c.delta, c.p, c.sigma2};
  jc.dt = c.dt;
  jc.gather_rate = c.model == "diffusion" ? 0.0 : 1.0;
  return jc;
}

inline const std::vector<std::string>& known_models() {
  static const std::vector<std::string> v{"discrete2d", "lattice1d", "diffusion", "jumpdiffusion", "zeta_abstract"};
  return v;
}

inline const std::vector<std::string>& known_outputs(const std::string& model) {
  static const std::map<std::string, std::vector<std::string>> table = {
      {"discrete2d", {"paths", "events", "clusters", "perms"}},
      {"lattice1d", {"paths", "hitting", "perms"}},
      {"diffusion", {"paths", "local_times", "perms"}},
      {"jumpdiffusion", {"paths", "gathers", "local_times", "perms"}},
      {"zeta_abstract", {"zeta"}}};
  return table.at(model);
}

/// Rejects invalid parameters before any computation.
inline void validate(const ExperimentConfig& c) {
  const auto& models = known_models();
  if (std::find(models.begin(), models.end(), c.model) == models.end())
    throw ConfigError("model must be one of discrete2d, lattice1d, diffusion, jumpdiffusion, zeta_abstract");
  if (c.replicas < 0) throw ConfigError("replicas must be >= 0");
  if (c.m < 1) throw ConfigError("m must be >= 1");
  if (!(c.horizon >= 0.0)) throw ConfigError("horizon must be >= 0");
  if (c.record_every < 1) throw ConfigError("record_every must be >= 1");
  if (c.max_events < 0) throw ConfigError("max_events must be >= 0");
  if (c.init != "spread" && c.init != "center" && c.init != "random" && c.init != "corners")
    throw ConfigError("init must be spread, center, random or corners");
  if (c.coupling != "sequential" && c.coupling != "fast") throw ConfigError("coupling must be sequential or fast");
  for (const auto& o : c.output_list()) {
    const auto& ok = known_outputs(c.model);
    if (std::find(ok.begin(), ok.end(), o) == ok.end())
      throw ConfigError("output '" + o + "' is not available for model " + c.model);
  }
  if (c.wants("perms") && c.m > static_cast<int>(kMaxStatsM)) throw ConfigError("perms output needs m <= 8");
  c.t_values();
  try {
    if (c.model == "discrete2d") {
      model_config(c).validate();
    } else if (c.model == "lattice1d") {
      LatticeConfig{c.N, c.m, c.p}.validate();
    } else if (c.model == "diffusion" || c.model == "jumpdiffusion") {
      if (c.width != 1.0 || c.height != 1.0)
        throw ConfigError("diffusion models live on the unit table; rescale delta instead");
      jump_config(c).validate();
    } else if (c.model == "zeta_abstract") {
      if (c.frak != 0.0 && !(c.frak > 0.0 && c.frak <= 1.0)) throw ConfigError("frak_p must lie in (0, 1]");
      if (c.frak == 0.0) frak_p(c.delta, c.p, c.sigma2);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

// ---------------------------------------------------------------------------
// Initial configurations and coupling sources

template <class URBG>
std::vector<Point2> initial_points(const ExperimentConfig& c, URBG& rng) {
  std::vector<Point2> z(static_cast<std::size_t>(c.m));
  for (int j = 0; j < c.m; ++j) {
    if (c.init == "center") {
      z[j] = {0.5 * c.width, 0.5 * c.height};
    } else if (c.init == "random") {
      z[j] = {c.width * uniform01(rng), c.height * uniform01(rng)};
    } else if (c.init == "corners") {
      z[j] = j % 2 == 0 ? Point2{0.0, 0.0} : Point2{c.width, c.height};
    } else {
      z[j] = {c.width * (j + 1.0) / (c.m + 1.0), 0.5 * c.height};
    }
  }
  return z;
}

template <class URBG>
std::vector<int> initial_sites(const ExperimentConfig& c, URBG& rng) {
  std::vector<int> s(static_cast<std::size_t>(c.m));
  std::uniform_int_distribution<int> site(1, c.N);
  for (int j = 0; j < c.m; ++j) {
    if (c.init == "center") {
      s[j] = (c.N + 1) / 2;
    } else if (c.init == "random") {
      s[j] = site(rng);
    } else if (c.init == "corners") {
      s[j] = j % 2 == 0 ? 1 : c.N;
    } else {
      s[j] = c.m == 1 ? 1 : 1 + static_cast<int>(std::lround(double(j) * (c.N - 1) / (c.m - 1)));
    }
  }
  return s;
}

/// Builds the coupling source of the configured model and hands it to fn.
template <class Fn>
void with_source(const ExperimentConfig& c, Rng& rng, Fn&& fn) {
  if (c.model == "discrete2d") {
    auto init = initial_points(c, rng);
    DiscreteSource src(model_config(c), std::move(init), Rng(rng()));
    fn(src);
  } else if (c.model == "lattice1d") {
    auto init = initial_sites(c, rng);
    LatticeSource src(LatticeConfig{c.N, c.m, c.p}, std::move(init), Rng(rng()));
    fn(src);
  } else if (c.model == "diffusion" || c.model == "jumpdiffusion") {
    auto init = initial_points(c, rng);
    DiffusionSource src(jump_config(c), init, Rng(rng()));
    fn(src);
  } else {
    throw ConfigError("model " + c.model + " has no coupling source");
  }
}

template <PointMotionSource S>
CouplingResult run_coupling(const ExperimentConfig& c, S& src, ShadowState shadow, double horizon) {
  return c.coupling == "fast" ? couple_fast(src, std::move(shadow), horizon) : couple(src, std::move(shadow), horizon);
}

// ---------------------------------------------------------------------------
// Artifacts and manifest

inline std::string sha256_hex(const std::string& data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256: digest failed");
  std::ostringstream out;
  for (unsigned i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

/// Writes `data` to path via a temporary file and rename.
inline void write_atomic(const std::filesystem::path& path, const std::string& data) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << data;
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

struct RunManifest {
  nlohmann::json doc;
  std::filesystem::path path;

  std::size_t failures() const { return doc.value("failures", nlohmann::json::array()).size(); }
};

class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void add(const std::string& name, const std::string& data) {
    std::filesystem::create_directories(dir_);
    write_atomic(dir_ / name, data);
    outputs_.push_back({{"file", name}, {"sha256", sha256_hex(data)}, {"bytes", data.size()}});
  }

  const nlohmann::json& outputs() const noexcept { return outputs_; }
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path dir_;
  nlohmann::json outputs_ = nlohmann::json::array();
};

inline std::filesystem::path resolve_out_dir(const ExperimentConfig& c) {
  return c.out_dir.empty() ? std::filesystem::path(default_out_dir()) : std::filesystem::path(c.out_dir);
}

inline RunManifest finish_manifest(const ExperimentConfig& c, const std::string& command, const ArtifactWriter& writer,
                                   const std::vector<std::string>& errors, double seconds) {
  RunManifest man;
  auto& d = man.doc;
  d["schema"] = kManifestSchema;
  d["command"] = command;
  d["code_version"] = SMOOSH_CODE_VERSION;
  d["config"] = config_entries(c);
  nlohmann::json seeds = nlohmann::json::array();
  for (std::int64_t r = 0; r < c.replicas; ++r) seeds.push_back(derive_seed(c.seed, static_cast<std::uint64_t>(r)));
  d["replica_seeds"] = std::move(seeds);
  d["wall_clock_seconds"] = seconds;
  d["outputs"] = writer.outputs();
  nlohmann::json failures = nlohmann::json::array();
  for (std::size_t r = 0; r < errors.size(); ++r)
    if (!errors[r].empty()) failures.push_back({{"replica", r}, {"error", errors[r]}});
  d["failures"] = std::move(failures);
  std::filesystem::create_directories(writer.dir());
  man.path = writer.dir() / "manifest.json";
  write_atomic(man.path, d.dump(2) + "\n");
  return man;
}

namespace detail {

struct ReplicaOutput {
  std::string paths;
  std::string events;
  std::string extra;  // hitting / gathers / zeta rows
  std::optional<Permutation> gamma;
  std::optional<DeckStatistics> stats;
  nlohmann::json summary;  // clusters or local times
};

inline std::ostringstream csv_stream() {
  std::ostringstream out;
  out << std::setprecision(17);
  return out;
}

inline void fill_gamma(ReplicaOutput& o, Permutation gamma) {
  o.stats = test_statistics(gamma, identity_permutation(gamma.size()));
  o.gamma = std::move(gamma);
}

inline ReplicaOutput run_replica(const ExperimentConfig& c, std::size_t r) {
  Rng rng = make_rng(c.seed, r);
  ReplicaOutput o;
  if (c.model == "discrete2d") {
    const auto mc = model_config(c);
    const auto init = initial_points(c, rng);
    SimulationOptions opts;
    opts.record_every = static_cast<std::size_t>(c.record_every);
    if (c.max_events > 0) opts.max_events = static_cast<std::size_t>(c.max_events);
    opts.keep_events = c.wants("events");
    const auto path = simulate(mc, init, c.horizon, rng, opts);
    const auto final = path.snapshot(path.samples() - 1);
    if (c.wants("paths")) {
      auto s = csv_stream();
      write_path_csv(s, path, r);
      o.paths = s.str();
    }
    if (c.wants("events")) {
      auto s = csv_stream();
      write_event_log(s, path.events, r);
      o.events = s.str();
    }
    if (c.wants("clusters")) {
      const auto cl = count_clusters(final, mc.table);
      o.summary = {{"replica", r},        {"time", path.times.back()}, {"clusters", cl.total},
                   {"boundary", cl.boundary}, {"largest", cl.largest},   {"singletons", cl.singletons}};
    }
    if (c.wants("perms")) fill_gamma(o, rank_to_index(final, rng));
  } else if (c.model == "lattice1d") {
    const LatticeConfig lc{c.N, c.m, c.p};
    if (c.wants("hitting")) {
      auto s = csv_stream();
      s << r << ',' << hit_time(lc, 1, c.N, rng) << '\n';
      o.extra = s.str();
    }
    if (c.wants("paths") || c.wants("perms")) {
      LatticeState st{initial_sites(c, rng), 0};
      auto s = csv_stream();
      auto record = [&] {
        for (std::size_t j = 0; j < st.positions.size(); ++j)
          s << r << ',' << st.time << ',' << j + 1 << ',' << st.positions[j] << ",0\n";
      };
      if (c.wants("paths")) record();
      const auto steps = static_cast<std::int64_t>(std::floor(c.horizon));
      while (st.time < steps) {
        lattice_step_in_place(st, rng, lc);
        if (c.wants("paths") && (st.time % c.record_every == 0 || st.time == steps)) record();
      }
      if (c.wants("paths")) o.paths = s.str();
      if (c.wants("perms")) {
        std::vector<double> xs(st.positions.begin(), st.positions.end());
        fill_gamma(o, rank_to_index(std::span<const double>(xs), rng));
      }
    }
  } else if (c.model == "diffusion" || c.model == "jumpdiffusion") {
    const auto init = initial_points(c, rng);
    JumpDiffusionOptions opts;
    opts.record_every = static_cast<std::size_t>(c.record_every);
    opts.record_path = c.wants("paths");
    const auto res = jump_diffusion_simulate(jump_config(c), init, c.horizon, rng, opts);
    if (c.wants("paths")) {
      auto s = csv_stream();
      write_path_csv(s, res.path, r);
      o.paths = s.str();
    }
    if (c.wants("gathers")) {
      auto s = csv_stream();
      write_gather_log(s, res.gathers, r);
      o.extra = s.str();
    }
    if (c.wants("local_times")) {
      o.summary = local_time_summary(res.final_state);
      o.summary["replica"] = r;
    }
    if (c.wants("perms")) fill_gamma(o, rank_to_index(res.final_state.points(), rng));
  } else if (c.model == "zeta_abstract") {
    const double f = c.frak > 0.0 ? c.frak : frak_p(c.delta, c.p, c.sigma2);
    auto s = csv_stream();
    s << r << ',' << simulate_zeta_abstract(f, rng) << '\n';
    o.extra = s.str();
  }
  return o;
}

inline nlohmann::json perm_section(const ExperimentConfig& c, const std::vector<ReplicaOutput>& outs) {
  PermSample sample(static_cast<std::size_t>(c.m));
  std::vector<DeckStatistics> stats;
  for (const auto& o : outs)
    if (o.gamma) {
      sample.add(*o.gamma);
      stats.push_back(*o.stats);
    }
  return perm_report(sample, stats);
}

}  // namespace detail

/// Runs `replicas` independent replicas of the configured model, writes the
/// requested artifacts in replica order and the manifest.
inline RunManifest run(const ExperimentConfig& c) {
  validate(c);
  const auto t0 = std::chrono::steady_clock::now();
  const auto n = static_cast<std::size_t>(c.replicas);
  std::vector<detail::ReplicaOutput> outs(n);
  const auto errors = parallel_replicas(n, c.threads, [&](std::size_t r) { outs[r] = detail::run_replica(c, r); });
  ArtifactWriter writer(resolve_out_dir(c));
  if (n > 0) {
    auto concat = [&](const std::string& header, std::string detail::ReplicaOutput::*member) {
      std::string s = header;
      for (std::size_t r = 0; r < n; ++r)
        if (errors[r].empty()) s += outs[r].*member;
      return s;
    };
    if (c.wants("paths")) writer.add("paths.csv", concat("replica,time,card,x,y\n", &detail::ReplicaOutput::paths));
    if (c.wants("events"))
      writer.add("events.csv", concat("replica,time,wx,wy,theta,gather,coins\n", &detail::ReplicaOutput::events));
    if (c.wants("hitting")) writer.add("hitting.csv", concat("replica,steps\n", &detail::ReplicaOutput::extra));
    if (c.wants("gathers"))
      writer.add("gathers.csv", concat("replica,epoch_time,wx,wy,captured_mask\n", &detail::ReplicaOutput::extra));
    if (c.wants("zeta")) writer.add("zeta.csv", concat("replica,zeta\n", &detail::ReplicaOutput::extra));
    auto summaries = [&] {
      nlohmann::json arr = nlohmann::json::array();
      for (std::size_t r = 0; r < n; ++r)
        if (errors[r].empty()) arr.push_back(outs[r].summary);
      return arr;
    };
    if (c.wants("clusters")) {
      const auto arr = summaries();
      double total = 0, boundary = 0;
      for (const auto& s : arr) {
        total += s["clusters"].get<double>();
        boundary += s["boundary"].get<double>();
      }
      nlohmann::json doc{{"replicas", arr}};
      if (!arr.empty()) doc["mean"] = {{"clusters", total / arr.size()}, {"boundary", boundary / arr.size()}};
      writer.add("clusters.json", doc.dump(2) + "\n");
    }
    if (c.wants("local_times")) writer.add("local_times.json", summaries().dump(2) + "\n");
    if (c.wants("perms")) writer.add("perms.json", detail::perm_section(c, outs).dump(2) + "\n");
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return finish_manifest(c, "simulate", writer, errors, secs);
}

/// Coupling runs: per replica a uniform shadow permutation and the chosen
/// variant up to the horizon; writes coupling.csv and coupling_summary.json.
inline RunManifest run_couple(const ExperimentConfig& c) {
  validate(c);
  if (c.model == "zeta_abstract") throw ConfigError("couple needs a motion model");
  const auto t0 = std::chrono::steady_clock::now();
  const auto n = static_cast<std::size_t>(c.replicas);
  std::vector<std::optional<CouplingResult>> results(n);
  const auto errors = parallel_replicas(n, c.threads, [&](std::size_t r) {
    Rng rng = make_rng(c.seed, r);
    auto shadow = init_shadow(static_cast<std::size_t>(c.m), rng);
    with_source(c, rng, [&](auto& src) { results[r] = run_coupling(c, src, std::move(shadow), c.horizon); });
  });
  ArtifactWriter writer(resolve_out_dir(c));
  if (n > 0) {
    std::vector<CouplingResult> ok;
    for (std::size_t r = 0; r < n; ++r)
      if (errors[r].empty()) ok.push_back(*results[r]);
    auto s = detail::csv_stream();
    write_coupling_csv(s, ok);
    writer.add("coupling.csv", s.str());
    auto summary = coupling_summary(ok);
    summary["variant"] = c.coupling;
    summary["horizon"] = c.horizon;
    writer.add("coupling_summary.json", summary.dump(2) + "\n");
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return finish_manifest(c, "couple", writer, errors, secs);
}

struct MixingPoint {
  double t = 0.0;
  double tv = 0.0;
  double tv_se = 0.0;
  double p_tau_gt_t = 0.0;
  double p_tau_se = 0.0;
};

/// For each t: TV of gamma(t) from fresh runs to time t, and P(tau(m) > t)
/// from an independent set of coupling runs to max(t_grid).
inline std::vector<MixingPoint> mixing_curve(const ExperimentConfig& c, const std::vector<double>& t_grid) {
  validate(c);
  if (c.m > 6) throw ConfigError("mixing-curve needs m <= 6");
  if (c.model == "zeta_abstract") throw ConfigError("mixing-curve needs a motion model");
  const auto n = static_cast<std::size_t>(c.replicas);
  std::vector<MixingPoint> out;
  if (t_grid.empty() || n == 0) return out;
  const double t_max = *std::max_element(t_grid.begin(), t_grid.end());

  std::vector<double> tau(n, std::numeric_limits<double>::infinity());
  auto check = [](const std::vector<std::string>& errs) {
    for (const auto& e : errs)
      if (!e.empty()) throw std::runtime_error("mixing-curve replica failed: " + e);
  };
  const std::uint64_t coupling_master = derive_seed(c.seed, 0xc0c0c0c0ULL);
  check(parallel_replicas(n, c.threads, [&](std::size_t r) {
    Rng rng = make_rng(coupling_master, r);
    auto shadow = init_shadow(static_cast<std::size_t>(c.m), rng);
    with_source(c, rng, [&](auto& src) {
      const auto res = run_coupling(c, src, std::move(shadow), t_max);
      if (res.terminal) tau[r] = res.tau_m();
    });
  }));

  for (std::size_t g = 0; g < t_grid.size(); ++g) {
    const double t = t_grid[g];
    std::vector<Permutation> gammas(n);
    const std::uint64_t master = derive_seed(c.seed, g + 1);
    check(parallel_replicas(n, c.threads, [&](std::size_t r) {
      Rng rng = make_rng(master, r);
      with_source(c, rng, [&](auto& src) {
        advance_until(src, t);
        gammas[r] = rank_to_index(std::span<const double>(x_coordinates(src)), rng);
      });
    }));
    PermSample sample(static_cast<std::size_t>(c.m));
    for (const auto& gm : gammas) sample.add(gm);
    const auto tv = tv_to_uniform(sample, 200, derive_seed(c.seed, 1000 + g));
    MixingPoint pt;
    pt.t = t;
    pt.tv = tv.estimate;
    pt.tv_se = tv.std_error;
    const auto exceed = std::count_if(tau.begin(), tau.end(), [t](double x) { return x > t; });
    pt.p_tau_gt_t = static_cast<double>(exceed) / static_cast<double>(n);
    pt.p_tau_se = std::sqrt(pt.p_tau_gt_t * (1.0 - pt.p_tau_gt_t) / static_cast<double>(n));
    out.push_back(pt);
  }
  return out;
}

inline std::string mixing_curve_csv(const std::vector<MixingPoint>& pts) {
  auto s = detail::csv_stream();
  s << "t,tv,tv_se,p_tau_gt_t\n";
  for (const auto& p : pts) s << p.t << ',' << p.tv << ',' << p.tv_se << ',' << p.p_tau_gt_t << '\n';
  return s.str();
}

inline RunManifest run_mixing_curve(const ExperimentConfig& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto pts = mixing_curve(c, c.t_values());
  ArtifactWriter writer(resolve_out_dir(c));
  if (c.replicas > 0) writer.add("mixing_curve.csv", mixing_curve_csv(pts));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return finish_manifest(c, "mixing-curve", writer, {}, secs);
}

}  // namespace smoosh
