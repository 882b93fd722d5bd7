#pragma once

// Config-driven replicated experiments: particle initialization, distance
// metrics, cross-run medians and deterministic CSV artifacts.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mfl/csv.hpp"
#include "mfl/dynamics.hpp"
#include "mfl/linalg.hpp"
#include "mfl/objectives.hpp"
#include "mfl/random.hpp"
#include "mfl/resnet.hpp"

namespace mfl::harness {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ExperimentKind { langevin, ellipse };

struct EllipseSettings {
  resnet::Scheme scheme = resnet::Scheme::verlet;
  std::size_t layers = 128;
  double net_step = 0.05;
  std::size_t n_per_class = 500;
  double noise_sigma = 0.05;
  double train_fraction = 0.8;
  std::size_t epochs = 100;
  std::size_t steps_per_epoch = 1;
  double init_scale = 0.1;
  double grid_x_lo = -2.0;
  double grid_x_hi = 2.0;
  double grid_y_lo = -4.0;
  double grid_y_hi = 4.0;
  std::size_t grid_resolution = 101;

  friend bool operator==(const EllipseSettings&, const EllipseSettings&) = default;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::langevin;
  Method method = Method::sgld;
  std::string objective = "camel6";
  std::size_t dim = 0;
  std::map<std::string, double> objective_params;
  HyperParams hp;
  std::size_t runs = 1;
  std::uint64_t seed = 0;
  Vector init_lo{-2.0};
  Vector init_hi{2.0};
  std::optional<bool> record_traces;
  std::string out_dir = "out";
  EllipseSettings ellipse;

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    auto hp_tuple = [](const HyperParams& h) {
      return std::tie(h.beta, h.lambda, h.gamma, h.epsilon, h.outer_dt, h.inner_dt, h.inner_steps,
                      h.burn_in, h.agents, h.iterations, h.smoothing_h, h.smoothing_samples);
    };
    return a.kind == b.kind && a.method == b.method && a.objective == b.objective &&
           a.dim == b.dim && a.objective_params == b.objective_params &&
           hp_tuple(a.hp) == hp_tuple(b.hp) && a.runs == b.runs && a.seed == b.seed &&
           a.init_lo == b.init_lo && a.init_hi == b.init_hi &&
           a.record_traces == b.record_traces && a.out_dir == b.out_dir &&
           a.ellipse == b.ellipse;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double to_real(const std::string& key, const std::string& v) {
  try {
    return parse_real(v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a real number, got '" + v + "'");
  }
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

inline Vector to_reals(const std::string& key, const std::string& v) {
  Vector out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_real(key, trim(item)));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

inline std::string from_reals(const Vector& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += format_real(v[i]);
  }
  return s;
}

struct KeySpec {
  std::string name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::optional<std::string>(const ExperimentConfig&)> get;
};

template <typename T>
std::function<std::optional<std::string>(const ExperimentConfig&)> always(T fn) {
  return [fn](const ExperimentConfig& c) -> std::optional<std::string> { return fn(c); };
}

#define MFL_REAL_KEY(name, member)                                                    \
  KeySpec{name, [](ExperimentConfig& c, const std::string& v) { c.member = to_real(name, v); }, \
          always([](const ExperimentConfig& c) { return format_real(c.member); })}
#define MFL_UINT_KEY(name, member)                                                     \
  KeySpec{name,                                                                        \
          [](ExperimentConfig& c, const std::string& v) {                              \
            c.member = static_cast<decltype(c.member)>(to_uint(name, v));              \
          },                                                                           \
          always([](const ExperimentConfig& c) { return std::to_string(c.member); })}

inline std::optional<std::string> objective_param(const ExperimentConfig& c, const char* name) {
  const auto it = c.objective_params.find(name);
  if (it == c.objective_params.end()) return std::nullopt;
  return format_real(it->second);
}

inline const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs = {
      {"experiment",
       [](ExperimentConfig& c, const std::string& v) {
         if (v == "langevin") c.kind = ExperimentKind::langevin;
         else if (v == "ellipse") c.kind = ExperimentKind::ellipse;
         else throw ConfigError("config key 'experiment': expected langevin or ellipse");
       },
       always([](const ExperimentConfig& c) {
         return std::string(c.kind == ExperimentKind::langevin ? "langevin" : "ellipse");
       })},
      {"method",
       [](ExperimentConfig& c, const std::string& v) {
         try {
           c.method = parse_method(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(e.what());
         }
       },
       always([](const ExperimentConfig& c) { return std::string(to_string(c.method)); })},
      {"objective", [](ExperimentConfig& c, const std::string& v) { c.objective = v; },
       always([](const ExperimentConfig& c) { return c.objective; })},
      MFL_UINT_KEY("dim", dim),
      {"osc_delta",
       [](ExperimentConfig& c, const std::string& v) {
         c.objective_params["osc_delta"] = to_real("osc_delta", v);
       },
       [](const ExperimentConfig& c) { return objective_param(c, "osc_delta"); }},
      {"curvature",
       [](ExperimentConfig& c, const std::string& v) {
         c.objective_params["curvature"] = to_real("curvature", v);
       },
       [](const ExperimentConfig& c) { return objective_param(c, "curvature"); }},
      MFL_REAL_KEY("beta", hp.beta),
      MFL_REAL_KEY("lambda", hp.lambda),
      MFL_REAL_KEY("gamma", hp.gamma),
      MFL_REAL_KEY("epsilon", hp.epsilon),
      MFL_REAL_KEY("outer_dt", hp.outer_dt),
      {"inner_dt",
       [](ExperimentConfig& c, const std::string& v) { c.hp.inner_dt = to_real("inner_dt", v); },
       [](const ExperimentConfig& c) -> std::optional<std::string> {
         if (!c.hp.inner_dt) return std::nullopt;
         return format_real(*c.hp.inner_dt);
       }},
      MFL_UINT_KEY("M", hp.inner_steps),
      MFL_UINT_KEY("m_prime", hp.burn_in),
      MFL_UINT_KEY("N", hp.agents),
      MFL_UINT_KEY("iters", hp.iterations),
      MFL_REAL_KEY("smoothing_h", hp.smoothing_h),
      MFL_UINT_KEY("smoothing_samples", hp.smoothing_samples),
      MFL_UINT_KEY("runs", runs),
      MFL_UINT_KEY("seed", seed),
      {"init_lo", [](ExperimentConfig& c, const std::string& v) { c.init_lo = to_reals("init_lo", v); },
       always([](const ExperimentConfig& c) { return from_reals(c.init_lo); })},
      {"init_hi", [](ExperimentConfig& c, const std::string& v) { c.init_hi = to_reals("init_hi", v); },
       always([](const ExperimentConfig& c) { return from_reals(c.init_hi); })},
      {"record_traces",
       [](ExperimentConfig& c, const std::string& v) { c.record_traces = to_bool("record_traces", v); },
       [](const ExperimentConfig& c) -> std::optional<std::string> {
         if (!c.record_traces) return std::nullopt;
         return std::string(*c.record_traces ? "true" : "false");
       }},
      {"out", [](ExperimentConfig& c, const std::string& v) { c.out_dir = v; },
       always([](const ExperimentConfig& c) { return c.out_dir; })},
      {"scheme",
       [](ExperimentConfig& c, const std::string& v) {
         try {
           c.ellipse.scheme = resnet::parse_scheme(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(e.what());
         }
       },
       always([](const ExperimentConfig& c) { return std::string(resnet::to_string(c.ellipse.scheme)); })},
      MFL_UINT_KEY("layers", ellipse.layers),
      MFL_REAL_KEY("net_step", ellipse.net_step),
      MFL_UINT_KEY("n_per_class", ellipse.n_per_class),
      MFL_REAL_KEY("noise_sigma", ellipse.noise_sigma),
      MFL_REAL_KEY("train_fraction", ellipse.train_fraction),
      MFL_UINT_KEY("epochs", ellipse.epochs),
      MFL_UINT_KEY("steps_per_epoch", ellipse.steps_per_epoch),
      MFL_REAL_KEY("init_scale", ellipse.init_scale),
      MFL_REAL_KEY("grid_x_lo", ellipse.grid_x_lo),
      MFL_REAL_KEY("grid_x_hi", ellipse.grid_x_hi),
      MFL_REAL_KEY("grid_y_lo", ellipse.grid_y_lo),
      MFL_REAL_KEY("grid_y_hi", ellipse.grid_y_hi),
      MFL_UINT_KEY("grid_resolution", ellipse.grid_resolution),
  };
  return specs;
}

#undef MFL_REAL_KEY
#undef MFL_UINT_KEY

inline const KeySpec* find_key(const std::string& name) {
  for (const auto& k : key_specs())
    if (k.name == name) return &k;
  return nullptr;
}

inline bool is_ellipse_key(const std::string& name) {
  static const std::vector<std::string> keys = {
      "scheme",     "layers",    "net_step",  "n_per_class", "noise_sigma",
      "train_fraction", "epochs", "steps_per_epoch", "init_scale", "grid_x_lo",
      "grid_x_hi",  "grid_y_lo", "grid_y_hi", "grid_resolution"};
  return std::find(keys.begin(), keys.end(), name) != keys.end();
}

inline bool is_langevin_only_key(const std::string& name) {
  static const std::vector<std::string> keys = {"objective", "dim",     "osc_delta",
                                                "curvature", "init_lo", "init_hi",
                                                "record_traces", "runs", "iters"};
  return std::find(keys.begin(), keys.end(), name) != keys.end();
}

}  // namespace detail

/// Applies one `key = value` assignment; unknown keys are rejected.
inline void set_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const auto* spec = detail::find_key(key);
  if (!spec) throw ConfigError("unknown config key: '" + key + "'");
  spec->set(cfg, value);
}

/// Checks cross-key constraints. Throws ConfigError.
inline void validate(const ExperimentConfig& cfg) {
  try {
    (void)cfg.hp.validated();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (cfg.kind == ExperimentKind::ellipse) {
    if (cfg.method == Method::smoothed_gd && cfg.hp.smoothing_samples == 0)
      throw ConfigError("smoothing_samples must be positive");
    if (cfg.ellipse.epochs == 0) throw ConfigError("epochs must be positive");
    if (cfg.ellipse.steps_per_epoch == 0) throw ConfigError("steps_per_epoch must be positive");
    if (cfg.ellipse.grid_resolution < 2) throw ConfigError("grid_resolution must be >= 2");
    if (cfg.ellipse.layers == 0) throw ConfigError("layers must be positive");
    return;
  }
  if (cfg.runs == 0) throw ConfigError("runs must be positive");
  std::unique_ptr<Objective> f;
  try {
    f = make_objective(cfg.objective, cfg.dim, cfg.objective_params);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (f->known_minimizers().empty())
    throw ConfigError("objective '" + cfg.objective + "' has no known minimizers for metrics");
  const std::size_t d = f->dimension();
  for (const Vector* box : {&cfg.init_lo, &cfg.init_hi})
    if (box->size() != 1 && box->size() != d)
      throw ConfigError("init box must have 1 or " + std::to_string(d) + " entries");
  for (std::size_t k = 0; k < d; ++k) {
    const double lo = cfg.init_lo.size() == 1 ? cfg.init_lo[0] : cfg.init_lo[k];
    const double hi = cfg.init_hi.size() == 1 ? cfg.init_hi[0] : cfg.init_hi[k];
    if (!(lo <= hi)) throw ConfigError("init box: lo exceeds hi on axis " + std::to_string(k));
  }
}

/// Parses the key = value format. '#' starts a comment; blank lines are
/// ignored; duplicate keys are an error.
inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::map<std::string, std::size_t> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(body.substr(0, eq));
    const std::string value = detail::trim(body.substr(eq + 1));
    if (seen.count(key))
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    seen[key] = lineno;
    try {
      set_key(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  const bool ellipse = cfg.kind == ExperimentKind::ellipse;
  const std::vector<std::string> required =
      ellipse ? std::vector<std::string>{"method", "scheme", "beta", "outer_dt", "epochs", "seed"}
              : std::vector<std::string>{"method", "objective", "beta", "outer_dt", "N", "iters",
                                         "seed"};
  for (const auto& key : required)
    if (!seen.count(key)) throw ConfigError("missing required key: '" + key + "'");
  for (const auto& [key, line_no] : seen) {
    if (!ellipse && detail::is_ellipse_key(key))
      throw ConfigError("line " + std::to_string(line_no) + ": key '" + key +
                        "' only applies to ellipse experiments");
    if (ellipse && detail::is_langevin_only_key(key))
      throw ConfigError("line " + std::to_string(line_no) + ": key '" + key +
                        "' does not apply to ellipse experiments");
  }
  validate(cfg);
  return cfg;
}

/// Canonical text form; parse_config(serialize(c)) == c.
inline std::string serialize(const ExperimentConfig& cfg) {
  const bool ellipse = cfg.kind == ExperimentKind::ellipse;
  std::string out;
  for (const auto& spec : detail::key_specs()) {
    if (!ellipse && detail::is_ellipse_key(spec.name)) continue;
    if (ellipse && detail::is_langevin_only_key(spec.name)) continue;
    if (const auto v = spec.get(cfg)) out += spec.name + " = " + *v + "\n";
  }
  return out;
}

inline bool traces_enabled(const ExperimentConfig& cfg, std::size_t dim) {
  return cfg.record_traces.value_or(dim <= 2);
}

/// N i.i.d. uniform draws from the init box on the run's substreams;
/// Y := X for homogenized methods.
inline ParticleSystem init_particles(const ExperimentConfig& cfg, std::uint32_t run,
                                     std::size_t dim) {
  for (const Vector* box : {&cfg.init_lo, &cfg.init_hi})
    if (box->size() != 1 && box->size() != dim) throw ConfigError("init box: malformed bounds");
  const NoiseStream noise(cfg.seed);
  AgentMatrix X(cfg.hp.agents, dim);
  Vector u(dim);
  for (std::size_t i = 0; i < cfg.hp.agents; ++i) {
    noise.uniform(Purpose::init, {run, static_cast<std::uint32_t>(i)}, 0, 0, u);
    for (std::size_t k = 0; k < dim; ++k) {
      const double lo = cfg.init_lo.size() == 1 ? cfg.init_lo[0] : cfg.init_lo[k];
      const double hi = cfg.init_hi.size() == 1 ? cfg.init_hi[0] : cfg.init_hi[k];
      if (!(lo <= hi)) throw ConfigError("init box: lo exceeds hi");
      X(i, k) = lo + (hi - lo) * u[k];
    }
  }
  ParticleSystem sys(std::move(X), run);
  if (is_homogenized(cfg.method)) sys.init_fast();
  return sys;
}

struct DistancePair {
  double best = 0.0;
  double worst = 0.0;
};

/// Per agent, Euclidean distance to the nearest known minimizer; best and
/// worst over agents.
inline DistancePair distance_metrics(const AgentMatrix& X, const std::vector<Vector>& minimizers) {
  if (minimizers.empty()) throw std::invalid_argument("distance_metrics: no minimizers");
  DistancePair out{std::numeric_limits<double>::infinity(), 0.0};
  for (std::size_t i = 0; i < X.rows(); ++i) {
    double nearest = std::numeric_limits<double>::infinity();
    for (const auto& m : minimizers) nearest = std::min(nearest, euclidean_distance(X.row(i), m));
    out.best = std::min(out.best, nearest);
    out.worst = std::max(out.worst, nearest);
  }
  return out;
}

struct MetricRow {
  std::size_t iter = 0;
  double best = 0.0;
  double worst = 0.0;
};

struct SummaryRow {
  std::size_t iter = 0;
  double median_best = 0.0;
  double median_worst = 0.0;
};

/// Median with the even-count convention (mean of the two central values).
inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median: empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Per-iteration medians across runs. All runs must cover the same iterations.
inline std::vector<SummaryRow> summarize(const std::vector<std::vector<MetricRow>>& runs) {
  std::vector<SummaryRow> out;
  if (runs.empty()) return out;
  const std::size_t n = runs.front().size();
  for (const auto& r : runs)
    if (r.size() != n) throw std::invalid_argument("summarize: runs have different lengths");
  std::vector<double> best(runs.size()), worst(runs.size());
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t r = 0; r < runs.size(); ++r) {
      if (runs[r][t].iter != runs.front()[t].iter)
        throw std::invalid_argument("summarize: iteration indices differ across runs");
      best[r] = runs[r][t].best;
      worst[r] = runs[r][t].worst;
    }
    out.push_back({runs.front()[t].iter, median(best), median(worst)});
  }
  return out;
}

struct RunFailure {
  std::size_t run = 0;
  std::size_t iteration = 0;
  std::string message;
};

struct RunArtifacts {
  std::string traces_csv;  ///< empty when traces are disabled
  std::string metrics_csv;
  std::string summary_csv;
  std::string failures_csv;
  std::string config_txt;
  std::vector<std::vector<MetricRow>> metrics;  ///< per run, partial for failed runs
  std::vector<SummaryRow> summary;              ///< over completed runs only
  std::vector<RunFailure> failures;
  std::vector<ParticleSystem> finals;           ///< last state per run (failed: pre-abort state)

  bool ok() const noexcept { return failures.empty(); }
};

/// Runs fn(i) for i in [0, count) on up to `workers` threads. The first
/// exception is rethrown after all workers finish.
inline void parallel_for(std::size_t count, std::size_t workers,
                         const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
  }
  if (error) std::rethrow_exception(error);
}

namespace detail {

struct SingleRun {
  std::vector<MetricRow> metrics;
  std::string traces;
  std::optional<RunFailure> failure;
  ParticleSystem final_state;
};

inline SingleRun execute_run(const ExperimentConfig& cfg, const Objective& f, std::uint32_t run) {
  SingleRun out;
  const auto minimizers = f.known_minimizers();
  const bool traces = traces_enabled(cfg, f.dimension());
  std::vector<std::string> agent_rows(cfg.hp.agents);
  ParticleSystem last;
  const TraceSink sink = [&](const ParticleSystem& sys) {
    last = sys;
    if (traces) {
      for (std::size_t i = 0; i < sys.agents(); ++i) {
        CsvRow row(agent_rows[i]);
        row << static_cast<std::size_t>(run) << i << sys.iter;
        for (double v : sys.X.row(i)) row << v;
      }
    }
    if (sys.iter > 0) {
      const auto d = distance_metrics(sys.X, minimizers);
      out.metrics.push_back({sys.iter, d.best, d.worst});
    }
  };
  const NoiseStream noise(cfg.seed);
  try {
    out.final_state = run_method(cfg.method, f, cfg.hp, noise,
                                 init_particles(cfg, run, f.dimension()), sink);
  } catch (const NumericalAbort& e) {
    out.failure = RunFailure{run, e.iteration(), e.what()};
    out.final_state = last;
  }
  for (const auto& rows : agent_rows) out.traces += rows;
  return out;
}

}  // namespace detail

/// R independent runs over a worker pool; artifacts are assembled in run
/// order, so the bytes do not depend on the worker count. A numerical abort
/// is recorded and the remaining runs still complete.
inline RunArtifacts run_experiment(const ExperimentConfig& cfg, std::size_t workers = 1) {
  if (cfg.kind != ExperimentKind::langevin)
    throw ConfigError("run_experiment: not a langevin experiment");
  validate(cfg);
  const auto f = make_objective(cfg.objective, cfg.dim, cfg.objective_params);
  if (cfg.runs > NoiseStream::kMaxRun) throw ConfigError("too many runs");
  std::vector<detail::SingleRun> results(cfg.runs);
  parallel_for(cfg.runs, workers, [&](std::size_t r) {
    results[r] = detail::execute_run(cfg, *f, static_cast<std::uint32_t>(r));
  });

  RunArtifacts art;
  art.config_txt = serialize(cfg);
  const bool traces = traces_enabled(cfg, f->dimension());
  if (traces) {
    art.traces_csv = "run,agent,iter";
    for (std::size_t k = 0; k < f->dimension(); ++k) art.traces_csv += ",x" + std::to_string(k);
    art.traces_csv += '\n';
  }
  art.metrics_csv = "run,iter,best_dist,worst_dist\n";
  art.failures_csv = "run,iter,message\n";
  std::vector<std::vector<MetricRow>> completed;
  for (std::size_t r = 0; r < results.size(); ++r) {
    auto& res = results[r];
    if (traces) art.traces_csv += res.traces;
    for (const auto& m : res.metrics) CsvRow(art.metrics_csv) << r << m.iter << m.best << m.worst;
    if (res.failure) {
      std::string msg = res.failure->message;
      std::replace(msg.begin(), msg.end(), ',', ';');
      CsvRow(art.failures_csv) << r << res.failure->iteration << msg;
      art.failures.push_back(*res.failure);
    } else {
      completed.push_back(res.metrics);
    }
    art.metrics.push_back(std::move(res.metrics));
    art.finals.push_back(std::move(res.final_state));
  }
  art.summary = summarize(completed);
  art.summary_csv = "iter,median_best,median_worst\n";
  for (const auto& s : art.summary) CsvRow(art.summary_csv) << s.iter << s.median_best << s.median_worst;
  return art;
}

inline void write_artifacts(const RunArtifacts& art, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path p(dir);
  if (!art.traces_csv.empty()) write_file((p / "traces.csv").string(), art.traces_csv);
  write_file((p / "metrics.csv").string(), art.metrics_csv);
  write_file((p / "summary.csv").string(), art.summary_csv);
  write_file((p / "failures.csv").string(), art.failures_csv);
  write_file((p / "config.txt").string(), art.config_txt);
}

// Ellipse experiment ---------------------------------------------------------

inline std::string dataset_csv(const resnet::EllipseDataset& ds) {
  std::string out = "x,y,label,split\n";
  for (std::size_t i = 0; i < ds.size(); ++i)
    CsvRow(out) << ds.points[i][0] << ds.points[i][1] << ds.labels[i]
                << std::string_view(ds.train[i] ? "train" : "test");
  return out;
}

inline resnet::EllipseDataset parse_dataset_csv(std::string_view text) {
  resnet::EllipseDataset ds;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "x,y,label,split")
    throw std::invalid_argument("dataset csv: expected header x,y,label,split");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(detail::trim(cell));
    if (cells.size() != 4) throw std::invalid_argument("dataset csv line " + std::to_string(lineno) + ": expected 4 columns");
    ds.points.push_back({parse_real(cells[0]), parse_real(cells[1])});
    if (cells[2] != "0" && cells[2] != "1")
      throw std::invalid_argument("dataset csv line " + std::to_string(lineno) + ": label must be 0 or 1");
    ds.labels.push_back(cells[2] == "1");
    if (cells[3] != "train" && cells[3] != "test")
      throw std::invalid_argument("dataset csv line " + std::to_string(lineno) + ": split must be train or test");
    ds.train.push_back(cells[3] == "train");
  }
  return ds;
}

inline std::string grid_csv(const resnet::ProbabilityGrid& g) {
  std::string out = "x,y,prob\n";
  for (std::size_t i = 0; i < g.xs.n; ++i)
    for (std::size_t j = 0; j < g.ys.n; ++j) CsvRow(out) << g.xs.point(i) << g.ys.point(j) << g.at(i, j);
  return out;
}

inline std::string loss_csv(const std::vector<resnet::EpochRecord>& curve) {
  std::string out = "epoch,train_loss,test_acc\n";
  for (const auto& r : curve) CsvRow(out) << r.epoch << r.train_loss << r.test_acc;
  return out;
}

/// Parameter file: a header line with the architecture descriptor, then one
/// value per line.
inline std::string params_txt(const resnet::VerletNet& net) {
  std::string out = "# " + net.arch.descriptor() + "\n";
  for (double v : net.params) out += format_real(v) + "\n";
  return out;
}

inline resnet::VerletNet parse_params_txt(std::string_view text, const resnet::Architecture& arch) {
  resnet::VerletNet net = resnet::VerletNet::build(arch, 0);
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t k = 0;
  while (std::getline(in, line)) {
    const std::string body = detail::trim(line);
    if (body.empty() || body[0] == '#') continue;
    if (k >= net.params.size()) throw std::invalid_argument("params file: too many values");
    net.params[k++] = parse_real(body);
  }
  if (k != net.params.size())
    throw std::invalid_argument("params file: expected " + std::to_string(net.params.size()) +
                                " values, got " + std::to_string(k));
  return net;
}

inline resnet::Architecture architecture(const ExperimentConfig& cfg) {
  return {cfg.ellipse.layers, cfg.ellipse.net_step, cfg.ellipse.scheme};
}

inline resnet::EllipseOptions ellipse_options(const ExperimentConfig& cfg) {
  resnet::EllipseOptions opt;
  opt.n_per_class = cfg.ellipse.n_per_class;
  opt.noise_sigma = cfg.ellipse.noise_sigma;
  opt.train_fraction = cfg.ellipse.train_fraction;
  return opt;
}

struct EllipseArtifacts {
  std::string dataset_csv;
  std::string loss_csv;
  std::string grid_csv;
  std::string params_txt;
  std::string config_txt;
  std::string failures_csv;
  resnet::TrainResult result;
  std::optional<RunFailure> failure;
};

inline EllipseArtifacts run_ellipse(const ExperimentConfig& cfg) {
  if (cfg.kind != ExperimentKind::ellipse) throw ConfigError("run_ellipse: not an ellipse experiment");
  validate(cfg);
  EllipseArtifacts art;
  art.config_txt = serialize(cfg);
  const auto ds = resnet::generate_ellipses(ellipse_options(cfg), cfg.seed);
  art.dataset_csv = dataset_csv(ds);
  art.failures_csv = "run,iter,message\n";
  resnet::TrainOptions opt;
  opt.epochs = cfg.ellipse.epochs;
  opt.steps_per_epoch = cfg.ellipse.steps_per_epoch;
  opt.init_scale = cfg.ellipse.init_scale;
  try {
    art.result = resnet::train(ds, architecture(cfg), cfg.method, cfg.hp, cfg.seed, opt);
  } catch (const NumericalAbort& e) {
    art.failure = RunFailure{0, e.iteration(), e.what()};
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), ',', ';');
    CsvRow(art.failures_csv) << std::size_t{0} << e.iteration() << msg;
    return art;
  }
  art.loss_csv = loss_csv(art.result.curve);
  art.params_txt = params_txt(art.result.net);
  art.grid_csv = grid_csv(resnet::probability_grid(
      art.result.net, {cfg.ellipse.grid_x_lo, cfg.ellipse.grid_x_hi},
      {cfg.ellipse.grid_y_lo, cfg.ellipse.grid_y_hi}, cfg.ellipse.grid_resolution));
  return art;
}

inline void write_artifacts(const EllipseArtifacts& art, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path p(dir);
  write_file((p / "dataset.csv").string(), art.dataset_csv);
  if (!art.loss_csv.empty()) write_file((p / "loss.csv").string(), art.loss_csv);
  if (!art.grid_csv.empty()) write_file((p / "grid.csv").string(), art.grid_csv);
  if (!art.params_txt.empty()) write_file((p / "params.txt").string(), art.params_txt);
  write_file((p / "failures.csv").string(), art.failures_csv);
  write_file((p / "config.txt").string(), art.config_txt);
}

}  // namespace mfl::harness
