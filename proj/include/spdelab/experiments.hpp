#pragma once

// JSON experiment configurations, their validation, and the experiment
// drivers behind the command line tool. Every driver returns a Result that
// the caller serializes; nothing here touches the file system.

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spdelab/catalog.hpp"
#include "spdelab/fem.hpp"
#include "spdelab/limit_law.hpp"
#include "spdelab/stats.hpp"

namespace spdelab {

using json = nlohmann::json;

/// Malformed or unreadable configuration (wrong types, unknown keys).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A well-formed configuration that violates a constraint of the experiment.
class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"strong-order",        "sode-limit", "she-limit-point",
                                              "galerkin-decay",      "galerkin-normalized",
                                              "fem-rate",            "fem-full",   "check-conditions"};
  return names;
}

struct ProblemConfig {
  Index K = 64;
  double T = 1.0;
  std::vector<double> x0_modes{1.0, 0.2};
  std::optional<double> x0_borderline_gamma;
  std::string drift = "sin";
  std::string diffusion = "affine";
  ParamMap diffusion_params{{"a1", 0.5}, {"a2", 1.0}};
  AnalysisParams analysis;
  bool dealias = false;
};

struct NoiseConfig {
  std::string q = "exponential";
  double rate = 0.1;
  double rho = 2.0;
  double scale = 1.0;
  std::vector<double> values;
  Index K_noise = 0;  // 0: same as K
  std::optional<std::uint64_t> seed;
};

struct RunConfig {
  std::vector<Index> m;
  Index m_ref = 0;
  std::size_t samples = 0;
  double r = 0.0;
  Index L = 0;
  Index m_sim = 0;
  Index m_x = 0;
  std::optional<double> t_eval;
  double x_eval = 0.5;
  std::vector<Index> N;
  Index m_fine = 4096;
  std::vector<double> gamma{1.0, 2.0};
  long n_max = 10000000;
  std::vector<Index> cells;
  double t = 0.1;
  std::string mode;
  double iota = 0.75;
  std::vector<Index> meshes;
  std::string scheme = "factored";
  std::string baseline_diffusion;
  ParamMap baseline_params;
  double max_abort_fraction = 1e-3;
  std::string out;
};

struct SodeConfig {
  double lambda = -1.0;
  double mu = 0.5;
  double y0 = 1.0;
  double T = 1.0;
  Index m = 4096;
  Index m_sim = 8192;
  std::size_t samples = 10000;
};

struct Interval {
  std::optional<double> lo;
  std::optional<double> hi;
};

struct ExperimentConfig {
  std::string experiment;
  ProblemConfig problem;
  NoiseConfig noise;
  RunConfig run;
  SodeConfig sode;
  std::map<std::string, Interval> tolerances;
  json raw;
};

namespace detail {

// Typed access to one JSON object; unknown keys are reported by finish().
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  void read(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    out = convert<T>(j_.at(key), path_ + "." + key);
  }

  template <class T>
  void read(const std::string& key, std::optional<T>& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    out = convert<T>(j_.at(key), path_ + "." + key);
  }

  Section sub(const std::string& key) {
    seen_.insert(key);
    return Section(j_.at(key), path_ + "." + key);
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) throw ConfigError(path_ + ": unknown key '" + item.key() + "'");
  }

  template <class T>
  static T convert(const json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where + ": expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where + ": expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_integral_v<T>) {
      if (v.is_number_integer()) {
        if constexpr (std::is_unsigned_v<T>)
          if (v.get<long long>() < 0) throw ConfigError(where + ": expected a nonnegative integer");
        return v.get<T>();
      }
      if (v.is_number_float()) {
        const double d = v.get<double>();
        if (std::nearbyint(d) == d && std::abs(d) < 9.0e15) {
          if (std::is_unsigned_v<T> && d < 0.0) throw ConfigError(where + ": expected a nonnegative integer");
          return static_cast<T>(d);
        }
      }
      throw ConfigError(where + ": expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where + ": expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, ParamMap>) {
      if (!v.is_object()) throw ConfigError(where + ": expected an object of numbers");
      ParamMap out;
      for (const auto& item : v.items()) out[item.key()] = convert<double>(item.value(), where + "." + item.key());
      return out;
    } else {
      using E = typename T::value_type;
      if (!v.is_array()) throw ConfigError(where + ": expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) out.push_back(convert<E>(v[i], where + "[" + std::to_string(i) + "]"));
      return out;
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline std::vector<Index> powers_of_two(int lo, int hi) {
  std::vector<Index> out;
  for (int k = lo; k <= hi; ++k) out.push_back(Index{1} << k);
  return out;
}

// Per-experiment defaults that differ from the struct defaults.
inline void apply_run_defaults(const std::string& e, RunConfig& r) {
  if (e == "strong-order") {
    r.m = powers_of_two(4, 9);
    r.m_ref = 4096;
    r.samples = 256;
  } else if (e == "she-limit-point") {
    r.m = {256};
    r.m_ref = 16384;
    r.samples = 4000;
    r.L = 64;
  } else if (e == "galerkin-decay") {
    r.N = powers_of_two(4, 16);
  } else if (e == "galerkin-normalized") {
    r.N = {4, 8, 16, 32};
    r.samples = 128;
  } else if (e == "fem-rate") {
    r.cells = {8, 16, 32, 64, 128, 256};
    r.mode = "semigroup";
  } else if (e == "fem-full") {
    r.mode = "temporal";
    r.m = {16, 32, 64, 128};
    r.m_ref = 2048;
    r.samples = 48;
  }
}

}  // namespace detail

/// Parses a configuration document. Structural problems raise ConfigError;
/// range and divisibility constraints are left to validate().
inline ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig cfg;
  cfg.raw = doc;
  detail::Section top(doc, "config");
  top.read("experiment", cfg.experiment);
  if (cfg.experiment.empty()) throw ConfigError("config.experiment: missing");
  bool known = false;
  for (const auto& n : experiment_names()) known = known || n == cfg.experiment;
  if (!known) throw ConfigError("config.experiment: unknown experiment '" + cfg.experiment + "'");
  detail::apply_run_defaults(cfg.experiment, cfg.run);

  if (top.has("problem")) {
    auto p = top.sub("problem");
    p.read("K", cfg.problem.K);
    p.read("T", cfg.problem.T);
    if (p.has("x0")) {
      auto x = p.sub("x0");
      x.read("modes", cfg.problem.x0_modes);
      x.read("borderline_gamma", cfg.problem.x0_borderline_gamma);
      x.finish();
    }
    p.read("drift", cfg.problem.drift);
    if (p.has("diffusion")) {
      const json& d = p.raw("diffusion");
      if (d.is_string()) {
        cfg.problem.diffusion = d.get<std::string>();
        cfg.problem.diffusion_params.clear();
      } else {
        detail::Section ds(d, "config.problem.diffusion");
        ds.read("name", cfg.problem.diffusion);
        cfg.problem.diffusion_params.clear();
        ds.read("params", cfg.problem.diffusion_params);
        ds.finish();
      }
    }
    if (p.has("analysis")) {
      auto a = p.sub("analysis");
      a.read("sigma", cfg.problem.analysis.sigma);
      a.read("alpha", cfg.problem.analysis.alpha);
      a.read("beta1", cfg.problem.analysis.beta1);
      a.read("beta2", cfg.problem.analysis.beta2);
      a.read("eta", cfg.problem.analysis.eta);
      a.read("p", cfg.problem.analysis.p);
      a.finish();
    }
    p.read("dealias", cfg.problem.dealias);
    p.finish();
  }
  if (top.has("noise")) {
    auto n = top.sub("noise");
    n.read("q", cfg.noise.q);
    n.read("rate", cfg.noise.rate);
    n.read("rho", cfg.noise.rho);
    n.read("scale", cfg.noise.scale);
    n.read("values", cfg.noise.values);
    n.read("K_noise", cfg.noise.K_noise);
    n.read("seed", cfg.noise.seed);
    n.finish();
  }
  if (top.has("run")) {
    auto r = top.sub("run");
    RunConfig& run = cfg.run;
    r.read("m", run.m);
    r.read("m_ref", run.m_ref);
    r.read("samples", run.samples);
    r.read("r", run.r);
    r.read("L", run.L);
    r.read("m_sim", run.m_sim);
    r.read("m_x", run.m_x);
    r.read("t_eval", run.t_eval);
    r.read("x_eval", run.x_eval);
    r.read("N", run.N);
    r.read("m_fine", run.m_fine);
    r.read("gamma", run.gamma);
    r.read("n_max", run.n_max);
    r.read("cells", run.cells);
    r.read("t", run.t);
    r.read("mode", run.mode);
    r.read("iota", run.iota);
    r.read("meshes", run.meshes);
    r.read("scheme", run.scheme);
    r.read("baseline_diffusion", run.baseline_diffusion);
    r.read("baseline_params", run.baseline_params);
    r.read("max_abort_fraction", run.max_abort_fraction);
    r.read("out", run.out);
    r.finish();
  }
  if (top.has("sode")) {
    auto s = top.sub("sode");
    s.read("lambda", cfg.sode.lambda);
    s.read("mu", cfg.sode.mu);
    s.read("y0", cfg.sode.y0);
    s.read("T", cfg.sode.T);
    s.read("m", cfg.sode.m);
    s.read("m_sim", cfg.sode.m_sim);
    s.read("samples", cfg.sode.samples);
    s.finish();
  }
  if (top.has("tolerances")) {
    const json& t = top.raw("tolerances");
    if (!t.is_object()) throw ConfigError("config.tolerances: expected an object");
    for (const auto& item : t.items()) {
      const std::string where = "config.tolerances." + item.key();
      const json& v = item.value();
      if (!v.is_array() || v.size() != 2) throw ConfigError(where + ": expected [lo, hi] with null for an open end");
      Interval iv;
      if (!v[0].is_null()) iv.lo = detail::Section::convert<double>(v[0], where + "[0]");
      if (!v[1].is_null()) iv.hi = detail::Section::convert<double>(v[1], where + "[1]");
      cfg.tolerances[item.key()] = iv;
    }
  }
  top.finish();
  return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

inline QSpec build_qspec(const ExperimentConfig& cfg) {
  const Index kn = cfg.noise.K_noise > 0 ? cfg.noise.K_noise : cfg.problem.K;
  if (cfg.noise.q == "exponential") return QSpec::exponential(cfg.noise.rate, kn);
  if (cfg.noise.q == "polynomial") return QSpec::polynomial(cfg.noise.rho, cfg.noise.scale, kn);
  if (cfg.noise.q == "explicit") return QSpec::explicit_list(cfg.noise.values);
  throw ConfigError("config.noise.q: unknown spectrum '" + cfg.noise.q + "' (exponential, polynomial, explicit)");
}

inline DriftTerm build_drift(const ExperimentConfig& cfg) {
  try {
    return make_drift(cfg.problem.drift);
  } catch (const InvalidSpec& e) {
    throw ConfigError(std::string("config.problem.drift: ") + e.what());
  }
}

inline DiffusionTerm build_diffusion(const std::string& name, const ParamMap& params, const std::string& where) {
  try {
    return make_diffusion(name, params);
  } catch (const InvalidSpec& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

inline ProblemSpec build_problem(const ExperimentConfig& cfg) {
  const ProblemConfig& p = cfg.problem;
  if (p.K < 1) throw PreconditionError("problem.K must be >= 1");
  SpectralField x0(p.K);
  if (p.x0_borderline_gamma) {
    x0 = BorderlineH1Series(*p.x0_borderline_gamma).truncated(p.K);
  } else {
    if (static_cast<Index>(p.x0_modes.size()) > p.K)
      throw PreconditionError("problem.x0.modes has " + std::to_string(p.x0_modes.size()) + " entries but K = " +
                              std::to_string(p.K));
    Vector c = Vector::Zero(p.K);
    for (std::size_t i = 0; i < p.x0_modes.size(); ++i) c[static_cast<Index>(i)] = p.x0_modes[i];
    x0 = SpectralField(c);
  }
  const DriftTerm f = build_drift(cfg);
  const DiffusionTerm g = build_diffusion(p.diffusion, p.diffusion_params, "config.problem.diffusion");
  return ProblemSpec(p.K, p.T, x0, combine(f, g), build_qspec(cfg), p.analysis, p.dealias);
}

// ---------------------------------------------------------------------------
// Results.

struct Metric {
  std::string name;
  double value = 0.0;
  Interval tol;  // both ends open: informational
  std::string note;

  bool checked() const { return tol.lo.has_value() || tol.hi.has_value(); }
  bool pass() const {
    if (!std::isfinite(value)) return !checked();
    return (!tol.lo || value >= *tol.lo) && (!tol.hi || value <= *tol.hi);
  }
};

struct SampleOutput {
  std::string name;
  std::vector<double> values;
  std::uint64_t first_stream = 0;
  std::size_t streams = 0;
  std::size_t aborted = 0;
};

struct Result {
  std::string experiment;
  std::uint64_t seed = 0;
  std::vector<Metric> metrics;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::vector<SampleOutput> samples;
  json info = json::object();

  bool pass() const {
    for (const auto& m : metrics)
      if (!m.pass()) return false;
    return true;
  }
};

/// Shortest decimal text that reads back to the same double.
inline std::string format_real(double v) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

/// CSV body: header line and rows, no timestamp.
inline std::string csv_body(const Result& r) {
  std::string out;
  for (std::size_t i = 0; i < r.columns.size(); ++i) out += (i ? "," : "") + r.columns[i];
  out += "\n";
  for (const auto& row : r.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + row[i];
    out += "\n";
  }
  return out;
}

inline json metrics_json(const Result& r) {
  json arr = json::array();
  for (const auto& m : r.metrics) {
    json j{{"name", m.name}, {"value", std::isfinite(m.value) ? json(m.value) : json(format_real(m.value))}};
    if (m.checked()) {
      j["tolerance"] = {m.tol.lo ? json(*m.tol.lo) : json(nullptr), m.tol.hi ? json(*m.tol.hi) : json(nullptr)};
      j["status"] = m.pass() ? "PASS" : "FAIL";
    } else {
      j["status"] = "INFO";
    }
    if (!m.note.empty()) j["note"] = m.note;
    arr.push_back(j);
  }
  return arr;
}

// ---------------------------------------------------------------------------
// Validation.

namespace detail {

inline void expect(bool ok, const std::string& constraint) {
  if (!ok) throw PreconditionError("constraint violated: " + constraint);
}

inline std::string index_list(const std::vector<Index>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s + "]";
}

inline void expect_increasing(const std::vector<Index>& v, const std::string& name, std::size_t min_len) {
  expect(v.size() >= min_len, name + " needs at least " + std::to_string(min_len) + " values (got " +
                                  std::to_string(v.size()) + ")");
  for (std::size_t i = 0; i < v.size(); ++i) {
    expect(v[i] >= 1, name + " entries must be >= 1");
    if (i) expect(v[i] > v[i - 1], name + " must be strictly increasing: " + index_list(v));
  }
}

inline void expect_divides(const std::vector<Index>& ms, Index m_ref, const std::string& name) {
  expect(m_ref >= 1, "run.m_ref must be >= 1");
  for (Index m : ms) {
    expect(m < m_ref, name + " entry " + std::to_string(m) + " must be < run.m_ref = " + std::to_string(m_ref));
    expect(m_ref % m == 0,
           name + " entry " + std::to_string(m) + " must divide run.m_ref = " + std::to_string(m_ref));
  }
}

}  // namespace detail

inline std::vector<Index> fem_meshes(const ExperimentConfig& cfg) {
  if (!cfg.run.meshes.empty()) return cfg.run.meshes;
  std::vector<Index> out;
  if (cfg.run.mode == "temporal")
    for (Index m : cfg.run.m) out.push_back(fem_nodes_for(m, cfg.run.iota));
  return out;
}

/// All range and divisibility checks of the dispatched experiment, run
/// before any sampling. Throws PreconditionError naming the failed constraint.
inline void validate(const ExperimentConfig& cfg) {
  using detail::expect;
  const RunConfig& r = cfg.run;
  const std::string& e = cfg.experiment;
  if (e == "sode-limit") {
    const SodeConfig& s = cfg.sode;
    expect(s.lambda < 0.0 && std::isfinite(s.lambda), "sode.lambda must be negative");
    expect(std::isfinite(s.mu) && std::isfinite(s.y0), "sode.mu and sode.y0 must be finite");
    expect(s.T > 0.0 && std::isfinite(s.T), "sode.T must be positive");
    expect(s.m >= 1 && s.m_sim >= 1, "sode.m and sode.m_sim must be >= 1");
    expect(s.samples >= 2, "sode.samples must be >= 2");
    return;
  }

  ProblemSpec prob = [&] {
    try {
      return build_problem(cfg);
    } catch (const InvalidSpec& ex) {
      throw PreconditionError(std::string("constraint violated: ") + ex.what());
    } catch (const InvalidInput& ex) {
      throw PreconditionError(std::string("constraint violated: ") + ex.what());
    }
  }();
  expect(r.max_abort_fraction >= 0.0 && r.max_abort_fraction < 1.0, "run.max_abort_fraction must lie in [0,1)");
  const double T = prob.horizon();
  const Index kn = prob.qspec().noise_modes();

  if (e == "strong-order") {
    detail::expect_increasing(r.m, "run.m", 3);
    detail::expect_divides(r.m, r.m_ref, "run.m");
    expect(r.samples >= 2, "run.samples must be >= 2");
    expect(r.r >= 0.0 && r.r <= prob.analysis().sigma, "run.r must lie in [0, problem.analysis.sigma]");
  } else if (e == "she-limit-point") {
    expect(r.m.size() == 1, "run.m must hold exactly one step count for she-limit-point");
    detail::expect_divides(r.m, r.m_ref, "run.m");
    const Index m_x = r.m_x > 0 ? r.m_x : r.m_ref;
    const Index m_sim = r.m_sim > 0 ? r.m_sim : 4 * r.m_ref;
    expect(r.samples >= 2, "run.samples must be >= 2");
    expect(!r.t_eval || std::abs(*r.t_eval - T) <= 1e-12 * T, "run.t_eval must equal problem.T (the limit is simulated at T)");
    expect(r.x_eval > 0.0 && r.x_eval < 1.0, "run.x_eval must lie in (0,1)");
    expect(r.L >= 1 && r.L <= kn, "run.L must satisfy 1 <= L <= K_noise = " + std::to_string(kn));
    expect(m_x >= 1 && m_sim % m_x == 0, "run.m_x (default m_ref) must divide run.m_sim");
    expect(r.scheme == "factored" || r.scheme == "explicit", "run.scheme must be 'factored' or 'explicit'");
    expect(r.scheme == "explicit" || !cfg.problem.dealias, "run.scheme 'factored' needs problem.dealias = false");
    if (!r.baseline_diffusion.empty())
      build_diffusion(r.baseline_diffusion, r.baseline_params, "config.run.baseline_diffusion");
  } else if (e == "galerkin-decay") {
    detail::expect_increasing(r.N, "run.N", 2);
    expect(r.N.front() >= 2, "run.N entries must be >= 2 (the bound involves ln N)");
    expect(r.N.back() < r.n_max, "run.N entries must be < run.n_max");
    expect(!r.gamma.empty(), "run.gamma must not be empty");
    for (double g : r.gamma) expect(g > 0.5, "run.gamma entries must exceed 1/2");
  } else if (e == "galerkin-normalized") {
    detail::expect_increasing(r.N, "run.N", 2);
    expect(r.N.back() < prob.K(), "run.N entries must be < problem.K = " + std::to_string(prob.K()));
    expect(r.m_fine >= 2 && r.m_fine % 2 == 0, "run.m_fine must be even and >= 2");
    expect(r.samples >= 2, "run.samples must be >= 2");
  } else if (e == "fem-rate") {
    detail::expect_increasing(r.cells, "run.cells", 3);
    expect(r.cells.front() >= 2, "run.cells entries must be >= 2");
    expect(r.t > 0.0 && r.t <= T, "run.t must lie in (0, problem.T]");
    expect(r.mode == "semigroup" || r.mode == "ritz", "run.mode must be 'semigroup' or 'ritz' for fem-rate");
  } else if (e == "fem-full") {
    expect(r.mode == "temporal" || r.mode == "spatial", "run.mode must be 'temporal' or 'spatial' for fem-full");
    expect(r.samples >= 2, "run.samples must be >= 2");
    if (r.mode == "temporal") {
      detail::expect_increasing(r.m, "run.m", 3);
      detail::expect_divides(r.m, r.m_ref, "run.m");
      expect(r.iota > 0.0, "run.iota must be positive");
      expect(fem_meshes(cfg).size() == r.m.size(), "run.meshes must pair with run.m");
    } else {
      expect(r.m.size() == 1, "run.m must hold exactly one step count in spatial mode");
      expect(r.m_ref >= r.m.front() && r.m_ref % r.m.front() == 0, "run.m must divide run.m_ref");
      detail::expect_increasing(r.meshes, "run.meshes", 3);
    }
  } else if (e == "check-conditions") {
    // Nothing beyond a well-formed problem.
  }
}

// ---------------------------------------------------------------------------
// Drivers.

namespace detail {

inline Interval tolerance(const ExperimentConfig& cfg, const std::string& name, Interval fallback) {
  auto it = cfg.tolerances.find(name);
  return it == cfg.tolerances.end() ? fallback : it->second;
}

inline void add_metric(Result& res, const ExperimentConfig& cfg, const std::string& name, double value,
                       Interval fallback = {}, std::string note = {}) {
  res.metrics.push_back({name, value, tolerance(cfg, name, fallback), std::move(note)});
}

inline std::vector<double> squares(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * v[i];
  return out;
}

inline std::vector<std::string> moment_row(const std::string& set, const SampleOutput& s) {
  const auto mom = moment_summary(s.values, {1, 2, 4});
  return {set,
          std::to_string(s.values.size()),
          format_real(mom[0].value),
          format_real(mom[1].value),
          format_real(mom[1].stderr_),
          format_real(mom[2].value)};
}

inline json stream_info(const SampleOutput& s, std::uint64_t seed) {
  return {{"seed", seed}, {"first_stream", s.first_stream}, {"streams", s.streams}, {"aborted", s.aborted}};
}

inline void error_rows(Result& res, const ErrorTable& t, const std::string& xname) {
  res.columns = {xname, "error", "stderr", "samples"};
  for (const auto& row : t.rows)
    res.rows.push_back({format_real(row.x), format_real(row.error), format_real(row.stderr_), std::to_string(row.samples)});
}

inline RateFit fit_table(const std::vector<double>& xs, const ErrorTable& t) {
  std::vector<double> ys;
  for (const auto& row : t.rows) ys.push_back(row.error);
  return fit_rate(xs, ys);
}

inline Result strong_order(const ExperimentConfig& cfg, const MonteCarloOptions& opt) {
  const ProblemSpec prob = build_problem(cfg);
  const RunConfig& r = cfg.run;
  Result res;
  const ErrorTable t = coupled_strong_error(prob, r.m, r.m_ref, r.samples, r.r, opt);
  error_rows(res, t, "m");
  const RateFit fit = fit_table(std::vector<double>(r.m.begin(), r.m.end()), t);
  add_metric(res, cfg, "slope", fit.slope, {-0.6, -0.4}, "log2-log2 slope of the strong error against m");
  add_metric(res, cfg, "fit_residual", fit.residual);
  res.info["streams"] = {{"seed", opt.seed}, {"first_stream", opt.first_stream}, {"streams", r.samples}};
  res.info["aborted"] = t.aborted;
  res.info["p"] = prob.analysis().p;
  res.info["sobolev_index"] = r.r;
  return res;
}

inline Result sode_limit(const ExperimentConfig& cfg, const MonteCarloOptions& opt) {
  const SodeConfig& s = cfg.sode;
  Result res;
  const double target = s.T * s.T / 2.0 * std::pow(s.mu, 4) * s.y0 * s.y0 * std::exp((2.0 * s.lambda + s.mu * s.mu) * s.T);

  MonteCarloOptions err_opt = opt;
  const SampleResult err = gbm_normalized_error_samples(s.lambda, s.mu, s.y0, s.T, s.m, s.samples, err_opt);
  MonteCarloOptions lim_opt = opt;
  lim_opt.first_stream = opt.first_stream + s.samples;
  const SampleResult lim = gbm_limit_samples(s.lambda, s.mu, s.y0, s.T, s.m_sim, s.samples, lim_opt);

  res.samples.push_back({"normalized_error", err.values, err_opt.first_stream, s.samples, err.aborted});
  res.samples.push_back({"limit", lim.values, lim_opt.first_stream, s.samples, lim.aborted});

  const auto e2 = moment_summary(squares(err.values), {1}).front();
  const auto l2 = moment_summary(squares(lim.values), {1}).front();
  const KsResult ks = ks_two_sample(err.values, lim.values);
  add_metric(res, cfg, "second_moment_relative_error", std::abs(e2.value - target) / target, {std::nullopt, 0.10},
             "m E[(Y^m(T) - Y(T))^2] against the closed form");
  add_metric(res, cfg, "ks_statistic", ks.statistic, {std::nullopt, 0.03});
  add_metric(res, cfg, "normalized_second_moment", e2.value);
  add_metric(res, cfg, "limit_second_moment", l2.value);
  add_metric(res, cfg, "closed_form_second_moment", target);
  add_metric(res, cfg, "ks_threshold_5pct", ks.threshold);

  res.columns = {"sample_set", "samples", "mean", "second_moment", "second_moment_stderr", "fourth_moment"};
  res.rows.push_back(moment_row("normalized_error", res.samples[0]));
  res.rows.push_back(moment_row("limit", res.samples[1]));
  res.info["streams"] = {{"normalized_error", stream_info(res.samples[0], opt.seed)},
                         {"limit", stream_info(res.samples[1], opt.seed)}};
  return res;
}

inline Result she_limit_point(const ExperimentConfig& cfg, const MonteCarloOptions& opt) {
  const ProblemSpec prob = build_problem(cfg);
  const RunConfig& r = cfg.run;
  const Index m = r.m.front();
  const Index m_x = r.m_x > 0 ? r.m_x : r.m_ref;
  const Index m_sim = r.m_sim > 0 ? r.m_sim : 4 * r.m_ref;
  const double T = prob.horizon();
  Result res;

  const SampleResult err = normalized_error_samples(prob, m, r.m_ref, T, r.x_eval, r.samples, opt);
  MonteCarloOptions lim_opt = opt;
  lim_opt.first_stream = opt.first_stream + r.samples;
  LimitConfig lc;
  lc.L = r.L;
  lc.m_sim = m_sim;
  lc.scheme = r.scheme == "explicit" ? AuxiliaryScheme::explicit_modes : AuxiliaryScheme::covariance_factor;
  const SampleResult lim = limit_point_samples(prob, m_x, lc, r.x_eval, r.samples, lim_opt);

  res.samples.push_back({"normalized_error", err.values, opt.first_stream, r.samples, err.aborted});
  res.samples.push_back({"limit", lim.values, lim_opt.first_stream, r.samples, lim.aborted});

  const auto e2 = moment_summary(squares(err.values), {1}).front();
  const auto l2 = moment_summary(squares(lim.values), {1}).front();
  const KsResult ks = ks_two_sample(err.values, lim.values);
  const double contamination = std::sqrt(static_cast<double>(m) / static_cast<double>(r.m_ref));
  add_metric(res, cfg, "ks_statistic", ks.statistic, {std::nullopt, 0.08});
  if (l2.value > 0.0)
    add_metric(res, cfg, "second_moment_relative_gap", std::abs(e2.value - l2.value) / l2.value, {std::nullopt, 0.15},
               "|E[err^2] - E[U^2]| / E[U^2]");
  add_metric(res, cfg, "normalized_second_moment", e2.value);
  add_metric(res, cfg, "limit_second_moment", l2.value);
  add_metric(res, cfg, "reference_contamination_bound", contamination, {}, "sqrt(m / m_ref), RMS factor");
  add_metric(res, cfg, "ks_threshold_5pct", ks.threshold);

  const DiffusionTerm g = build_diffusion(cfg.problem.diffusion, cfg.problem.diffusion_params, "config.problem.diffusion");
  if (g.dg_vanishes) {
    double worst = 0.0;
    for (double v : lim.values) worst = std::max(worst, std::abs(v));
    add_metric(res, cfg, "limit_max_abs", worst, {std::nullopt, 0.0}, "derivative-free diffusion: U vanishes");
  }

  res.columns = {"sample_set", "samples", "mean", "second_moment", "second_moment_stderr", "fourth_moment"};
  res.rows.push_back(moment_row("normalized_error", res.samples[0]));
  res.rows.push_back(moment_row("limit", res.samples[1]));
  res.info["streams"] = {{"normalized_error", stream_info(res.samples[0], opt.seed)},
                         {"limit", stream_info(res.samples[1], opt.seed)}};

  if (!r.baseline_diffusion.empty()) {
    const DiffusionTerm b = build_diffusion(r.baseline_diffusion, r.baseline_params, "config.run.baseline_diffusion");
    const ProblemSpec base = prob.with_nemytskii(combine(build_drift(cfg), b));
    const SampleResult be = normalized_error_samples(base, m, r.m_ref, T, r.x_eval, r.samples, opt);
    res.samples.push_back({"baseline_normalized_error", be.values, opt.first_stream, r.samples, be.aborted});
    const double ratio = variance(err.values) / variance(be.values);
    add_metric(res, cfg, "variance_ratio_to_baseline", ratio, {std::nullopt, 0.10},
               "variance of the normalized error relative to the baseline diffusion on identical streams");
    res.rows.push_back(moment_row("baseline_normalized_error", res.samples[2]));
    res.info["streams"]["baseline_normalized_error"] = stream_info(res.samples[2], opt.seed);
  }
  res.info["m"] = m;
  res.info["m_x"] = m_x;
  res.info["m_sim"] = m_sim;
  return res;
}

inline Result galerkin_decay(const ExperimentConfig& cfg) {
  const RunConfig& r = cfg.run;
  Result res;
  res.columns = {"gamma", "N", "normalized_tail", "bound"};
  std::vector<long> Ns(r.N.begin(), r.N.end());
  for (double gamma : r.gamma) {
    const BorderlineH1Series series(gamma);
    const auto tails = series.tail_norms(Ns, r.n_max);
    int violations = 0, increases = 0;
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < Ns.size(); ++i) {
      const double v = std::sqrt(laplacian_eigenvalue(Ns[i] + 1)) * tails[i];
      const double bound = series.decay_bound(Ns[i]);
      if (v > bound) ++violations;
      if (v >= prev) ++increases;
      prev = v;
      res.rows.push_back({format_real(gamma), std::to_string(Ns[i]), format_real(v), format_real(bound)});
    }
    const std::string tag = "gamma=" + format_real(gamma);
    add_metric(res, cfg, "bound_violations[" + tag + "]", violations, {std::nullopt, 0.0});
    add_metric(res, cfg, "non_decreasing_steps[" + tag + "]", increases, {std::nullopt, 0.0});
  }
  res.info["n_max"] = r.n_max;
  return res;
}

inline Result galerkin_normalized(const ExperimentConfig& cfg, const MonteCarloOptions& opt) {
  const ProblemSpec prob = build_problem(cfg);
  const RunConfig& r = cfg.run;
  const double sigma = prob.analysis().sigma;
  Result res;
  const ErrorTable t = galerkin_strong_error(prob, r.N, r.m_fine, r.samples, opt);
  res.columns = {"N", "lambda_next", "error", "stderr", "normalized_error", "samples"};
  std::vector<double> lam, err;
  int increases = 0;
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& row : t.rows) {
    const double l = laplacian_eigenvalue(static_cast<Index>(row.x) + 1);
    const double v = std::pow(l, (1.0 + sigma) / 2.0) * row.error;
    if (v >= prev) ++increases;
    prev = v;
    lam.push_back(l);
    err.push_back(row.error);
    res.rows.push_back({format_real(row.x), format_real(l), format_real(row.error), format_real(row.stderr_),
                        format_real(v), std::to_string(row.samples)});
  }
  add_metric(res, cfg, "normalized_non_decreasing_steps", increases, {std::nullopt, 0.0},
             "lambda_{N+1}^{(1+sigma)/2} times the strong error must decrease in N");
  add_metric(res, cfg, "slope_vs_lambda", fit_rate(lam, err).slope, {std::nullopt, -(1.0 + sigma) / 2.0 + 0.15});
  // Temporal floor: the K-mode scheme at m_fine/2 against m_fine on the same streams.
  const std::vector<Index> half{r.m_fine / 2};
  const ErrorTable floor = coupled_strong_error(prob, half, r.m_fine, r.samples, 0.0, opt);
  add_metric(res, cfg, "temporal_floor", floor.rows.front().error, {},
             "strong error between m_fine/2 and m_fine steps");
  res.info["streams"] = {{"seed", opt.seed}, {"first_stream", opt.first_stream}, {"streams", r.samples}};
  res.info["m_fine"] = r.m_fine;
  return res;
}

inline Result fem_rate(const ExperimentConfig& cfg) {
  const ProblemSpec prob = build_problem(cfg);
  const RunConfig& r = cfg.run;
  Result res;
  res.columns = {"h", "l2_error"};
  std::vector<double> cells, err;
  const SpectralField& x = prob.x0();
  const SpectralField exact = apply_semigroup(x, r.t);
  for (Index n : r.cells) {
    const FemOperators ops = assemble(FemMesh(n - 1));
    const double e = r.mode == "ritz" ? fem_l2_distance(ops, ritz_project(ops, x), x)
                                      : fem_l2_distance(ops, fem_semigroup(ops, l2_project(ops, x), r.t), exact);
    cells.push_back(static_cast<double>(n));
    err.push_back(e);
    res.rows.push_back({format_real(ops.mesh.h()), format_real(e)});
  }
  add_metric(res, cfg, "slope_vs_cells", fit_rate(cells, err).slope, {-2.2, -1.8},
             "log2-log2 slope against 1/h; the error behaves like h^2");
  res.info["t"] = r.t;
  res.info["mode"] = r.mode;
  return res;
}

inline Result fem_full(const ExperimentConfig& cfg, const MonteCarloOptions& opt) {
  const ProblemSpec prob = build_problem(cfg);
  const RunConfig& r = cfg.run;
  Result res;
  std::vector<Index> ms, meshes = fem_meshes(cfg);
  if (r.mode == "temporal")
    ms = r.m;
  else
    ms.assign(meshes.size(), r.m.front());
  const ErrorTable t = fem_strong_error(prob, ms, meshes, r.m_ref, r.samples, opt);
  res.columns = {"m", "h", "error", "stderr", "samples"};
  std::vector<double> xs;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    res.rows.push_back({std::to_string(ms[i]), format_real(row.x), format_real(row.error), format_real(row.stderr_),
                        std::to_string(row.samples)});
    xs.push_back(r.mode == "temporal" ? static_cast<double>(ms[i]) : 1.0 / row.x);
  }
  const RateFit fit = fit_table(xs, t);
  if (r.mode == "temporal")
    add_metric(res, cfg, "slope_vs_m", fit.slope, {-0.65, -0.35}, "meshes with h close to m^-iota");
  else
    add_metric(res, cfg, "slope_vs_cells", fit.slope, {std::nullopt, -(1.0 + prob.analysis().sigma) + 0.25},
               "log2-log2 slope against 1/h at fixed m");
  res.info["streams"] = {{"seed", opt.seed}, {"first_stream", opt.first_stream}, {"streams", r.samples}};
  res.info["mode"] = r.mode;
  return res;
}

inline Result check_conditions_experiment(const ExperimentConfig& cfg) {
  const QSpec q = build_qspec(cfg);
  const DriftTerm f = build_drift(cfg);
  const DiffusionTerm g = build_diffusion(cfg.problem.diffusion, cfg.problem.diffusion_params, "config.problem.diffusion");
  const ConditionReport rep = check_conditions(q, declared_bounds(f, g));
  Result res;
  res.columns = {"condition", "status", "detail"};
  int failed = 0, partial = 0;
  for (const auto& c : rep.conditions) {
    if (c.status == ConditionStatus::fail) ++failed;
    if (c.status == ConditionStatus::partial) ++partial;
    std::string d = c.detail;
    for (char& ch : d)
      if (ch == ',' || ch == '\n') ch = ';';
    res.rows.push_back({c.name, to_string(c.status), d});
  }
  add_metric(res, cfg, "failed_conditions", failed, {std::nullopt, 0.0});
  add_metric(res, cfg, "partial_conditions", partial);
  add_metric(res, cfg, "trace", rep.trace.total());
  add_metric(res, cfg, "c1_weighted_trace", rep.c1_weighted.total());
  add_metric(res, cfg, "gamma_upper", rep.gamma_upper);
  res.info["overall"] = to_string(rep.overall());
  res.info["admissible_gamma_range"] = "(0, " + format_real(rep.gamma_upper) + ")";
  res.info["trace"] = {{"partial", rep.trace.partial}, {"tail_bound", rep.trace.tail}, {"finite", rep.trace.finite}};
  return res;
}

}  // namespace detail

/// Validates and runs the configured experiment.
inline Result run_experiment(const ExperimentConfig& cfg, std::uint64_t seed, unsigned workers) {
  validate(cfg);
  MonteCarloOptions opt;
  opt.seed = seed;
  opt.workers = workers;
  opt.max_abort_fraction = cfg.run.max_abort_fraction;
  Result res;
  const std::string& e = cfg.experiment;
  if (e == "strong-order") res = detail::strong_order(cfg, opt);
  else if (e == "sode-limit") res = detail::sode_limit(cfg, opt);
  else if (e == "she-limit-point") res = detail::she_limit_point(cfg, opt);
  else if (e == "galerkin-decay") res = detail::galerkin_decay(cfg);
  else if (e == "galerkin-normalized") res = detail::galerkin_normalized(cfg, opt);
  else if (e == "fem-rate") res = detail::fem_rate(cfg);
  else if (e == "fem-full") res = detail::fem_full(cfg, opt);
  else res = detail::check_conditions_experiment(cfg);
  res.experiment = e;
  res.seed = seed;
  return res;
}

}  // namespace spdelab
