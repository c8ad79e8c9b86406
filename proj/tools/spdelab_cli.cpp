// spdelab command line driver: run, check and catalog.

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "spdelab/experiments.hpp"

namespace fs = std::filesystem;
using namespace spdelab;

namespace {

enum Exit : int { kOk = 0, kToleranceFailure = 1, kConfigError = 2, kPrecondition = 3, kDivergence = 4 };

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Object id git would assign to the file as a blob.
std::string git_blob_sha1(const std::string& bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + std::string(1, '\0');
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::uint64_t parse_seed(const std::string& text, const std::string& where) {
  try {
    std::size_t pos = 0;
    if (text.empty() || text[0] == '-') throw std::invalid_argument("negative");
    const unsigned long long v = std::stoull(text, &pos, 10);
    if (pos != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(where + ": seed must be a nonnegative integer, got '" + text + "'");
  }
}

struct Loaded {
  ExperimentConfig cfg;
  std::string bytes;
  std::string stem;
};

Loaded load(const std::string& path) {
  Loaded l;
  l.bytes = read_file(path);
  l.cfg = parse_config_text(l.bytes);
  l.stem = fs::path(path).stem().string();
  return l;
}

void print_metrics(const Result& res) {
  for (const auto& m : res.metrics) {
    std::cout << (m.checked() ? (m.pass() ? "PASS " : "FAIL ") : "INFO ") << m.name << " = " << format_real(m.value);
    if (m.checked())
      std::cout << "  [" << (m.tol.lo ? format_real(*m.tol.lo) : "-inf") << ", "
                << (m.tol.hi ? format_real(*m.tol.hi) : "inf") << "]";
    std::cout << "\n";
  }
}

int cmd_run(const std::string& path, const std::optional<std::uint64_t>& seed_flag, unsigned workers,
            const std::string& out_flag) {
  const Loaded l = load(path);
  std::uint64_t seed = 0;
  std::string seed_source = "default";
  if (seed_flag) {
    seed = *seed_flag;
    seed_source = "flag";
  } else if (const char* env = std::getenv("SPDELAB_SEED"); env && *env) {
    seed = parse_seed(env, "SPDELAB_SEED");
    seed_source = "environment";
  } else if (l.cfg.noise.seed) {
    seed = *l.cfg.noise.seed;
    seed_source = "config";
  }
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());

  const fs::path out = !out_flag.empty() ? fs::path(out_flag) : fs::path(l.cfg.run.out.empty() ? "results" : l.cfg.run.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw PreconditionError("output directory '" + out.string() + "' is not writable");

  const Result res = run_experiment(l.cfg, seed, workers);

  const fs::path csv = out / (l.stem + ".csv");
  {
    std::ofstream f(csv, std::ios::binary);
    f << "# generated " << utc_timestamp() << "\n" << csv_body(res);
    if (!f) throw PreconditionError("cannot write '" + csv.string() + "'");
  }
  json samples = json::array();
  for (const auto& s : res.samples) {
    const fs::path sp = out / (l.stem + "_" + s.name + ".txt");
    write_sample_file(sp.string(), s.values);
    samples.push_back({{"name", s.name}, {"path", sp.filename().string()}, {"count", s.values.size()},
                       {"seed", seed}, {"first_stream", s.first_stream}, {"streams", s.streams}, {"aborted", s.aborted}});
  }
  json report{{"experiment", res.experiment},
              {"config", l.cfg.raw},
              {"config_hash", git_blob_sha1(l.bytes)},
              {"config_path", path},
              {"seed", seed},
              {"seed_source", seed_source},
              {"workers", workers},
              {"metrics", metrics_json(res)},
              {"status", res.pass() ? "PASS" : "FAIL"},
              {"csv", {{"path", csv.filename().string()}, {"columns", res.columns}}},
              {"samples", samples},
              {"info", res.info},
              {"generated", utc_timestamp()}};
  const fs::path rp = out / (l.stem + ".json");
  std::ofstream f(rp, std::ios::binary);
  f << report.dump(2) << "\n";
  if (!f) throw PreconditionError("cannot write '" + rp.string() + "'");

  std::cout << res.experiment << " seed=" << seed << " (" << seed_source << ") config " << git_blob_sha1(l.bytes)
            << "\n";
  print_metrics(res);
  std::cout << (res.pass() ? "PASS" : "FAIL") << "  report " << rp.string() << "\n";
  return res.pass() ? kOk : kToleranceFailure;
}

int cmd_check(const std::string& path) {
  const Loaded l = load(path);
  validate(l.cfg);
  std::cout << "OK " << l.cfg.experiment << " (" << path << ", " << git_blob_sha1(l.bytes) << ")\n";
  return kOk;
}

int cmd_catalog() {
  std::cout << "drift terms:\n";
  for (const auto& name : drift_names()) {
    const DriftTerm d = make_drift(name);
    std::cout << "  " << d.name << "  " << d.formula << "  sup|df/dy|=" << format_real(d.sup_df)
              << " sup|d2f/dy2|=" << format_real(d.sup_d2f) << "\n";
  }
  std::cout << "diffusion terms (default parameters):\n";
  for (const auto& name : diffusion_names()) {
    const DiffusionTerm g = make_diffusion(name);
    std::cout << "  " << g.name << "  " << g.formula << "  params:";
    for (const auto& p : g.params) std::cout << " " << p;
    std::cout << "  sup|g(.,0)|=" << format_real(g.sup_g0) << " sup|dg/dy|=" << format_real(g.sup_dg)
              << " sup|d2g/dy2|=" << format_real(g.sup_d2g) << " sup|d2g/dxdy|=" << format_real(g.sup_dgdx) << "\n";
  }
  std::cout << "experiments:";
  for (const auto& e : experiment_names()) std::cout << " " << e;
  std::cout << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spdelab: exponential Euler experiments for semilinear stochastic heat equations"};
  app.require_subcommand(1);

  std::string run_path, check_path, out_dir;
  std::optional<std::uint64_t> seed;
  unsigned workers = 1;
  auto* run = app.add_subcommand("run", "Run the experiment described by a JSON config");
  run->add_option("config", run_path, "Config file")->required();
  run->add_option("--seed", seed, "Seed (overrides SPDELAB_SEED and the config)");
  run->add_option("--workers", workers, "Worker threads (0: all cores)");
  run->add_option("--out", out_dir, "Output directory");
  auto* check = app.add_subcommand("check", "Validate a config without running it");
  check->add_option("config", check_path, "Config file")->required();
  auto* cat = app.add_subcommand("catalog", "List built-in drift and diffusion terms");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(run_path, seed, workers, out_dir);
    if (*check) return cmd_check(check_path);
    if (*cat) return cmd_catalog();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DivergenceRateExceeded& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kDivergence;
  } catch (const PreconditionError& e) {
    std::cerr << "precondition: " << e.what() << "\n";
    return kPrecondition;
  } catch (const InvalidInput& e) {
    std::cerr << "precondition: " << e.what() << "\n";
    return kPrecondition;
  } catch (const InvalidSpec& e) {
    std::cerr << "precondition: " << e.what() << "\n";
    return kPrecondition;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDivergence;
  }
  return kOk;
}
