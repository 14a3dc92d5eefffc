#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "kslab/diagnostics.hpp"
#include "kslab/experiments.hpp"
#include "kslab/integrator.hpp"

namespace fs = std::filesystem;
using namespace kslab;

namespace {

constexpr int kExitFailedCheck = 1;
constexpr int kExitConfig = 2;
constexpr int kExitBlowUp = 3;
constexpr int kExitOutputExists = 4;

std::string default_output_root() {
  const char* env = std::getenv("KSLAB_OUTPUT_ROOT");
  return env && *env ? env : "runs";
}

// Accepts plain numbers and multiples of pi such as "6.5pi" or "pi".
double parse_chi(std::string s) {
  double scale = 1.0;
  if (s.size() >= 2 && s.substr(s.size() - 2) == "pi") {
    scale = kPi;
    s.resize(s.size() - 2);
    if (s.empty()) return kPi;
  }
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ConfigError("chi: cannot parse '" + s + "'");
  return v * scale;
}

int simulate(const std::string& config_path, const std::string& out_root, int jobs, bool overwrite) {
  const RunConfig cfg = load_run_config(config_path);
  const fs::path dir = fs::path(out_root) / cfg.experiment_name;
  if (fs::exists(dir) && !fs::is_empty(dir) && !overwrite) {
    std::cerr << "error: " << dir.string() << " already exists (use --overwrite to replace it)\n";
    return kExitOutputExists;
  }
  const std::string started = utc_timestamp();
  RunOptions opts;
  opts.jobs = jobs;
  const RunResult result = run_experiment(cfg, opts);
  const std::string finished = utc_timestamp();
  if (overwrite && fs::exists(dir)) fs::remove_all(dir);
  write_run_outputs(dir, result, started, finished);
  if (!result.ok()) {
    std::cerr << "error: numerical blow-up in " << result.failures.size() << " replica(s); partial outputs in "
              << dir.string() << '\n';
    for (const auto& f : result.failures) std::cerr << "  " << f << '\n';
    return kExitBlowUp;
  }
  std::cout << dir.string() << '\n';
  return 0;
}

int diagnose(const std::string& run_dir, const std::string& suite) {
  std::ifstream in(fs::path(run_dir) / "diagnostics.csv");
  if (!in) throw ConfigError("no diagnostics.csv in '" + run_dir + "'");
  const auto report = read_diagnostics_csv(in);
  const auto outcomes = evaluate_suite(suite, report);
  bool all = true;
  for (const auto& o : outcomes) {
    std::cout << (o.pass ? "PASS " : "FAIL ") << o.check << ": " << o.detail << '\n';
    all = all && o.pass;
  }
  return all ? 0 : kExitFailedCheck;
}

void print_regimes(int n, double chi) {
  const auto table = classify_regimes(n, chi);
  std::cout << "N = " << n << ", chi = " << format_real(chi) << " (" << format_real(chi / kPi) << " pi)\n";
  std::cout << "k,bessel_dimension,regime\n";
  for (int k = 2; k <= n; ++k) {
    std::cout << k << ',' << format_real(bessel_dimension(n, chi, k)) << ',' << to_string(table.at(k)) << '\n';
  }
  if (table.roots) {
    std::cout << "x_minus = " << format_real(table.roots->x_minus) << "\nx_plus = " << format_real(table.roots->x_plus)
              << '\n';
  } else {
    std::cout << "no real roots of delta(k) = 2\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic Keller-Segel particle experiments"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "Run an experiment from a JSON config");
  std::string config_path, out_root = default_output_root();
  int jobs = 1;
  bool overwrite = false;
  sim->add_option("--config", config_path, "Config file")->required();
  sim->add_option("--out", out_root, "Output root (default: $KSLAB_OUTPUT_ROOT or ./runs)");
  sim->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  sim->add_flag("--overwrite", overwrite, "Replace an existing run directory");

  auto* pre = app.add_subcommand("preset", "Print a preset config");
  std::string preset_name;
  pre->add_option("--name", preset_name, "Preset name")->required();

  auto* diag = app.add_subcommand("diagnose", "Evaluate a check suite on a finished run");
  std::string run_dir, suite;
  diag->add_option("--run", run_dir, "Run directory")->required();
  diag->add_option("--suite", suite, "Suite name (same as the preset names)")->required();

  auto* reg = app.add_subcommand("regimes", "Print the collision regime table");
  int n = 0;
  std::string chi_text;
  reg->add_option("--n", n, "Number of particles")->required();
  reg->add_option("--chi", chi_text, "Sensitivity, e.g. 20.42 or 6.5pi")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return simulate(config_path, out_root, jobs, overwrite);
    if (*pre) {
      std::cout << to_json(preset(preset_name)).dump(2) << '\n';
      return 0;
    }
    if (*diag) return diagnose(run_dir, suite);
    if (*reg) {
      print_regimes(n, parse_chi(chi_text));
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailedCheck;
  }
  return 0;
}
