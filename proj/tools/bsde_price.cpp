// bsde_price: price a European claim with the selected BSDE solvers.
//
// Exit codes: 0 success, 1 usage, 2 configuration error, 3 solver failure,
// 4 verify suite reported a failing row.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bsde/error.hpp"
#include "bsde/pricing.hpp"

namespace {

void print_trace(const std::vector<double>& trace) {
  std::cerr << "trace:";
  for (double v : trace) std::cerr << ' ' << v;
  std::cerr << '\n';
}

int emit(const std::string& text, const std::optional<std::string>& path) {
  if (!path) {
    std::cout << text;
    return 0;
  }
  std::ofstream out(*path, std::ios::binary);
  if (!out) {
    std::cerr << "error: cannot write " << *path << '\n';
    return 2;
  }
  out << text;
  return 0;
}

std::uint64_t parse_seed(const char* s) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != std::string(s).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw bsde::ConfigError(std::string("BSDE_SEED must be a non-negative integer (got \"") + s + "\")");
  }
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Price a European claim by BSDE solvers on a simulated market"};
  std::string config_path;
  std::vector<std::string> solvers;
  std::size_t paths = 0, steps = 0;
  std::uint64_t seed = 0;
  std::string out_path, format;
  bool verify = false;
  double lip_scale = 1.0;

  app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--solver", solvers, "closed_form, picard, variational or yosida (repeatable)");
  auto* o_paths = app.add_option("--paths", paths, "number of Monte Carlo paths M");
  auto* o_steps = app.add_option("--steps", steps, "number of time steps N");
  auto* o_seed = app.add_option("--seed", seed, "ensemble seed");
  app.add_option("--out", out_path, "write the report here instead of stdout");
  app.add_option("--format", format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  app.add_flag("--verify", verify, "run the self-check suite instead of pricing");
  app.add_option("--verify-lip-scale", lip_scale, "scale the declared Lipschitz constant in --verify")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  bsde::PricingConfig cfg;
  try {
    if (!config_path.empty()) cfg = bsde::load_config(config_path);
    if (!solvers.empty()) cfg.solvers = solvers;
    if (*o_paths) cfg.ensemble.M = paths;
    if (*o_steps) cfg.grid.N = steps;
    if (*o_seed) cfg.ensemble.seed = seed;
    if (!out_path.empty()) cfg.output.path = out_path;
    if (!format.empty()) cfg.output.format = format;
    if (const char* env = std::getenv("BSDE_SEED")) cfg.ensemble.seed = parse_seed(env);
    if (!verify) cfg.validate();
  } catch (const bsde::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }

  if (verify) {
    bsde::VerifyOptions vo;
    vo.seed = cfg.ensemble.seed;
    if (*o_paths) vo.M = paths;
    if (*o_steps) vo.N = steps;
    vo.lip_L_scale = lip_scale;
    std::vector<bsde::VerifyRow> rows;
    try {
      rows = bsde::verify_suite(vo);
    } catch (const bsde::Error& e) {
      std::cerr << "verify suite aborted: " << e.what() << '\n';
      return 3;
    }
    const std::string text =
        cfg.output.format == "csv" ? bsde::verify_to_csv(rows) : bsde::verify_to_json(rows).dump(2) + "\n";
    if (const int rc = emit(text, cfg.output.path)) return rc;
    for (const auto& r : rows)
      if (!r.passed) {
        std::cerr << "FAIL " << r.name << ": " << r.value << " (tolerance " << r.tolerance << ")\n";
        return 4;
      }
    return 0;
  }

  bsde::PricingReport report;
  try {
    report = bsde::price_claim(cfg);
  } catch (const bsde::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const bsde::NonConvergence& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    print_trace(e.trace());
    return 3;
  } catch (const bsde::StallError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    print_trace(e.trace());
    return 3;
  } catch (const bsde::Error& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return 3;
  }
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  const std::string text =
      cfg.output.format == "csv" ? bsde::report_to_csv(report) : bsde::report_to_json(report).dump(2) + "\n";
  return emit(text, cfg.output.path);
}
