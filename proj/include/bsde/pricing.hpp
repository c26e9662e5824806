#pragma once

// Batch pricing: JSON configuration, the solver runs on one seeded ensemble,
// and the JSON / CSV report. Also the named self-check suite behind --verify.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsde/claim.hpp"
#include "bsde/sde.hpp"

namespace bsde {

inline constexpr int kSchemaVersion = 1;

struct MarketConfig {
  double r = 0.05;
  std::optional<std::vector<double>> b;
  std::vector<std::vector<double>> sigma{{0.2}};
  std::optional<std::vector<double>> theta;
  std::vector<double> s0{100.0};

  MarketModel build() const;
};

struct GridConfig {
  double T = 1.0;
  std::size_t N = 50;
};

struct EnsembleConfig {
  std::size_t M = 100000;
  std::uint64_t seed = 42;
};

struct SolverTolerances {
  double picard_tol = 1e-6;
  std::size_t picard_max_iter = 50;
  double yosida_epsilon = 1e-4;
  double yosida_inner_tol = 1e-10;
  std::size_t yosida_max_inner = 200;
  std::size_t minimizer_max_outer = 25;
  std::size_t family_size = 8;
  std::size_t basis_degree = 3;
  std::optional<double> ridge;
  bool theta_hat = false; ///< also report Theta-hat for the yosida run
};

struct OutputConfig {
  std::optional<std::string> path;
  std::string format = "json"; ///< json | csv
};

struct PricingConfig {
  MarketConfig market;
  ClaimSpec claim{ClaimType::call, 100.0, 0, {}};
  GridConfig grid;
  EnsembleConfig ensemble;
  std::vector<std::string> solvers{"closed_form", "picard"};
  SolverTolerances tolerances;
  OutputConfig output;

  /// Semantic checks (ranges, solver names, claim/market shapes). Throws ConfigError.
  void validate() const;
};

/// Strict parse: unknown keys at any level and a missing or different
/// schema_version raise ConfigError. Missing optional fields keep defaults.
PricingConfig parse_config(const nlohmann::json& j);
PricingConfig load_config(const std::string& path);
nlohmann::ordered_json config_to_json(const PricingConfig& cfg);

struct SolverRun {
  std::string solver;
  double price = 0.0;
  double std_err = 0.0;
  std::vector<double> hedge0;          ///< amount of money held in each asset at t = 0
  std::vector<double> delta0;          ///< hedge0 divided by the spot: number of shares
  double diag_E = 0.0;                 ///< E-hat at (xi, F(Y, Z)), a lower bound on the functional
  double diag_E_se = 0.0;
  double diag_energy = 0.0;            ///< energy-identity residual against the zero pair
  double diag_driver_match = 0.0;
  std::vector<double> trace;           ///< Picard increments, or E-hat per accepted minimizer step
  std::size_t iterations = 0;
  double transform_alpha = 0.0;
  std::optional<double> theta_hat;
  std::optional<double> theta_hat_se;
  double seconds = 0.0;
};

struct CrossSolverDelta {
  std::string a, b;
  double delta = 0.0;        ///< price(a) - price(b)
  double combined_se = 0.0;  ///< sqrt(se_a^2 + se_b^2)
};

struct PricingReport {
  PricingConfig config;
  std::vector<SolverRun> runs;
  std::vector<CrossSolverDelta> cross;
  std::vector<std::string> warnings;
  double seconds_simulation = 0.0;
  double seconds_regression = 0.0;
  double seconds_total = 0.0;
};

/// Runs every selected solver on the same ensemble. Library errors from a
/// solver propagate (the CLI maps them to exit code 3).
PricingReport price_claim(const PricingConfig& cfg);

nlohmann::ordered_json report_to_json(const PricingReport& report);
/// Header solver,price,std_err,hedge0,diag_E,diag_energy,diag_driver_match,seconds.
std::string report_to_csv(const PricingReport& report);

// ------------------------------------------------------------------ verify

struct VerifyOptions {
  std::size_t M = 4000;
  std::size_t N = 20;
  std::uint64_t seed = 42;
  double lip_L_scale = 1.0; ///< < 1 understates the declared Lipschitz constant
};

struct VerifyRow {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

std::vector<VerifyRow> verify_suite(const VerifyOptions& opts = {});
nlohmann::ordered_json verify_to_json(const std::vector<VerifyRow>& rows);
std::string verify_to_csv(const std::vector<VerifyRow>& rows);

/// RFC 4180 field quoting.
std::string csv_field(const std::string& s);

} // namespace bsde
